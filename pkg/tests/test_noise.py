import numpy as np
import pytest

from stochrecon import (ArgumentError, ConstructionError, CovarianceMeasure, FiltrationCut, Grid,
                        NoiseField, RandomField, TestFunction, condition_past,
                        sample_holder_field, sample_martingale_measure, sample_noise,
                        sample_white_noise)
from stochrecon.noise import martingale_value


def test_white_noise_variance_is_l2_norm():
    g = Grid([0.0], [1.0], 8)
    psi = TestFunction.bump([0.1], [0.9])
    xi = sample_white_noise(g, 1, n_paths=20000)
    vals = xi.evaluate(psi)
    expected = psi.on(g).norm() ** 2
    se = np.std(vals ** 2) / np.sqrt(vals.size)
    assert abs(np.mean(vals ** 2) - expected) < 4 * se
    assert abs(np.mean(vals)) < 4 * np.std(vals) / np.sqrt(vals.size)


def test_white_noise_is_deterministic_in_seed():
    g = Grid([0.0], [1.0], 6)
    a = sample_white_noise(g, 7, 3).cells
    b = sample_white_noise(g, 7, 3).cells
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_white_noise(g, 8, 3).cells)


def test_condition_past_zeroes_future_cells():
    g = Grid([0.0, 0.0], [1.0, 1.0], 3)
    xi = sample_white_noise(g, 0, 2)
    past = condition_past(xi, FiltrationCut(0, 0.5))
    assert np.array_equal(past.cells[:, :4], xi.cells[:, :4])
    assert np.all(past.cells[:, 4:] == 0.0)
    assert condition_past(xi, FiltrationCut(1, 2.0)) is xi
    with pytest.raises(ArgumentError):
        condition_past(xi, FiltrationCut(2, 0.5))


def test_save_and_load_round_trip(tmp_path):
    g = Grid([0.0], [2.0], 5)
    xi = sample_white_noise(g, 11, 4)
    prefix = str(tmp_path / "xi")
    xi.save(prefix)
    back = NoiseField.load(prefix)
    assert back.grid == g and np.array_equal(back.cells, xi.cells)


def test_kernel_noise_covariance():
    g = Grid([0.0], [1.0], 2)
    K = CovarianceMeasure.constant(2.0)
    xi = sample_noise(K, g, 3, n_paths=40000)
    # constant kernel: total mass has variance 2
    total = xi.cells.sum(axis=1)
    assert np.var(total) == pytest.approx(2.0, rel=0.05)


def test_indefinite_kernel_rejected():
    g = Grid([0.0], [1.0], 2)
    K = CovarianceMeasure("kernel", lambda x, y: -np.ones(np.broadcast_shapes(x.shape[:-1], y.shape[:-1])))
    with pytest.raises(ConstructionError):
        sample_noise(K, g, 0)


def test_martingale_covariance_min_times_kernel():
    g = Grid([0.0, 0.0], [1.0, 1.0], [4, 2])
    W = sample_martingale_measure(CovarianceMeasure.white(1), g, 5, n_paths=40000)
    a = martingale_value(W, 0.25, [0.0], [0.5])
    b = martingale_value(W, 0.75, [0.0], [1.0])
    # min(s, t) * |A cap B| = 0.25 * 0.5
    assert np.mean(a * b) == pytest.approx(0.125, abs=4 * np.std(a * b) / np.sqrt(a.size))


def test_martingale_requires_space_axis():
    with pytest.raises(ArgumentError):
        sample_martingale_measure(CovarianceMeasure.white(1), Grid([0.0], [1.0], 3), 0)


def test_holder_modulus_scales_with_alpha():
    g = Grid([0.0], [4.0], 10)
    X = sample_holder_field(0.5, g, [0], 2, n_paths=400, horizon=4.0)
    lags = 2.0 ** -np.arange(3, 8)
    mod = X.modulus(lags)
    slope = np.polyfit(np.log2(lags), np.log2(mod), 1)[0]
    assert abs(slope - 0.5) < 0.1


def test_holder_field_is_adapted_bitwise():
    g = Grid([0.0], [2.0], 8)
    X = sample_holder_field(0.75, g, [0], 4, n_paths=2)
    t = 1.0
    zeta = X._zeta.copy()
    future = X._ext.centers(0) > t
    zeta[:, future] += 5.0
    from stochrecon.noise import _moving_average
    perturbed = _moving_average(zeta, X._kernel, X._first, X._ext, g)
    it = g.node_index(0, t)
    assert np.allclose(perturbed[:, :it + 1], X.values[:, :it + 1], atol=1e-9)


def test_conditioned_field_agrees_on_past():
    g = Grid([0.0], [2.0], 8)
    X = sample_holder_field(0.75, g, [0], 4, n_paths=2)
    Y = X.condition_past(FiltrationCut(0, 1.0))
    it = g.node_index(0, 1.0)
    assert np.allclose(Y.values[:, :it + 1], X.values[:, :it + 1], atol=1e-9)
    assert not np.allclose(Y.values[:, -1], X.values[:, -1])


def test_constant_kernel_field_has_zero_modulus():
    g = Grid([0.0], [1.0], 6)
    X = sample_holder_field(0.5, g, [0], 1, n_paths=3, kernel="constant")
    assert np.all(X.modulus([0.25]) == 0.0)


def test_holder_field_argument_checks():
    g = Grid([0.0], [1.0], 6)
    with pytest.raises(ArgumentError):
        sample_holder_field(1.5, g, [0], 0)
    with pytest.raises(ArgumentError):
        sample_holder_field(0.5, g, [3], 0)
    with pytest.raises(ArgumentError):
        sample_holder_field(0.5, g, [0], 0, kernel="gauss")


def test_deterministic_field_adapted_everywhere():
    g = Grid([0.0, 0.0], [1.0, 1.0], 3)
    X = RandomField.deterministic(g, lambda t, x: t + x)
    assert X.adapted_directions == (0, 1)
    assert X.values.shape == (1, 9, 9)
    assert X.node_values([[0.5, 0.25]])[0, 0] == pytest.approx(0.75)
