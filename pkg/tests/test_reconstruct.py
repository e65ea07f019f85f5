import warnings

import numpy as np
import pytest

from stochrecon import (ArgumentError, ConstantGerm, DeterministicDistribution, FiltrationCut,
                        Grid, PreconditionError, RandomField, ResolutionError, ScalingVector,
                        TestFunction, bdg_verify, covariance_uniqueness_check, fit_error_rate,
                        kolmogorov_constant, noise_product_germ, reconstruct, run_reconstruction,
                        sample_holder_field, sample_white_noise, two_sided_offsets)
from stochrecon.reconstruct import (RegularityWarning, ReconstructionRun, regularity_check,
                                    residuals, wavelet_values)
from stochrecon.wavelet import wavelet_function

S1 = ScalingVector([1])


@pytest.fixture
def grid():
    return Grid([0.0], [3.0], 11)


def _germ(grid, seed=0, n=8, alpha=0.75):
    X = sample_holder_field(alpha, grid, [0], seed, n, horizon=4.0)
    return noise_product_germ(X, sample_white_noise(grid, seed + 1, n))


def test_increments_telescope(grid, db2):
    run = reconstruct(_germ(grid), db2, [TestFunction.bump([1.0], [2.0])], 3, 7)
    diffs = np.diff(run.values, axis=1).sum(axis=1)
    assert np.allclose(diffs, run.values[:, -1] - run.values[:, 0], atol=1e-12)


def test_constant_smooth_germ_reproduces_distribution(grid, db2):
    h = DeterministicDistribution(grid, lambda t: np.cos(t))
    psi = TestFunction.bump([1.0], [2.0])
    run = reconstruct(ConstantGerm(h), db2, [psi], 4, 8)
    assert abs(run.limit[0, 0] - h.evaluate(psi)[0]) < 1e-6


def test_deterministic_product_germ(grid, db2):
    # F_z = X(z) h with smooth X, h: the limit is the product distribution
    X = RandomField.deterministic(grid, lambda t: 1.0 + t)
    h = DeterministicDistribution(grid, lambda t: np.sin(t))
    from stochrecon.germ import NoiseProductGerm
    from stochrecon import NoiseField
    F = NoiseProductGerm(X, NoiseField(grid, h.density / grid.cell_volume * grid.cell_volume))
    psi = TestFunction.bump([1.0], [2.0])
    run = reconstruct(F, db2, [psi], 4, 8)
    c = grid.centers(0)
    exact = float(((1.0 + c) * np.sin(c) * psi(c)).sum() * grid.cell_volume)
    err = np.abs(run.values[0, :, 0] - exact)
    # first-order coherence: the error halves with each level
    assert err[-1] < 1e-2
    assert np.allclose(err[1:] / err[:-1], 0.5, atol=0.1)
    assert run.cauchy_fit().slope < 0


def test_basis_function_is_reproduced_at_its_level(grid, db2):
    h = DeterministicDistribution(grid, wavelet_function(db2, 3, [1.5], S1, grid).samples)
    phi = wavelet_function(db2, 3, [1.5], S1, grid)
    run = reconstruct(ConstantGerm(h), db2, [phi_to_test(phi)], 3, 5)
    assert np.allclose(run.values[0, :, 0], run.values[0, 0, 0], atol=1e-4)


def phi_to_test(gf):
    lo, hi = gf.support()
    vals = gf.samples
    grid = gf.grid

    def f(t):
        idx = np.clip(((t - grid.lo[0]) / grid.h[0]).astype(int), 0, grid.shape[0] - 1)
        return vals[idx]

    return TestFunction(f, lo, hi)


def test_reconstruction_is_adapted_bitwise(grid, db2):
    # one-sided reconstruction at x uses only noise before the right edge of psi
    F = _germ(grid, n=2)
    psi = TestFunction.bump([1.0], [1.5])
    base = reconstruct(F, db2, [psi], 6, 6).limit
    cells = F.noise.cells.copy()
    cells[:, grid.centers(0) > 2.0] += 10.0
    from stochrecon import NoiseField
    G = noise_product_germ(F.X, NoiseField(grid, cells))
    assert np.array_equal(reconstruct(G, db2, [psi], 6, 6).limit, base)


def test_level_too_fine_is_resolution_error(grid, db2):
    with pytest.raises(ResolutionError):
        reconstruct(_germ(grid), db2, [TestFunction.bump([1.0], [2.0])], 3, 10)


def test_one_sided_needs_positive_support(db2):
    grid = Grid([-2.0], [3.0], 10)
    with pytest.raises(PreconditionError):
        reconstruct(_germ(grid), db2, [TestFunction.bump([-1.0], [1.0])], 3, 5)
    reconstruct(_germ(grid), db2, [TestFunction.bump([-1.0], [1.0])], 3, 5, variant="two-sided")


def test_unknown_variant(grid, db2):
    with pytest.raises(ArgumentError):
        reconstruct(_germ(grid), db2, [TestFunction.bump([1.0], [2.0])], 3, 5, variant="left")


def test_run_reconstruction_independent_of_workers(grid, db2):
    fac = lambda rng, n: _germ_rng(grid, rng, n)
    psi = [TestFunction.bump([1.0], [2.0])]
    a = run_reconstruction(fac, db2, psi, 4, 6, 30, 9, workers=1, block=10)
    b = run_reconstruction(fac, db2, psi, 4, 6, 30, 9, workers=3, block=10)
    assert np.array_equal(a.values, b.values)


def _germ_rng(grid, rng, n):
    X = sample_holder_field(0.75, grid, [0], rng, n, horizon=4.0)
    return noise_product_germ(X, sample_white_noise(grid, rng, n))


def test_tail_bound_zero_for_exact_sequence():
    run = ReconstructionRun([1, 2, 3, 4], np.ones((3, 4, 1)))
    assert run.tail_bound()[0] == 0.0


def test_tail_bound_geometric():
    vals = np.cumsum(0.5 ** np.arange(6))[None, :, None]
    run = ReconstructionRun(list(range(6)), vals)
    assert run.tail_bound()[0] == pytest.approx(0.5 ** 5, rel=1e-9)


def test_two_sided_offsets_examples():
    cuts = two_sided_offsets([0.0], 1.0, 2.0, 3.0, S1)
    assert cuts[0].time == pytest.approx(-5.0)
    cuts = two_sided_offsets([2.0], 0.5, 1.0, 3.0, ScalingVector([2]))
    assert cuts[0].time == pytest.approx(1.0)
    with pytest.raises(ArgumentError):
        two_sided_offsets([0.0], 0.5, 0.0, 1.0, S1)


def test_conditional_residual_vanishes(grid, db2):
    psi = TestFunction.bump([0.1], [1.0])
    r = residuals(_germ(grid), db2, psi, [0.25, 0.125], [[1.0], [1.5]], 8, conditional=True)
    assert np.max(np.abs(r)) < 1e-12


def test_fit_error_rate_rejects_bad_lambda(grid, db2):
    with pytest.raises(ArgumentError):
        fit_error_rate(lambda rng, n: _germ(grid), db2, TestFunction.bump([0.1], [1.0]),
                       [2.0], [[1.0]], 7, n_paths=4)


def test_covariance_check_rejects_coincident_points(grid, db2):
    psi = TestFunction.bump([0.1], [1.0])
    fac = lambda rng, n: _germ_rng(grid, rng, n)
    with pytest.raises(PreconditionError):
        covariance_uniqueness_check(fac, db2, psi, [0.25], [([1.0], [1.0])], 7, n_paths=4)
    with pytest.raises(PreconditionError):
        covariance_uniqueness_check(fac, db2, psi, [0.5], [([1.0], [1.2])], 7, n_paths=4)


def test_covariance_mixed_moments_small(grid, db2):
    psi = TestFunction.bump([0.1], [1.0])
    fac = lambda rng, n: _germ_rng(grid, rng, n)
    lams = [0.25, 0.125, 0.0625, 0.03125]
    chk = covariance_uniqueness_check(fac, db2, psi, lams, [([0.5], [1.5])], 8, n_paths=500,
                                      seed=4)
    assert chk.within(4.0)


def test_regularity_warning():
    with pytest.warns(RegularityWarning):
        assert not regularity_check(-2.5, 0.2, 1.0, 2.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert regularity_check(-0.5, 0.75, 1.0, 2.0)


def test_bdg_constant_family_triangle_inequality():
    t = bdg_verify("constant", 2, [4, 16, 64], n_paths=100, seed=1)
    assert t.constant <= 1.0 + 1e-12


@pytest.mark.parametrize("family", ["iid", "brownian"])
def test_bdg_orthogonal_increments_ratio_near_one(family):
    # for p = 2 orthogonality gives equality in expectation
    t = bdg_verify(family, 2, [4, 16, 64], n_paths=4000, seed=1)
    assert np.all(np.abs(np.asarray(t.ratio) - 1.0) < 0.08)


def test_bdg_rejects_non_nested_sizes():
    with pytest.raises(ArgumentError):
        bdg_verify("iid", 2, [3, 8])


def test_kolmogorov_zero_distribution(db2):
    grid = Grid([-2.0], [3.0], 10)
    dens = np.zeros((5,) + grid.shape)
    phis, dets = wavelet_values(dens, grid, db2, S1, ([0.0], [1.0]), [3, 4, 5])
    est = kolmogorov_constant(phis, dets, [3, 4, 5], -0.55, 2, S1, 2.0)
    assert est.norm == 0.0 and np.all(est.B == 0.0)


def test_kolmogorov_scales_linearly(db2):
    grid = Grid([-2.0], [3.0], 10)
    dens = sample_white_noise(grid, 0, 20).cells
    phis, dets = wavelet_values(dens, grid, db2, S1, ([0.0], [1.0]), [3, 4, 5])
    a = kolmogorov_constant(phis, dets, [3, 4, 5], -0.55, 2, S1, 2.0)
    phis2 = [2 * v for v in phis]
    dets2 = [2 * v for v in dets]
    b = kolmogorov_constant(phis2, dets2, [3, 4, 5], -0.55, 2, S1, 2.0)
    assert b.norm == pytest.approx(2 * a.norm)
