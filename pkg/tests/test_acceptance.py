"""Acceptance criteria C1 to C11 at their stated tolerances.

Each test prints one PASS/FAIL line; the lines are repeated in the pytest
terminal summary.  Monte Carlo seeds are fixed in the shipped configs.
"""
import copy
import os

import numpy as np
import pytest
import yaml

from conftest import record
from stochrecon import (ConstantGerm, CovarianceMeasure, DeterministicDistribution, Grid,
                        ScalingVector, TestFunction, bdg_verify, build_basis,
                        covariance_uniqueness_check, homogeneity_check, reconstruct,
                        sample_holder_field, sample_martingale_measure, sample_white_noise,
                        verify_lemma1, walsh_integral)
from stochrecon.cli import main, validate
from stochrecon.experiments import _basis, _grid, _psi, _scaling, germ_factory, run_experiment
from stochrecon.integrate import isometry_variance
from stochrecon.wavelet import project

CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")
SEED = 20261016


def load(name, **overrides):
    with open(os.path.join(CONFIGS, name + ".yaml")) as fh:
        raw = yaml.safe_load(fh)
    raw.update(overrides)
    raw.setdefault("workers", os.cpu_count() or 1)
    return validate(raw)


# -- C1 ----------------------------------------------------------------------------------

def test_c1_wavelet_validity():
    J = 12
    worst = {"filter": 0.0, "orth": 0.0, "moment": 0.0, "refine": 0.0}
    bases = [build_basis("haar")] + [build_basis("daubechies", N) for N in range(2, 7)]
    for b in bases:
        s, o = b.filter_residuals()
        worst["filter"] = max(worst["filter"], s, o)
        h = 2.0 ** -J
        phi = b.samples(J)
        psi = b.samples(J, "psi")
        step = 2 ** J
        for k in range(b.R - b.C):
            ip = np.dot(phi[k * step:], phi[:phi.size - k * step]) * h
            worst["orth"] = max(worst["orth"], abs(ip - (k == 0)))
        x = b.C + np.arange(psi.size) * h
        for m in range(b.n_moments):
            worst["moment"] = max(worst["moment"], abs(np.sum(x ** m * psi) * h))
        worst["refine"] = max(worst["refine"], b.refinement_residual(J))
    ok = (worst["filter"] < 1e-12 and worst["orth"] < 1e-4 and worst["moment"] < 1e-6
          and worst["refine"] < 1e-6)
    detail = ", ".join(f"{k}={v:.2e}" for k, v in worst.items())
    assert record("C1 wavelet validity", ok, detail)


# -- C2 ----------------------------------------------------------------------------------

@pytest.mark.parametrize("case", ["canonical-d1", "parabolic-d2"])
def test_c2_lemma_bounds(case):
    if case == "canonical-d1":
        basis, S = build_basis("daubechies", 3), ScalingVector([1])
        psi = TestFunction.bump([-1.0], [1.0])
        phi_fit, det_fit = verify_lemma1(basis, psi, S, range(5, 12))
    else:
        cfg = load("lemma1")
        basis, S = _basis(cfg), _scaling(cfg)
        lv = cfg["levels"]
        phi_fit, det_fit = verify_lemma1(basis, _psi(cfg["psi"]), S,
                                         range(lv["min"], lv["max"] + 1), cfg["lambda"])
    r_tilde = basis.n_moments * min(S.exponents)
    ok = (abs(phi_fit.slope + S.rank / 2) <= 0.1
          and det_fit.slope <= -S.rank / 2 - r_tilde + 0.3)
    detail = (f"phi slope {phi_fit.slope:.3f} (target {-S.rank / 2}), detail slope "
              f"{det_fit.slope:.3f} (bound {-S.rank / 2 - r_tilde + 0.3:.2f})")
    assert record(f"C2 decay bounds {case}", ok, detail)


# -- C3 ----------------------------------------------------------------------------------

def test_c3_isometries():
    M = 10 ** 4
    tol = 3 / np.sqrt(M)
    grid = Grid([0.0], [1.0], 8)
    psi = TestFunction.bump([0.1], [0.9])
    xi = sample_white_noise(grid, SEED, M)
    white = np.mean(xi.evaluate(psi) ** 2)
    white_err = abs(white / psi.on(grid).norm() ** 2 - 1)

    tg = Grid([0.0, 0.0], [1.0, 1.0], [5, 4])
    rng = np.random.default_rng(SEED)
    X = sample_holder_field(0.75, tg, [0], rng, M, horizon=1.0)
    W = sample_martingale_measure(CovarianceMeasure.white(1), tg, rng, M)
    phi = TestFunction.bump([0.0, 0.0], [1.0, 1.0])
    walsh = np.mean(walsh_integral(X, W, phi) ** 2)
    # the moving-average kernel is normalized, so E X(z)^2 = 1 at every node
    var_x = sample_holder_field(0.75, tg, [0], 0, 1, horizon=1.0)
    assert np.isclose(np.sum(var_x._kernel ** 2) * tg.cell_volume, 1.0)
    expected = phi.on(tg).norm() ** 2
    walsh_err = abs(walsh / expected - 1)
    ok = white_err <= tol and walsh_err <= tol
    assert record("C3 isometries", ok,
                  f"white rel err {white_err:.4f}, Walsh rel err {walsh_err:.4f}, tol {tol:.4f}")


# -- C4 ----------------------------------------------------------------------------------

def test_c4_constant_germ_exactness():
    basis, S = build_basis("daubechies", 2), ScalingVector([1])
    grid = Grid([-4.0], [8.0], 12)
    psi = TestFunction.bump([1.0], [2.0])
    pf = psi.on(grid)
    noise = sample_white_noise(grid, SEED, 1)
    dists = [DeterministicDistribution(grid, noise.cells[0] / grid.cell_volume),
             DeterministicDistribution(grid, lambda t: np.exp(-t ** 2) * np.cos(3 * t))]
    proj = [project(pf, basis, n, S, grid) for n in range(11)]
    proj_err = np.array([(p - pf).norm() for p in proj])
    exact_err, rate_ok = 0.0, True
    for h in dists:
        run = reconstruct(ConstantGerm(h), basis, [psi], 0, 10)
        ref = np.array([h.evaluate(p)[0] for p in proj])
        scale = max(1.0, np.abs(ref).max())
        exact_err = max(exact_err, np.abs(run.values[0, :, 0] - ref).max() / scale)
        bound = np.linalg.norm(h.samples) * np.sqrt(grid.cell_volume) * proj_err
        rate_ok &= bool(np.all(np.abs(run.values[0, :, 0] - h.evaluate(psi)[0]) <= bound + 1e-12))
    slope = np.polyfit(np.arange(2, 11), np.log2(proj_err[2:]), 1)[0]
    ok = exact_err < 1e-12 and rate_ok and slope < -1.5
    assert record("C4 constant germ", ok,
                  f"max rel |f_n - h(P_n psi)| {exact_err:.1e}, limit within projection bound "
                  f"{rate_ok}, projection rate {slope:.2f}")


# -- C5 and C6 ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def rate_record():
    return run_experiment(load("reconstruction_rate"))


def test_c5a_walsh_oracle():
    rec = run_experiment(load("walsh_oracle"))
    err = rec.metrics["relative_l2_error"]
    assert record("C5a reconstruction vs Walsh", err <= 0.05, f"relative L2 error {err:.4f}")


def test_c5b_residual_rate(rate_record):
    m = rate_record.metrics
    ok = m["slope"] >= 0.25 - 0.2
    assert record("C5b residual rate", ok,
                  f"slope {m['slope']:.3f} +- {m['slope_se']:.3f} (need >= 0.05, theory "
                  f"{m['theory']:.2f})")


def test_c5c_conditional_residual(rate_record):
    m = rate_record.metrics
    ok = m["conditional_within_3se"]
    assert record("C5c conditional residual", ok,
                  f"max |mean| {m['conditional_max_abs_mean']:.2e} within 3 SE: {ok}")


def test_c6_covariance(rate_record):
    m = rate_record.metrics
    cfg = load("reconstruction_rate")
    grid, S = _grid(cfg), _scaling(cfg)
    psi = _psi(cfg["psi"])
    R_tilde = float(np.max(np.abs(np.concatenate([psi.lo, psi.hi]))))
    starts = [np.atleast_1d(np.asarray(x, float)) for x in cfg["covariance_pairs"]]
    gap = 2.0 ** -6

    def pairs(lam):
        return [(x, x + 2 * lam * R_tilde + gap) for x in starts]

    mixed = covariance_uniqueness_check(germ_factory(cfg, grid, S), _basis(cfg), psi,
                                        cfg["lambdas"], pairs, cfg["levels"]["max"],
                                        cfg["paths"], cfg["seed"], lam_ratio=0.5,
                                        workers=cfg["workers"])
    ok = (m["covariance_within_3se"] and m["covariance_slope"] > 0 and mixed.within()
          and mixed.fit.slope > 0)
    assert record("C6 covariance setting", ok,
                  f"equal-lambda within 3 SE {m['covariance_within_3se']}, magnitude slope "
                  f"{m['covariance_slope']:.3f}; mixed-lambda within 3 SE {mixed.within()}, "
                  f"magnitude slope {mixed.fit.slope:.3f}")


# -- C7 ----------------------------------------------------------------------------------

def test_c7_sewing_equivalence():
    m = run_experiment(load("sewing_equivalence")).metrics
    tol = m["quadrature_tolerance"]
    rate_ok = 0.3 <= m["sewing_rate"] <= 0.7
    mean_ok = abs(m["equivalence_mean"]) <= 3 * m["equivalence_mean_se"] + tol
    rmse_ok = m["equivalence_rmse"] <= 3 * m["equivalence_rmse_se"] + tol
    assert record("C7 sewing equivalence", rate_ok and mean_ok and rmse_ok,
                  f"sewing rate {m['sewing_rate']:.3f}; mean {m['equivalence_mean']:.2e} "
                  f"(3 SE {3 * m['equivalence_mean_se']:.2e}), rmse {m['equivalence_rmse']:.4f}"
                  f", quadrature tolerance {tol:.4f}")


# -- C8 ----------------------------------------------------------------------------------

def test_c8_bdg():
    m = run_experiment(load("bdg")).metrics
    parts, ok = [], True
    for fam in ("constant", "iid", "brownian"):
        for p in (2, 4):
            c, t, se = (m[f"{fam}_p{p}_max_ratio"], m[f"{fam}_p{p}_trend"],
                        m[f"{fam}_p{p}_trend_se"])
            # non-increasing: the fitted trend is not significantly positive
            good = np.isfinite(c) and t <= 3 * se + 1e-12
            ok &= bool(good)
            parts.append(f"{fam} p{p} C={c:.3f} trend={t:+.4f}+-{se:.4f}")
    assert record("C8 BDG", ok, "; ".join(parts))


# -- C9 ----------------------------------------------------------------------------------

def test_c9_kolmogorov():
    rec = run_experiment(load("kolmogorov"))
    norms = np.array([row[1] for row in rec.rows])
    dev = np.abs(norms / norms[0] - 1).max()
    assert record("C9 Kolmogorov", dev <= 0.10,
                  f"||B|| over n_max 6..9: {np.round(norms, 3).tolist()}, max deviation "
                  f"{dev:.3f}")


# -- C10 ---------------------------------------------------------------------------------

@pytest.mark.parametrize("d", [1, 2])
def test_c10_homogeneity(d):
    phi = TestFunction.bump([-1.0] * (d + 1), [1.0] * (d + 1))
    K = CovarianceMeasure.white(d)
    fit = homogeneity_check(K, phi, [1.0, 0.5, 0.25, 0.125, 0.0625], d, ppl=16 if d == 2 else 32)
    target = 2 * (-d - 0.5 + K.scaling_delta / 2)
    ok = abs(fit.slope - target) <= 0.05
    assert record(f"C10 homogeneity d={d}", ok, f"slope {fit.slope:.4f}, target {target}")


# -- C11 ---------------------------------------------------------------------------------

SMALL = {
    "coherence_fit": {"paths": 300},
    "reconstruction_rate": {"paths": 300},
    "walsh_oracle": {"paths": 300},
    "sewing_equivalence": {"paths": 300},
    "bdg": {"paths": 600},
    "kolmogorov": {"paths": 300, "n_max": [6, 7]},
    "lemma1": {"levels": {"min": 3, "max": 6}},
    "homogeneity": {},
}


def test_c11_determinism(tmp_path):
    bad = []
    for name, patch in SMALL.items():
        with open(os.path.join(CONFIGS, name + ".yaml")) as fh:
            raw = yaml.safe_load(fh)
        raw.update(copy.deepcopy(patch))
        cfg = tmp_path / f"{name}.yaml"
        cfg.write_text(yaml.safe_dump(raw))
        outs = []
        for i, workers in enumerate((1, 3, 1)):
            out = tmp_path / f"{name}_{i}"
            assert main(["run", str(cfg), "--workers", str(workers), "--out", str(out)]) == 0
            outs.append(out / f"{raw['kind']}.csv")
        blobs = [p.read_bytes() for p in outs]
        if not blobs[0] == blobs[1] == blobs[2]:
            bad.append(name)
    assert record("C11 determinism", not bad,
                  f"{len(SMALL) - len(bad)}/{len(SMALL)} experiments byte-identical"
                  + (f"; differing: {bad}" if bad else ""))
