"""Experiment drivers behind the command line.

Each driver takes a validated configuration dictionary and returns a
:class:`ResultRecord` holding CSV rows, scalar metrics and rate fits.
Everything except the wall time is a deterministic function of the
configuration.
"""
import hashlib
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__, mc
from .errors import ValidationError
from .germ import (ConstantGerm, DeterministicDistribution, estimate_coherence,
                   noise_product_germ, sewing_germ, young_germ)
from .grid import Grid, ScalingVector, TestFunction
from .integrate import (additive_input, brownian_path, homogeneity_check, ito_input, sew,
                        sewn_pairing, walsh_integral, zero_input)
from .noise import (RNG_ALGORITHM, CovarianceMeasure, RandomField, sample_holder_field,
                    sample_white_noise)
from .reconstruct import (bdg_verify, covariance_uniqueness_check, fit_error_rate,
                          kolmogorov_constant, reconstruct, regularity_check, wavelet_values)
from .wavelet import build_basis, verify_lemma1

SCHEMA_VERSION = 1
KINDS = ("coherence-fit", "reconstruction-rate", "sewing-equivalence", "walsh-oracle", "bdg",
         "kolmogorov", "lemma1", "homogeneity")


@dataclass
class ResultRecord:
    """Outcome of one experiment run."""

    kind: str
    config_hash: str
    seed: object
    columns: list
    rows: list
    metrics: dict = field(default_factory=dict)
    fits: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def header(self):
        return {"config_hash": self.config_hash, "kind": self.kind, "seed": self.seed,
                "version": __version__, "rng": RNG_ALGORITHM, "schema": SCHEMA_VERSION}


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# -- configuration helpers ---------------------------------------------------------------

def _grid(cfg):
    g = cfg["grid"]
    return Grid(g["lo"], g["hi"], g["level"])


def _scaling(cfg):
    return ScalingVector(cfg["scaling"]) if cfg.get("scaling") else ScalingVector.canonical(cfg["d"])


def _basis(cfg):
    b = cfg["basis"]
    return build_basis(b.get("family", "daubechies"), b.get("moments", 2))


def _psi(spec):
    kind = spec.get("type", "bump")
    if kind == "bump":
        return TestFunction.bump(spec["lo"], spec["hi"])
    if kind == "indicator":
        return TestFunction.indicator(spec["lo"], spec["hi"])
    raise ValidationError("psi.type", f"unknown test function type {kind!r}")


def _polynomial(coeffs):
    coeffs = [float(c) for c in coeffs]

    def g(*coords):
        return sum(c * coords[0] ** k for k, c in enumerate(coeffs)) + 0.0 * sum(coords)

    return g


def germ_factory(cfg, grid, scaling):
    """Return ``factory(rng, count)`` building the configured germ for one block."""
    spec = cfg["germ"]
    kind = spec.get("type")
    e = spec.get("stochastic_directions")
    if kind == "noise-product":
        alpha = spec.get("alpha", 0.75)
        adapted = spec.get("adapted", [0])
        horizon = spec.get("horizon", 1.0)
        kernel = spec.get("kernel", "power")

        def factory(rng, count):
            X = sample_holder_field(alpha, grid, adapted, rng, count, kernel, horizon)
            W = sample_white_noise(grid, rng, count)
            return noise_product_germ(X, W, scaling, e)

        return factory
    if kind == "constant":
        source = spec.get("h", "white")

        def factory(rng, count):
            if source == "white":
                return ConstantGerm(sample_white_noise(grid, rng, count), scaling, e or 0)
            return ConstantGerm(DeterministicDistribution(grid, _polynomial(source)), scaling, 0)

        return factory
    if kind == "young":
        g = _polynomial(spec.get("g", [1.0]))
        k = spec.get("taylor_order", 0)
        source = spec.get("h", "white")

        def factory(rng, count):
            if source == "white":
                h = sample_white_noise(grid, rng, count)
            else:
                h = DeterministicDistribution(grid, _polynomial(source))
            field_ = RandomField.deterministic(grid, g)
            return young_germ(field_, h, k, scaling, e or 0)

        return factory
    if kind == "sewing":
        source = spec.get("input", "ito")

        def factory(rng, count):
            W = sample_white_noise(grid, rng, count)
            if source == "ito":
                return sewing_germ(ito_input(W))
            if source == "additive":
                return sewing_germ(additive_input(grid, brownian_path(W), count))
            return sewing_germ(zero_input(grid, count))

        return factory
    raise ValidationError("germ.type", f"unknown germ type {kind!r}")


def _lams(cfg):
    return [float(v) for v in cfg["lambdas"]]


# -- drivers -----------------------------------------------------------------------------

def run_coherence_fit(cfg):
    grid, S = _grid(cfg), _scaling(cfg)
    factory = germ_factory(cfg, grid, S)
    psi = _psi(cfg["psi"])
    rep = estimate_coherence(factory, psi, cfg["base_point"], cfg["eps"], cfg["distances"],
                             cfg.get("mode", "plain"), cfg["paths"], cfg["seed"], cfg.get("p", 2),
                             cfg["workers"])
    rows = [(ep, dist, rep.norms[i][j]) for i, ep in enumerate(rep.eps)
            for j, dist in enumerate(rep.distances)]
    metrics = {"alpha_hat": rep.alpha_hat, "gamma_hat": rep.gamma_hat,
               "gamma_prime": rep.gamma_prime, "alpha_se": rep.alpha_se, "gap_se": rep.gap_se,
               "r_squared": rep.r_squared, "degenerate": rep.degenerate, "flag": rep.flag}
    return ["eps", "distance", "norm"], rows, metrics, {}


def run_reconstruction_rate(cfg):
    grid, S = _grid(cfg), _scaling(cfg)
    factory = germ_factory(cfg, grid, S)
    basis = _basis(cfg)
    psi = _psi(cfg["psi"])
    lams = _lams(cfg)
    n = cfg["levels"]["max"]
    variant = cfg.get("variant", "one-sided")
    plain = fit_error_rate(factory, basis, psi, lams, cfg["points"], n, False, cfg["paths"],
                           cfg["seed"], variant, cfg.get("p", 2), cfg["workers"])
    rows = [("plain", lam, j, plain.norms[i][j], plain.mean[i][j], plain.se[i][j])
            for i, lam in enumerate(lams) for j in range(len(cfg["points"]))]
    metrics = {"slope": plain.fit.slope, "slope_se": plain.fit.stderr,
               "degenerate": plain.fit.degenerate}
    alpha = cfg["germ"].get("alpha")
    if alpha is not None:
        metrics["theory"] = alpha - 0.5 * sum(S.exponents[:len(cfg["germ"].get("adapted", [0]))])
        regularity_check(-0.5 * S.rank, alpha, 1.0, basis.n_moments * min(S.exponents))
    if cfg.get("conditional", True):
        cond = fit_error_rate(factory, basis, psi, lams, cfg["points"], n, True, cfg["paths"],
                              cfg["seed"], variant, cfg.get("p", 2), cfg["workers"])
        rows += [("conditional", lam, j, cond.norms[i][j], cond.mean[i][j], cond.se[i][j])
                 for i, lam in enumerate(lams) for j in range(len(cfg["points"]))]
        mean, se = np.asarray(cond.mean), np.asarray(cond.se)
        metrics["conditional_max_abs_mean"] = float(np.abs(mean).max())
        metrics["conditional_within_3se"] = bool(np.all(np.abs(mean) <= 3 * se + 1e-12))
    if cfg.get("covariance_pairs"):
        gap = float(cfg.get("pair_gap", 2.0 ** -6))
        R_tilde = float(np.max(np.abs(np.concatenate([psi.lo, psi.hi]))))
        starts = [np.atleast_1d(np.asarray(x, float)) for x in cfg["covariance_pairs"]]

        def pairs(lam):
            return [(x, x + np.eye(x.size)[0] * (2 * lam ** S.exponents[0] * R_tilde + gap))
                    for x in starts]

        cov = covariance_uniqueness_check(factory, basis, psi, lams, pairs, n, cfg["paths"],
                                          cfg["seed"], workers=cfg["workers"])
        rows += [("covariance", lam, j, cov.magnitude[i], cov.mean[i][j], cov.se[i][j])
                 for i, lam in enumerate(lams) for j in range(len(starts))]
        metrics["covariance_within_3se"] = cov.within()
        metrics["covariance_slope"] = cov.fit.slope if cov.fit else float("nan")
    return (["mode", "lambda", "point", "norm", "mean", "se"], rows, metrics,
            {"residual": plain.fit.to_dict()})


def run_walsh_oracle(cfg):
    grid, S = _grid(cfg), _scaling(cfg)
    basis = _basis(cfg)
    psi = _psi(cfg["psi"])
    spec = cfg["germ"]
    n0, n1 = cfg["levels"]["min"], cfg["levels"]["max"]

    def run(rng, count, index):
        X = sample_holder_field(spec.get("alpha", 0.75), grid, spec.get("adapted", [0]), rng, count,
                                spec.get("kernel", "power"), spec.get("horizon", 1.0))
        W = sample_white_noise(grid, rng, count)
        r = reconstruct(noise_product_germ(X, W, S), basis, [psi], n0, n1)
        return r.values[:, :, 0], walsh_integral(X, W, psi)

    res = mc.map_blocks(run, cfg["paths"], cfg["seed"], mc.DEFAULT_BLOCK, cfg["workers"])
    vals = mc.concat([r[0] for r in res])
    ref = mc.concat([r[1] for r in res])
    scale = float(np.sqrt(np.mean(ref ** 2)))
    err = np.sqrt(np.mean((vals - ref[:, None]) ** 2, axis=0)) / scale
    inc = np.concatenate([[np.nan], np.sqrt(np.mean(np.diff(vals, axis=1) ** 2, axis=0))])
    rows = [(n, float(err[i]), float(inc[i])) for i, n in enumerate(range(n0, n1 + 1))]
    return (["level", "relative_l2_error", "cauchy_increment"], rows,
            {"relative_l2_error": float(err[-1]), "walsh_l2": scale}, {})


def run_sewing_equivalence(cfg):
    grid = _grid(cfg)
    basis = _basis(cfg)
    psi = _psi(cfg["psi"])
    n0, n1 = cfg["levels"]["min"], cfg["levels"]["max"]
    L = grid.levels[0]
    sew_levels = list(range(cfg.get("sew_min", 4), L + 1))

    def run(rng, count, index):
        W = sample_white_noise(grid, rng, count)
        A = ito_input(W)
        B1 = brownian_path(W)[:, -1]
        errs = np.stack([sew(A, n).values[:, -1] - (B1 ** 2 - 1) / 2 for n in sew_levels], 1)
        r = reconstruct(sewing_germ(A), basis, [psi], n0, n1)
        return errs, r.values[:, :, 0], sewn_pairing(A, psi)

    res = mc.map_blocks(run, cfg["paths"], cfg["seed"], mc.DEFAULT_BLOCK, cfg["workers"])
    errs = mc.concat([r[0] for r in res])
    vals = mc.concat([r[1] for r in res])
    ref = mc.concat([r[2] for r in res])
    sew_l2 = np.sqrt(np.mean(errs ** 2, axis=0))
    from .fitting import fit_loglog

    fit = fit_loglog(2.0 ** np.asarray(sew_levels, float), sew_l2, base=2, transform_x=np.log2)
    diff = vals - ref[:, None]
    mean, se = mc.mean_se(diff)
    rmse = np.sqrt(np.mean(diff ** 2, axis=0))
    # standard error of the root mean square by the delta method
    rmse_se = np.std(diff ** 2, axis=0, ddof=1) / np.sqrt(diff.shape[0]) / (2 * rmse)
    inc = np.sqrt(np.mean(np.diff(vals, axis=1) ** 2, axis=0))
    q = max(inc[-1] / inc[-2], inc[-2] / inc[-3])
    tail = float(inc[-1] * q / (1 - q)) if q < 1 else float("inf")
    rows = [("sewing", n, float(sew_l2[i]), float("nan")) for i, n in enumerate(sew_levels)]
    rows += [("equivalence", n, float(rmse[i]), float(mean[i]))
             for i, n in enumerate(range(n0, n1 + 1))]
    metrics = {"sewing_rate": -fit.slope, "sewing_rate_se": fit.stderr,
               "equivalence_rmse": float(rmse[-1]), "equivalence_rmse_se": float(rmse_se[-1]),
               "equivalence_mean": float(mean[-1]), "equivalence_mean_se": float(se[-1]),
               "quadrature_tolerance": tail}
    return ["series", "level", "l2", "mean"], rows, metrics, {"sewing": fit.to_dict()}


def run_bdg(cfg):
    Ns = cfg.get("Ns", [2 ** k for k in range(4, 11)])
    rows, metrics = [], {}
    for fam in cfg.get("families", ["constant", "iid", "brownian"]):
        for p in cfg.get("ps", [2, 4]):
            t = bdg_verify(fam, p, Ns, cfg["paths"], cfg["seed"], cfg["workers"])
            rows += [(fam, p, N, t.lhs[i], t.rhs[i], t.ratio[i]) for i, N in enumerate(Ns)]
            metrics[f"{fam}_p{p}_max_ratio"] = t.constant
            metrics[f"{fam}_p{p}_trend"] = t.trend
            metrics[f"{fam}_p{p}_trend_se"] = t.trend_se
    return ["family", "p", "N", "lhs", "rhs", "ratio"], rows, metrics, {}


def run_kolmogorov(cfg):
    S = _scaling(cfg)
    basis = _basis(cfg)
    alpha, p = cfg.get("alpha", -0.55), cfg.get("p", 2)
    box = cfg.get("box", {"lo": [0.0], "hi": [1.0]})
    eps = basis.R - basis.C
    lo = np.asarray(box["lo"], float) - eps
    hi = np.asarray(box["hi"], float) + eps
    rows, norms = [], []
    for n_max in cfg.get("n_max", [6, 7, 8, 9]):
        grid = Grid(lo, hi, n_max + 2)

        def run(rng, count, index, grid=grid, n_max=n_max):
            W = sample_white_noise(grid, rng, count)
            ph, de = wavelet_values(W.cells, grid, basis, S, (lo, hi), range(n_max + 1))
            return kolmogorov_constant(ph, de, list(range(n_max + 1)), alpha, p, S,
                                       basis.n_moments * min(S.exponents)).B

        B = mc.concat(mc.map_blocks(run, cfg["paths"], cfg["seed"], mc.DEFAULT_BLOCK,
                                    cfg["workers"]))
        norms.append(float(mc.lp_norm(B, p)))
        rows.append((n_max, norms[-1]))
    spread = (max(norms) - min(norms)) / norms[0]
    return ["n_max", "B_norm"], rows, {"relative_spread": spread, "B_norm": norms[-1]}, {}


def run_lemma1(cfg):
    S = _scaling(cfg)
    basis = _basis(cfg)
    psi = _psi(cfg["psi"])
    lv = cfg["levels"]
    phi_fit, det_fit = verify_lemma1(basis, psi, S, range(lv["min"], lv["max"] + 1),
                                     cfg.get("lambda", 0.5))
    rows = [(int(x), phi_fit.y[i], det_fit.y[i]) for i, x in enumerate(phi_fit.x)]
    metrics = {"phi_slope": phi_fit.slope, "detail_slope": det_fit.slope,
               "phi_theory": -S.rank / 2,
               "detail_theory": -S.rank / 2 - basis.n_moments * min(S.exponents)}
    return (["level", "phi_max", "detail_max"], rows, metrics,
            {"phi": phi_fit.to_dict(), "detail": det_fit.to_dict()})


def run_homogeneity(cfg):
    d = cfg["d"]
    K = CovarianceMeasure.white(d) if cfg.get("covariance", "white") == "white" \
        else CovarianceMeasure.constant(1.0)
    phi = TestFunction.bump([-1.0] * (d + 1), [1.0] * (d + 1))
    lams = _lams(cfg)
    fit = homogeneity_check(K, phi, lams, d, ppl=cfg.get("cells_per_lambda", 32))
    delta = K.scaling_delta
    theory = 2 * (-d - 0.5 + delta / 2) if delta is not None else float("nan")
    rows = [(lam, fit.y[i]) for i, lam in enumerate(lams)]
    return ["lambda", "norm_squared"], rows, {"slope": fit.slope, "theory": theory}, \
        {"homogeneity": fit.to_dict()}


DRIVERS = {"coherence-fit": run_coherence_fit, "reconstruction-rate": run_reconstruction_rate,
           "sewing-equivalence": run_sewing_equivalence, "walsh-oracle": run_walsh_oracle,
           "bdg": run_bdg, "kolmogorov": run_kolmogorov, "lemma1": run_lemma1,
           "homogeneity": run_homogeneity}


def run_experiment(cfg):
    """Run a validated configuration and return a :class:`ResultRecord`."""
    start = time.perf_counter()
    columns, rows, metrics, fits = DRIVERS[cfg["kind"]](cfg)
    hashed = {k: v for k, v in cfg.items() if k not in ("workers", "output")}
    return ResultRecord(cfg["kind"], config_hash(hashed), cfg["seed"], columns, rows,
                        metrics, fits, time.perf_counter() - start)
