"""Reconstructing sequences, residual diagnostics and moment verifiers.

The level-``n`` approximation of the reconstruction is

    f_n(psi) = sum_{y in level-n mesh} F_y(phi_y^n) <phi_y^n, psi>,

computed per path for a list of test functions at once.
"""
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from . import mc
from .errors import ArgumentError, PreconditionError, ResolutionError
from .fitting import DEGENERATE_FLOOR, RateFit, fit_loglog
from .germ import effective_support
from .grid import as_grid_function
from .noise import FiltrationCut
from .wavelet import check_inside, coefficients, detail_masks, mesh_points

VARIANTS = ("one-sided", "two-sided", "covariance")
MIN_CELLS = 4


class RegularityWarning(UserWarning):
    """The chosen basis is not regular enough for the fitted exponents."""


@dataclass
class ReconstructionRun:
    """Per-level values ``f_n(psi_k)`` for every path.

    Attributes
    ----------
    levels : list of int
    values : ndarray
        Shape ``(M, len(levels), K)``.
    variant : str
    p : float
    """

    levels: list
    values: np.ndarray
    variant: str = "one-sided"
    p: float = 2.0

    @property
    def n_paths(self):
        return self.values.shape[0]

    @property
    def limit(self):
        """Values at the finest level, shape ``(M, K)``."""
        return self.values[:, -1, :]

    @property
    def increments(self):
        """``||f_{n+1}(psi) - f_n(psi)||_{L_p}``, shape ``(len(levels) - 1, K)``."""
        return mc.lp_norm(np.diff(self.values, axis=1), self.p)

    def tail_bound(self):
        """Geometric extrapolation of the remaining Cauchy tail per test function.

        Uses the ratio of the last three increments; infinite when they do
        not decay.
        """
        inc = self.increments
        if inc.shape[0] < 3:
            return np.full(inc.shape[1], np.inf)
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.maximum(inc[-1] / inc[-2], inc[-2] / inc[-3])
            bound = np.where(q < 1, inc[-1] * q / (1 - q), np.inf)
        return np.where(inc[-1] < DEGENERATE_FLOOR, 0.0, bound)

    def cauchy_fit(self, k=0):
        """Log-log fit of the Cauchy increments against ``2**n``."""
        lv = np.asarray(self.levels[:-1], dtype=float)
        return fit_loglog(2.0 ** lv, self.increments[:, k], base=2, transform_x=np.log2)

    @classmethod
    def concatenate(cls, runs):
        runs = list(runs)
        return cls(runs[0].levels, np.concatenate([r.values for r in runs], axis=0),
                   runs[0].variant, runs[0].p)

    def rows(self):
        """``(level, k, mean, increment)`` rows for CSV output."""
        out = []
        inc = self.increments
        for li, n in enumerate(self.levels):
            for k in range(self.values.shape[2]):
                step = float(inc[li - 1, k]) if li > 0 else float("nan")
                out.append((int(n), k, float(self.values[:, li, k].mean()), step))
        return out


def _check_levels(grid, scaling, n_min, n_max):
    if n_min < 0 or n_max < n_min:
        raise ArgumentError("need 0 <= n_min <= n_max")
    for i in range(grid.d):
        if grid.levels[i] - n_max * scaling.exponents[i] < np.log2(MIN_CELLS):
            raise ResolutionError(
                f"level {n_max} leaves fewer than {MIN_CELLS} grid cells per mesh step on axis {i}")


def _check_one_sided(germ, basis, psis):
    if basis.C <= 0:
        raise PreconditionError("one-sided reconstruction needs a positively supported basis")
    for psi in psis:
        if germ.e and np.any(psi.lo[:germ.e] <= 0):
            raise PreconditionError("test function support must be positive on stochastic axes")


def reconstruct(germ, basis, psis, n_min, n_max, variant="one-sided", p=None):
    """Reconstructing sequence ``f_n(psi)`` for ``n = n_min..n_max``.

    Parameters
    ----------
    germ : Germ
        Carries the paths of one Monte Carlo block.
    basis : WaveletBasis
    psis : list of TestFunction
    n_min, n_max : int
    variant : {"one-sided", "two-sided", "covariance"}

    Returns
    -------
    ReconstructionRun
    """
    if variant not in VARIANTS:
        raise ArgumentError(f"unknown variant {variant!r}")
    psis = list(psis)
    if not psis:
        raise ArgumentError("need at least one test function")
    grid, scaling = germ.grid, germ.scaling
    _check_levels(grid, scaling, n_min, n_max)
    if variant == "one-sided":
        _check_one_sided(germ, basis, psis)
    dens = np.stack([as_grid_function(psi, grid).samples for psi in psis]) * grid.cell_volume
    lo = np.min([psi.lo for psi in psis], axis=0)
    hi = np.max([psi.hi for psi in psis], axis=0)
    levels = list(range(n_min, n_max + 1))
    values = np.empty((germ.n_paths, len(levels), len(psis)))
    axes = list(range(1, grid.d + 1))
    for li, n in enumerate(levels):
        mesh = mesh_points(n, scaling, (lo, hi), basis=basis)
        check_inside(basis, mesh, grid)
        F = germ.at_mesh(basis, mesh)
        c = coefficients(basis, dens, grid, mesh)
        values[:, li, :] = np.tensordot(F, c, axes=(axes, axes))
    return ReconstructionRun(levels, values, variant, germ.p if p is None else p)


def run_reconstruction(germ_factory, basis, psis, n_min, n_max, n_paths, seed, variant="one-sided",
                       workers=1, block=mc.DEFAULT_BLOCK):
    """Block-parallel :func:`reconstruct`; ``germ_factory(rng, count)`` builds each block."""
    res = mc.map_blocks(lambda rng, count, i: reconstruct(germ_factory(rng, count), basis, psis,
                                                          n_min, n_max, variant),
                        n_paths, seed, block, workers)
    return ReconstructionRun.concatenate(res)


def two_sided_offsets(x, lam, R_tilde, C_tilde, scaling, e=None):
    """Cuts ``pi_i(x) - lam**s_i (R_tilde + C_tilde)`` for stochastic axes ``i < e``."""
    if R_tilde <= 0 or C_tilde <= 0:
        raise ArgumentError("R_tilde and C_tilde must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    e = scaling.d if e is None else e
    return [FiltrationCut(i, float(x[i] - lam ** scaling.exponents[i] * (R_tilde + C_tilde)))
            for i in range(e)]


def _cuts_for(germ, x, lam, variant, R_tilde, C_tilde):
    if variant == "two-sided":
        return two_sided_offsets(x, lam, R_tilde, C_tilde, germ.scaling, germ.e)
    return [FiltrationCut(i, float(x[i])) for i in range(germ.e)]


def residuals(germ, basis, psi, lams, xs, n, conditional=False, variant="one-sided",
              C_tilde=None):
    """``(f_n - F_x)(psi_x^lam)`` per path, shape ``(M, len(lams), len(xs))``.

    With ``conditional`` the germ is first conditioned on the past of
    ``pi_i(x)`` (one-sided) or of the two-sided offsets, which by
    linearity conditions ``f_n`` as well.
    """
    scaling = germ.scaling
    xs = [np.atleast_1d(np.asarray(x, dtype=float)) for x in xs]
    R_tilde = float(np.max(np.abs(np.concatenate([psi.lo, psi.hi]))))
    C_tilde = R_tilde if C_tilde is None else C_tilde
    out = np.empty((germ.n_paths, len(lams), len(xs)))
    if not conditional:
        tests = [psi.localize(x, lam, scaling) for lam in lams for x in xs]
        f = reconstruct(germ, basis, tests, n, n, variant).limit
        F = np.stack([germ.evaluate(x, t) for t, (lam, x) in
                      zip(tests, [(lam, x) for lam in lams for x in xs])], axis=1)
        return (f - F).reshape(germ.n_paths, len(lams), len(xs))
    for i, lam in enumerate(lams):
        for j, x in enumerate(xs):
            g = germ
            for cut in _cuts_for(germ, x, lam, variant, R_tilde, C_tilde):
                g = g.conditioned(cut)
            test = psi.localize(x, lam, scaling)
            f = reconstruct(g, basis, [test], n, n, variant).limit[:, 0]
            out[:, i, j] = f - g.evaluate(x, test)
    return out


@dataclass
class ErrorRateReport:
    """Residual norms over a ``lam`` ladder and their log-log fit."""

    fit: RateFit
    lams: list
    norms: list
    mean: list
    se: list
    conditional: bool
    n_paths: int

    def to_dict(self):
        out = asdict(self)
        out["fit"] = self.fit.to_dict()
        return out


def fit_error_rate(germ_factory, basis, psi, lams, xs, n, conditional=False, n_paths=1000,
                   seed=0, variant="one-sided", p=2, workers=1, block=mc.DEFAULT_BLOCK):
    """Fit ``log ||(f - F_x)(psi_x^lam)||_{L_p}`` against ``log lam``.

    The norm at each ``lam`` is the maximum over ``xs``.  Mean and standard
    error are reported per ``(lam, x)``.
    """
    lams = [float(v) for v in lams]
    for lam in lams:
        if not 0 < lam <= 1:
            raise ArgumentError("lambda must lie in (0, 1]")
    res = mc.map_blocks(lambda rng, count, i: residuals(germ_factory(rng, count), basis, psi,
                                                        lams, xs, n, conditional, variant),
                        n_paths, seed, block, workers)
    r = np.concatenate(res, axis=0)
    norms = mc.lp_norm(r, p)
    mean, se = mc.mean_se(r)
    fit = fit_loglog(lams, norms.max(axis=1), base=2)
    return ErrorRateReport(fit, lams, norms.tolist(), mean.tolist(), se.tolist(), conditional,
                           int(n_paths))


def regularity_check(alpha, gamma, E, r_tilde):
    """Warn when ``alpha + r`` or ``gamma - E/2 + r`` is not positive."""
    bad = []
    if alpha + r_tilde <= 0:
        bad.append(f"alpha + r = {alpha + r_tilde:.3g}")
    if gamma - E / 2 + r_tilde <= 0:
        bad.append(f"gamma - E/2 + r = {gamma - E / 2 + r_tilde:.3g}")
    if bad:
        warnings.warn("basis too rough for the germ: " + ", ".join(bad) +
                      "; choose a basis with more vanishing moments", RegularityWarning)
    return not bad


@dataclass
class CovarianceCheck:
    """Mixed moments ``E[prod_i (f - F_{x_i})(psi_{x_i}^{lam_i})]``."""

    lams: list
    mean: list
    se: list
    magnitude: list
    fit: RateFit = None
    n_paths: int = 0

    def within(self, k=3.0):
        """True when every mixed moment lies within ``k`` standard errors of 0."""
        return bool(np.all(np.abs(self.mean) <= k * np.asarray(self.se) + DEGENERATE_FLOOR))

    def to_dict(self):
        out = asdict(self)
        out["fit"] = None if self.fit is None else self.fit.to_dict()
        return out


def _residual_support(x, lam, psi, e, scaling):
    R_tilde = float(np.max(np.abs(np.concatenate([psi.lo, psi.hi]))))
    return effective_support(x, None, None, e, "residual", lam, R_tilde, scaling)


def covariance_uniqueness_check(germ_factory, basis, psi, lams, pairs, n, n_paths=1000, seed=0,
                                psi2=None, lam_ratio=1.0, workers=1, block=mc.DEFAULT_BLOCK):
    """Mixed residual moments over point pairs with disjoint effective supports.

    Parameters
    ----------
    pairs : list of (x1, x2), or callable
        Point pairs, or a map ``lam -> pairs`` when they depend on the scale.
    psi2, lam_ratio : optional
        Second test function and scale ``lam2 = lam_ratio * lam`` for the
        mixed variant.
    """
    psi2 = psi if psi2 is None else psi2
    probe = germ_factory(np.random.default_rng(0), 1)
    S, e = probe.scaling, probe.e
    pair_fn = pairs if callable(pairs) else (lambda lam: pairs)
    table = []
    for lam in lams:
        row = [(np.atleast_1d(np.asarray(a, float)), np.atleast_1d(np.asarray(b, float)))
               for a, b in pair_fn(lam)]
        for a, b in row:
            if np.allclose(a, b):
                raise PreconditionError("paired base points coincide")
            sa = _residual_support(a, lam, psi, e, S)
            sb = _residual_support(b, lam * lam_ratio, psi2, e, S)
            if not sa.disjoint(sb):
                raise PreconditionError(f"residual effective supports overlap at lam={lam}")
        table.append(row)
    if len({len(row) for row in table}) != 1:
        raise ArgumentError("every lambda needs the same number of pairs")

    def run(rng, count, index):
        germ = germ_factory(rng, count)
        out = np.empty((count, len(lams), len(table[0])))
        for i, (lam, pairs) in enumerate(zip(lams, table)):
            t1 = [psi.localize(a, lam, S) for a, _ in pairs]
            t2 = [psi2.localize(b, lam * lam_ratio, S) for _, b in pairs]
            f = reconstruct(germ, basis, t1 + t2, n, n, "covariance").limit
            k = len(pairs)
            r1 = f[:, :k] - np.stack([germ.evaluate(a, t) for (a, _), t in zip(pairs, t1)], 1)
            r2 = f[:, k:] - np.stack([germ.evaluate(b, t) for (_, b), t in zip(pairs, t2)], 1)
            out[:, i, :] = r1 * r2
        return out

    prods = np.concatenate(mc.map_blocks(run, n_paths, seed, block, workers), axis=0)
    mean, se = mc.mean_se(prods)
    mag = (np.abs(mean) + 3 * se).max(axis=1)
    fit = fit_loglog(lams, mag, base=2) if len(lams) >= 4 else None
    return CovarianceCheck([float(v) for v in lams], mean.tolist(), se.tolist(), mag.tolist(),
                           fit, int(n_paths))


def _bdg_family(name, base, N, consts):
    count, n_max = base.shape
    if name == "constant":
        Z = np.broadcast_to(consts[:N], (count, N))
        return Z, Z
    if name == "iid":
        return base[:, :N], np.zeros((count, N))
    if name == "brownian":
        dB = base.reshape(count, N, n_max // N).sum(axis=2) / np.sqrt(n_max)
        B = np.concatenate([np.zeros((count, 1)), np.cumsum(dB, axis=1)[:, :-1]], axis=1)
        return B * dB, np.zeros((count, N))
    raise ArgumentError(f"unknown BDG family {name!r}")


@dataclass
class BDGTable:
    """Both sides of the martingale moment bound per ``N``."""

    family: str
    p: float
    Ns: list
    lhs: list
    rhs: list
    ratio: list
    trend: float
    constant: float
    trend_se: float = float("nan")

    def to_dict(self):
        return asdict(self)


def _bdg_sides(S, EZ, D, p):
    lhs = float(mc.lp_norm(S, p))
    rhs = float(mc.lp_norm(EZ, p).sum() + np.sqrt((mc.lp_norm(D, p) ** 2).sum()))
    return lhs, rhs


def bdg_verify(family, p, Ns, n_paths=5000, seed=0, workers=1, block=mc.DEFAULT_BLOCK,
               n_batches=10):
    """Monte Carlo check of ``||sum Z_i|| <= C (sum ||E_i Z_i|| + (sum ||Z_i - E_i Z_i||^2)^(1/2))``.

    Families are ``"constant"`` (``Z_i = 1 + sin(i)/2``), ``"iid"``
    (standard Gaussians) and ``"brownian"`` (``B_{t_i} (B_{t_{i+1}} - B_{t_i})``
    on ``[0, 1]``).  All ``N`` share the same underlying normals, obtained by
    aggregating the finest level.  ``E_i`` is computed exactly.

    ``trend`` is the least-squares slope of the ratio against ``log2 N``;
    ``trend_se`` is its standard error from ``n_batches`` disjoint batches
    of paths.
    """
    Ns = sorted(int(v) for v in Ns)
    n_max = Ns[-1]
    if any(n_max % N for N in Ns):
        raise ArgumentError("every N must divide the largest N")
    consts = 1.0 + 0.5 * np.sin(np.arange(1, n_max + 1))

    def run(rng, count, index):
        base = rng.standard_normal((count, n_max))
        out = []
        for N in Ns:
            Z, EZ = _bdg_family(family, base, N, consts)
            out.append((Z.sum(axis=1), EZ, Z - EZ))
        return out

    res = mc.map_blocks(run, n_paths, seed, block, workers)
    lhs, rhs = [], []
    batches = np.array_split(np.arange(n_paths), n_batches) if n_paths >= 2 * n_batches else []
    batch_ratio = np.empty((len(batches), len(Ns)))
    for k, N in enumerate(Ns):
        S = np.concatenate([r[k][0] for r in res])
        EZ = np.concatenate([r[k][1] for r in res])
        D = np.concatenate([r[k][2] for r in res])
        a, b = _bdg_sides(S, EZ, D, p)
        lhs.append(a)
        rhs.append(b)
        for j, idx in enumerate(batches):
            a, b = _bdg_sides(S[idx], EZ[idx], D[idx], p)
            batch_ratio[j, k] = a / b
    ratio = np.asarray(lhs) / np.asarray(rhs)
    x = np.log2(Ns)
    trend = float(np.polyfit(x, ratio, 1)[0])
    trend_se = float("nan")
    if len(batches) >= 2 and len(Ns) >= 2:
        slopes = np.polyfit(x, batch_ratio.T, 1)[0]
        trend_se = float(np.std(slopes, ddof=1) / np.sqrt(len(batches)))
    return BDGTable(family, p, Ns, lhs, rhs, ratio.tolist(), trend, float(ratio.max()), trend_se)


@dataclass
class KolmogorovEstimate:
    """Pathwise Kolmogorov constant and its ingredients.

    Attributes
    ----------
    levels : list of int
    B_n, B_hat_n : ndarray
        Normalized level suprema, shape ``(M, len(levels))``.
    c_n : ndarray
    B : ndarray
        Pathwise constant, shape ``(M,)``.
    norm : float
        ``||B||_{L_p}``.
    """

    levels: list
    B_n: np.ndarray
    B_hat_n: np.ndarray
    c_n: np.ndarray
    B: np.ndarray
    norm: float
    p: float
    alpha: float
    kappa: float

    def to_dict(self):
        return {"levels": list(self.levels), "c_n": self.c_n.tolist(), "norm": self.norm,
                "p": self.p, "alpha": self.alpha, "kappa": self.kappa,
                "B_n_mean": self.B_n.mean(axis=0).tolist(),
                "B_hat_n_mean": self.B_hat_n.mean(axis=0).tolist()}


def kolmogorov_constant(phi_values, detail_values, levels, alpha, p, scaling, r_tilde,
                        kappa=0.05, D=1.0):
    """Pathwise constant from wavelet coefficients of a random distribution.

    Parameters
    ----------
    phi_values, detail_values : list of ndarray
        Per level, ``f(phi_x^n)`` and ``f(detail_x^n)`` of shape ``(M, K_n)``
        over all mesh points with support in the fattened box.
    levels : list of int
    alpha : float
        Negative regularity.
    r_tilde : float
        Regularity gain of the detail coefficients.
    kappa : float
        Exponent margin ``alpha - |S|/p - alpha_hat``.
    """
    levels = np.asarray(levels, dtype=float)
    rank = scaling.rank
    c_n = 2.0 ** (-levels * (0.5 - 1.0 / p) * rank - levels * alpha)
    B_n = np.stack([np.abs(v).max(axis=1, initial=0.0) for v in phi_values], axis=1) / c_n
    B_hat = np.stack([np.abs(v).max(axis=1, initial=0.0) for v in detail_values], axis=1) / c_n
    expo = alpha - rank / p + r_tilde
    L = levels.size
    total = np.empty_like(B_n)
    for i in range(L):
        w = 2.0 ** (-(levels[i:] - levels[i]) * expo)
        total[:, i] = 2.0 ** (-levels[i] * kappa) * (B_n[:, i] + B_hat[:, i:] @ w)
    B = D * total.max(axis=1)
    return KolmogorovEstimate(levels.astype(int).tolist(), B_n, B_hat, c_n, B,
                              float(mc.lp_norm(B, p)), p, alpha, kappa)


def inside_mesh(level, scaling, box, basis):
    """Mesh points whose basis-function support lies inside ``box``."""
    mesh = mesh_points(level, scaling, box, basis=basis)
    lo = np.atleast_1d(np.asarray(box[0], float))
    hi = np.atleast_1d(np.asarray(box[1], float))
    sp = mesh.spacing
    first, shape = [], []
    for i in range(scaling.d):
        m0 = int(np.ceil(lo[i] / sp[i] - basis.C - 1e-9))
        m1 = int(np.floor(hi[i] / sp[i] - basis.R + 1e-9))
        first.append(m0)
        shape.append(max(0, m1 - m0 + 1))
    return type(mesh)(level, scaling, mesh.box, tuple(np.zeros(scaling.d)), tuple(first),
                      tuple(shape))


def wavelet_values(density, grid, basis, scaling, box, levels):
    """``f(phi_x^n)`` and the worst-case detail values over the inside meshes.

    ``density`` has shape ``(M, *grid.shape)``; returns two lists of
    ``(M, K_n)`` arrays.
    """
    phis, dets = [], []
    M = density.shape[0]
    for n in levels:
        mesh = inside_mesh(n, scaling, box, basis)
        check_inside(basis, mesh, grid)
        phis.append(coefficients(basis, density, grid, mesh).reshape(M, -1))
        dets.append(np.concatenate([coefficients(basis, density, grid, mesh, m).reshape(M, -1)
                                    for m in detail_masks(grid.d)], axis=1))
    return phis, dets


__all__ = ["BDGTable", "CovarianceCheck", "ErrorRateReport", "KolmogorovEstimate",
           "ReconstructionRun", "RegularityWarning", "bdg_verify",
           "covariance_uniqueness_check", "fit_error_rate", "inside_mesh",
           "kolmogorov_constant", "reconstruct", "regularity_check", "residuals",
           "run_reconstruction", "two_sided_offsets", "wavelet_values"]
