"""Random germs, coherence estimators and effective supports.

A germ object carries the randomness of one block of Monte Carlo paths.
``evaluate(x, psi)`` returns ``F_x(psi)`` for every path of the block and
``at_mesh(basis, mesh)`` returns ``F_y(phi_y^n)`` for every mesh point,
which is all the reconstruction needs.
"""
import itertools
from dataclasses import asdict, dataclass, field
from math import factorial

import numpy as np

from . import mc
from .errors import ArgumentError, CapabilityError, DomainError
from .fitting import DEGENERATE_FLOOR, median_slope
from .grid import GridFunction, ScalingVector, TestFunction, as_grid_function
from .noise import FiltrationCut, NoiseField, RandomField, _past_mask, make_rng
from .wavelet import check_inside, coefficients

CONDITIONING = ("exact-linear", "monte-carlo", "none")


class DeterministicDistribution:
    """Distribution ``h(psi) = int g psi`` with a path-independent density."""

    def __init__(self, grid, g):
        if callable(g):
            samples = np.broadcast_to(g(*grid.center_coords()), grid.shape)
        else:
            samples = np.asarray(g, dtype=float)
        self.grid = grid
        self.samples = np.asarray(samples, dtype=float)
        self.density = (self.samples * grid.cell_volume)[None]

    def evaluate(self, psi):
        s = psi if isinstance(psi, np.ndarray) else as_grid_function(psi, self.grid).samples
        return np.atleast_1d(np.tensordot(self.density, s, axes=self.grid.d))

    def condition_past(self, cut):
        return self


class Germ:
    """Base class: ``x -> F_x`` with stochastic directions ``0..e-1``."""

    conditioning = "none"

    def __init__(self, grid, scaling=None, stochastic_directions=0, p=2):
        self.grid = grid
        self.scaling = scaling if scaling is not None else ScalingVector.canonical(grid.d)
        if not 0 <= stochastic_directions <= grid.d:
            raise ArgumentError("stochastic dimension must lie in 0..d")
        if p < 2:
            raise ArgumentError("integrability exponent p must be >= 2")
        self.e = int(stochastic_directions)
        self.p = p

    @property
    def E(self):
        """Sum of the scaling exponents of the stochastic directions."""
        return float(sum(self.scaling.exponents[:self.e]))

    @property
    def n_paths(self):
        raise NotImplementedError

    def evaluate(self, x, psi):
        raise NotImplementedError

    def at_mesh(self, basis, mesh):
        """``F_y(phi_y^n)`` for all mesh points, shape ``(M, *mesh.shape)``.

        The generic version loops over mesh points.
        """
        from .wavelet import wavelet_function

        check_inside(basis, mesh, self.grid)
        pts = mesh.points()
        out = np.empty((self.n_paths, pts.shape[0]))
        for k, y in enumerate(pts):
            phi = wavelet_function(basis, mesh.level, y, mesh.scaling, self.grid)
            out[:, k] = self.evaluate(y, phi)
        return out.reshape((self.n_paths,) + mesh.shape)

    def conditioned(self, cut):
        """Germ whose evaluations are ``E^{F_t}`` of the original ones."""
        raise CapabilityError(f"{type(self).__name__} does not support conditioning")

    def _check_point(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if not self.grid.contains(x, x):
            raise DomainError(f"base point {x} outside the grid")
        return x


class ConstantGerm(Germ):
    """``F_x = h`` for every ``x``."""

    def __init__(self, h, scaling=None, stochastic_directions=0, p=2):
        super().__init__(h.grid, scaling, stochastic_directions, p)
        self.h = h
        self.conditioning = "exact-linear"

    @property
    def n_paths(self):
        return self.h.density.shape[0]

    def evaluate(self, x, psi):
        return self.h.evaluate(psi)

    def at_mesh(self, basis, mesh):
        check_inside(basis, mesh, self.grid)
        return coefficients(basis, self.h.density, self.grid, mesh)

    def conditioned(self, cut):
        return ConstantGerm(self.h.condition_past(cut), self.scaling, self.e, self.p)


class NoiseProductGerm(Germ):
    """``F_z(psi) = X(z) xi(psi)`` for a field ``X`` and noise ``xi``."""

    def __init__(self, X, noise, scaling=None, stochastic_directions=None, p=2):
        if X.grid != noise.grid:
            raise ArgumentError("field and noise must share a grid")
        if X.n_paths not in (1, noise.n_paths):
            raise ArgumentError("field and noise have different path counts")
        e = len(X.adapted_directions) if stochastic_directions is None else stochastic_directions
        super().__init__(noise.grid, scaling, e, p)
        self.X = X
        self.noise = noise
        self.conditioning = "exact-linear"

    @property
    def n_paths(self):
        return self.noise.n_paths

    def evaluate(self, x, psi):
        x = self._check_point(x)
        return self.X.node_values(x[None])[:, 0] * self.noise.evaluate(psi)

    def at_mesh(self, basis, mesh):
        check_inside(basis, mesh, self.grid)
        return self.X.mesh_values(mesh) * coefficients(basis, self.noise.cells, self.grid, mesh)

    def conditioned(self, cut):
        if cut.direction not in self.X.adapted_directions:
            raise CapabilityError(f"field is not adapted in direction {cut.direction}")
        return NoiseProductGerm(self.X.condition_past(cut), self.noise.condition_past(cut),
                                self.scaling, self.e, self.p)


def noise_product_germ(X, noise, scaling=None, stochastic_directions=None, p=2):
    return NoiseProductGerm(X, noise, scaling, stochastic_directions, p)


def _multi_indices(d, k):
    return [b for b in itertools.product(range(k + 1), repeat=d) if sum(b) <= k]


class YoungGerm(Germ):
    """``F_x(psi) = h(T_x g psi)`` with the order-``k`` Taylor polynomial of ``g``."""

    def __init__(self, g, h, taylor_order=0, scaling=None, stochastic_directions=0, p=2):
        if not isinstance(g, RandomField):
            g = RandomField.deterministic(h.grid, g, range(h.grid.d))
        if g.grid != h.grid:
            raise ArgumentError("g and h must share a grid")
        if taylor_order > g.smoothness:
            raise ArgumentError(f"Taylor order {taylor_order} exceeds the smoothness of g")
        super().__init__(h.grid, scaling, stochastic_directions, p)
        self.g, self.h, self.k = g, h, int(taylor_order)
        self.betas = _multi_indices(self.grid.d, self.k)
        self._derivs = {}
        for beta in self.betas:
            arr = g.values
            for axis, order in enumerate(beta):
                for _ in range(order):
                    arr = np.gradient(arr, self.grid.h[axis], axis=axis + 1, edge_order=2)
            self._derivs[beta] = arr / np.prod([factorial(b) for b in beta])
        self.conditioning = "exact-linear" if g.n_paths == 1 else "none"

    @property
    def n_paths(self):
        return max(self.h.density.shape[0], self.g.n_paths)

    def evaluate(self, x, psi):
        x = self._check_point(x)
        s = as_grid_function(psi, self.grid).samples
        idx = tuple(self.grid.node_index(i, x[i]) for i in range(self.grid.d))
        total = 0.0
        for beta in self.betas:
            poly = 1.0
            for i, c in enumerate(self.grid.center_coords()):
                poly = poly * (c - x[i]) ** beta[i]
            coef = self._derivs[beta][(slice(None),) + idx]
            total = total + coef * self.h.evaluate(s * poly)
        return np.broadcast_to(total, (self.n_paths,)).copy()

    def at_mesh(self, basis, mesh):
        check_inside(basis, mesh, self.grid)
        idx = [self.grid.node_index(i, mesh.axis_points(i)) for i in range(self.grid.d)]
        total = 0.0
        for beta in self.betas:
            coef = self._derivs[beta][np.ix_(np.arange(self._derivs[beta].shape[0]), *idx)]
            total = total + coef * coefficients(basis, self.h.density, self.grid, mesh,
                                                moments=beta)
        return total

    def conditioned(self, cut):
        if self.g.n_paths != 1:
            raise CapabilityError("Young germ with random g has no exact conditioning")
        return YoungGerm(self.g, self.h.condition_past(cut), self.k, self.scaling, self.e, self.p)


def young_germ(g, h, taylor_order=0, scaling=None, stochastic_directions=0, p=2):
    return YoungGerm(g, h, taylor_order, scaling, stochastic_directions, p)


class SewingGerm(Germ):
    """``F_s(psi) = -sum_t A(s, t) psi'(t) dt`` on the node grid (one dimension)."""

    def __init__(self, A, p=2):
        if A.grid.d != 1:
            raise ArgumentError("sewing germs are one-dimensional")
        super().__init__(A.grid, ScalingVector([1]), 1, p)
        self.A = A
        self.conditioning = "exact-linear" if A.conditionable else "none"

    @property
    def n_paths(self):
        return self.A.n_paths

    def evaluate(self, s, psi):
        s = self._check_point(s)
        gf = as_grid_function(psi, self.grid)
        dpsi = gf.derivative_nodes(0)  # raises when psi has no derivative
        i = self.grid.node_index(0, s[0])
        vals = self.A.A_idx(np.array([i]), np.arange(self.grid.shape[0] + 1)[None, :])[:, 0]
        return -(vals * dpsi).sum(axis=1) * self.grid.h[0]

    def at_mesh(self, basis, mesh):
        # summation by parts: F_y(phi) = sum_c phi(c) (A(y, t_{c+1}) - A(y, t_c))
        from .wavelet import _axis_plan

        check_inside(basis, mesh, self.grid)
        ratio, start = _axis_plan(basis, mesh, self.grid, 0)
        w = basis.taps_on_grid(mesh.level, mesh.scaling.exponents[0], ratio)
        iy = self.grid.node_index(0, mesh.axis_points(0))
        cells = start + ratio * np.arange(mesh.shape[0])[:, None] + np.arange(w.size)[None, :]
        dA = self.A.A_idx(iy[:, None], cells + 1) - self.A.A_idx(iy[:, None], cells)
        return dA @ w

    def conditioned(self, cut):
        if not self.A.conditionable:
            raise CapabilityError("sewing input has no exact conditioning")
        return SewingGerm(self.A.condition_past(cut), self.p)


def sewing_germ(A, p=2):
    return SewingGerm(A, p)


class MonteCarloConditionedGerm(Germ):
    """Conditional expectation estimated by resampling future noise cells.

    ``builder(noise)`` rebuilds the germ from a white noise field.  This is
    an estimator, not an exact conditional expectation.
    """

    conditioning = "monte-carlo"

    def __init__(self, builder, noise, cut, n_inner=32, seed=0):
        base = builder(noise)
        super().__init__(base.grid, base.scaling, base.e, base.p)
        self.builder, self.noise, self.cut = builder, noise, cut
        self.n_inner, self.seed = int(n_inner), seed

    @property
    def n_paths(self):
        return self.noise.n_paths

    def _germs(self):
        rng = make_rng(self.seed)
        keep = _past_mask(self.noise.grid, self.cut)
        keep = 1.0 if keep is None else keep
        vol = self.noise.grid.cell_volume
        for _ in range(self.n_inner):
            fresh = rng.standard_normal(self.noise.cells.shape) * np.sqrt(vol)
            cells = keep * self.noise.cells + (1.0 - keep) * fresh
            yield self.builder(NoiseField(self.noise.grid, cells, self.noise.kind, None,
                                          self.noise.time_axis))

    def evaluate(self, x, psi):
        return sum(g.evaluate(x, psi) for g in self._germs()) / self.n_inner

    def at_mesh(self, basis, mesh):
        return sum(g.at_mesh(basis, mesh) for g in self._germs()) / self.n_inner


def monte_carlo_conditioned(builder, noise, cut, n_inner=32, seed=0):
    return MonteCarloConditionedGerm(builder, noise, cut, n_inner, seed)


@dataclass
class EffectiveSupport:
    """Axis-aligned box; the first ``e`` axes form the stochastic part."""

    lo: np.ndarray
    hi: np.ndarray
    e: int

    def stochastic_part(self):
        return self.lo[:self.e], self.hi[:self.e]

    def disjoint(self, other):
        """True if the stochastic parts do not overlap (symmetric)."""
        a_lo, a_hi = self.stochastic_part()
        b_lo, b_hi = other.stochastic_part()
        return bool(np.any((a_hi <= b_lo) | (b_hi <= a_lo)))


def effective_support(x, y, psi_support, e, mode="difference", lam=None, R_tilde=None,
                      scaling=None):
    """Effective support of ``(F_x - F_y)(psi)`` or of ``(f - F_x)(psi_x^lam)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if mode == "difference":
        y = np.atleast_1d(np.asarray(y, dtype=float))
        plo, phi_ = (np.atleast_1d(np.asarray(v, dtype=float)) for v in psi_support)
        lo = np.minimum(np.minimum(x, y), plo)
        hi = np.maximum(np.maximum(x, y), phi_)
        return EffectiveSupport(lo, hi, e)
    if mode == "residual":
        if lam is None or R_tilde is None:
            raise ArgumentError("residual mode needs lam and R_tilde")
        scaling = scaling if scaling is not None else ScalingVector.canonical(x.size)
        width = 2.0 * float(lam) ** scaling.s * float(R_tilde)
        return EffectiveSupport(x.copy(), x + width, e)
    raise ArgumentError(f"unknown effective-support mode {mode!r}")


@dataclass
class CoherenceReport:
    """Fitted coherence exponents from a design of ``(eps, |x - y|)`` pairs."""

    mode: str
    alpha_hat: float
    gamma_hat: float
    gamma_prime: float
    gap_exponent: float
    alpha_se: float
    gap_se: float
    r_squared: float
    sample_count: int
    eps: list
    distances: list
    norms: list
    degenerate: bool = False
    flag: str = ""
    E: float = 0.0
    mixed_mean: list = field(default_factory=list)
    mixed_se: list = field(default_factory=list)
    seed: object = None

    def to_dict(self):
        out = asdict(self)
        out["seed"] = None if self.seed is None else str(self.seed)
        return out


def _fit_exponents(eps, dist, norms, separation=2.0):
    """Robust fit of ``log N = c + alpha log eps + beta log dist``.

    Only the separated pairs ``dist >= separation * eps`` enter, where
    ``(dist + eps)`` and ``dist`` agree up to a bounded factor.  Slopes are
    medians of per-group Theil-Sen slopes, alternated until stable; an OLS
    fit on the same points supplies standard errors and ``R^2``.
    """
    E_, D_ = np.meshgrid(eps, dist, indexing="ij")
    ok = (D_ >= separation * E_) & (norms > 0)
    le, ld = np.log2(E_), np.log2(D_)
    ly = np.log2(np.where(norms > 0, norms, 1.0))
    if ok.sum() < 4:
        raise ArgumentError("fewer than 4 separated design points with positive norms")
    alpha, beta = 0.0, 0.0
    for _ in range(100):
        sl = [median_slope(le[ok[:, j], j], ly[ok[:, j], j] - beta * ld[ok[:, j], j])
              for j in range(len(dist)) if ok[:, j].sum() >= 2]
        new_alpha = float(np.median(sl))
        sl = [median_slope(ld[i, ok[i]], ly[i, ok[i]] - new_alpha * le[i, ok[i]])
              for i in range(len(eps)) if ok[i].sum() >= 2]
        new_beta = float(np.median(sl))
        done = abs(new_alpha - alpha) < 1e-12 and abs(new_beta - beta) < 1e-12
        alpha, beta = new_alpha, new_beta
        if done:
            break
    A = np.column_stack([np.ones(ok.sum()), le[ok], ld[ok]])
    coef, *_ = np.linalg.lstsq(A, ly[ok], rcond=None)
    resid = ly[ok] - A @ coef
    dof = max(A.shape[0] - 3, 1)
    cov = float(resid @ resid) / dof * np.linalg.inv(A.T @ A)
    ss = float(((ly[ok] - ly[ok].mean()) ** 2).sum())
    r2 = 1.0 - float(resid @ resid) / ss if ss > 0 else 1.0
    return alpha, beta, float(np.sqrt(cov[1, 1])), float(np.sqrt(cov[2, 2])), r2


def estimate_coherence(germ_factory, psi, y, eps, distances, mode="plain", n_paths=1000,
                       seed=0, p=None, workers=1, block=mc.DEFAULT_BLOCK, pair_gap=None):
    """Monte Carlo estimate of the coherence exponents of a germ.

    Parameters
    ----------
    germ_factory : callable
        ``germ_factory(rng, count)`` returns a germ for one block of paths.
    psi : TestFunction
        Positive support on the stochastic axes.
    y : array_like
        Base point; ``x = y - dist`` along axis 0 (homogeneous distance).
    eps, distances : sequence of float
        Scale and distance ladders (full factorial design).
    mode : {"plain", "conditional", "covariance"}
    """
    eps = np.asarray(eps, dtype=float)
    distances = np.asarray(distances, dtype=float)
    if eps.size * distances.size < 12:
        raise ArgumentError("coherence fit needs at least 12 design points")
    if mode not in ("plain", "conditional", "covariance"):
        raise ArgumentError(f"unknown coherence mode {mode!r}")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    probe = germ_factory(np.random.default_rng(0), 1)
    scaling, e = probe.scaling, probe.e
    p = probe.p if p is None else p
    if mode != "covariance" and e > 0 and np.any(psi.lo[:e] < 0):
        raise ArgumentError("psi must have positive support on the stochastic axes")
    if mode == "conditional":
        if probe.conditioning == "none":
            raise CapabilityError("germ offers no conditional expectation")
        probe.conditioned(FiltrationCut(0, float(y[0])))  # raises if unavailable
    s0 = scaling.exponents[0]

    def xs(dist):
        x = y.copy()
        x[0] -= dist ** s0
        return x

    R_tilde = float(np.max(np.abs(np.concatenate([psi.lo, psi.hi]))))
    gap = pair_gap if pair_gap is not None else 0.0

    def second_base(ep, dist):
        # shift the second pair so that stochastic effective supports are disjoint
        shift = (dist ** s0 + ep ** s0 * R_tilde) + gap + ep ** s0
        return y + np.eye(y.size)[0] * shift

    def run(rng, count, index):
        germ = germ_factory(rng, count)
        vals = np.empty((count, eps.size, distances.size))
        prods = np.empty_like(vals)
        for i, ep in enumerate(eps):
            test = psi.localize(y, ep, scaling)
            for j, dist in enumerate(distances):
                x = xs(dist)
                g = germ
                if mode == "conditional":
                    g = germ.conditioned(FiltrationCut(0, float(x[0])))
                vals[:, i, j] = g.evaluate(x, test) - g.evaluate(y, test)
                if mode == "covariance":
                    y2 = second_base(ep, dist)
                    x2 = y2.copy()
                    x2[0] -= dist ** s0
                    t2 = psi.localize(y2, ep, scaling)
                    prods[:, i, j] = vals[:, i, j] * (germ.evaluate(x2, t2) - germ.evaluate(y2, t2))
        return {"vals": vals, "prods": prods}

    res = mc.map_blocks(run, n_paths, seed, block, workers)
    vals = mc.concat(res, "vals")
    norms = mc.lp_norm(vals, p)
    report = dict(mode=mode, sample_count=int(n_paths), eps=eps.tolist(),
                  distances=distances.tolist(), norms=norms.tolist(), E=probe.E, seed=seed)
    if mode == "covariance":
        prods = mc.concat(res, "prods")
        mean, se = mc.mean_se(prods)
        report.update(mixed_mean=mean.tolist(), mixed_se=se.tolist())
    if np.all(norms < DEGENERATE_FLOOR):
        flag = ("vanishing conditional part" if mode == "conditional"
                else "coherent at every gamma")
        nan = float("nan")
        return CoherenceReport(alpha_hat=nan, gamma_hat=nan, gamma_prime=nan, gap_exponent=nan,
                               alpha_se=nan, gap_se=nan, r_squared=nan, degenerate=True,
                               flag=flag, **report)
    alpha, beta, a_se, b_se, r2 = _fit_exponents(eps, distances, norms)
    gamma_prime = alpha + beta
    gamma_hat = gamma_prime + probe.E / 2.0 if mode in ("plain", "covariance") else gamma_prime
    return CoherenceReport(alpha_hat=alpha, gamma_hat=gamma_hat, gamma_prime=gamma_prime,
                           gap_exponent=beta, alpha_se=a_se, gap_se=b_se, r_squared=r2, **report)
