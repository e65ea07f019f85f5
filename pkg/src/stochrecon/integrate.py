"""Reference integrators: dyadic stochastic sewing and the Walsh integral.

These are computed directly from the noise, independently of the wavelet
machinery, and serve as oracles for reconstruction limits.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, CapabilityError
from .fitting import fit_loglog
from .grid import Grid, ScalingVector, as_grid_function


class SewingInput:
    """Two-parameter process ``A(s, t)`` sampled on the nodes of a 1-d grid.

    Parameters
    ----------
    grid : Grid
        One-dimensional grid on ``[0, T]``.
    A_idx : callable
        ``A_idx(i, j)`` takes broadcastable node-index arrays with
        ``i <= j`` inside ``0..G`` and returns ``(M, *broadcast)``.
    n_paths : int
    conditioner : callable, optional
        ``conditioner(cut)`` returns the input whose values are the
        conditional expectations given the past of ``cut.time``.
    """

    def __init__(self, grid, A_idx, n_paths, conditioner=None, name="custom"):
        if grid.d != 1:
            raise ArgumentError("sewing inputs live on one-dimensional grids")
        self.grid = grid
        self._raw = A_idx
        self.n_paths = int(n_paths)
        self._conditioner = conditioner
        self.name = name

    @property
    def T(self):
        return float(self.grid.hi[0] - self.grid.lo[0])

    @property
    def conditionable(self):
        return self._conditioner is not None

    def A_idx(self, i, j):
        """Values at node indices; ``A(t, s) = -A(s, t)`` and ``A(s, s) = 0``."""
        G = self.grid.shape[0]
        i, j = np.broadcast_arrays(np.clip(np.asarray(i), 0, G), np.clip(np.asarray(j), 0, G))
        lo, hi = np.minimum(i, j), np.maximum(i, j)
        sign = np.where(i <= j, 1.0, -1.0)
        return sign * self._raw(lo, hi)

    def __call__(self, s, t):
        """``A(s, t)`` for node times, extended constantly outside ``[0, T]``."""
        i = _clamped_index(self.grid, s)
        j = _clamped_index(self.grid, t)
        return self.A_idx(i, j)

    def condition_past(self, cut):
        if self._conditioner is None:
            raise CapabilityError("input has no exact conditioning")
        return self._conditioner(cut)


def _clamped_index(grid, t):
    pos = (np.asarray(t, dtype=float) - grid.lo[0]) / grid.h[0]
    idx = np.rint(pos)
    if np.any(np.abs(pos - idx) > 1e-7):
        raise ArgumentError(f"time {t} is not a grid node")
    return np.clip(idx.astype(np.int64), 0, grid.shape[0])


def extend_domain(A, T=None):
    """Extension of ``A`` from ``[0, T]^2`` by clamping times to ``[0, T]``.

    Gives ``A(s, t) = A(0, t)`` for ``s <= 0``, ``A(s, t) = A(s, T)`` for
    ``t >= T`` and ``A(s, t) = A(0, T)`` when both hold.  Index clamping is
    built into :class:`SewingInput`, so this only checks ``T``.
    """
    if T is not None and not np.isclose(T, A.T):
        raise ArgumentError("T must equal the input's time horizon")
    return A


def brownian_path(noise):
    """Node values ``B_{t_j}`` of the Brownian path of a 1-d white noise."""
    if noise.grid.d != 1:
        raise ArgumentError("Brownian paths need a one-dimensional noise")
    B = np.zeros((noise.n_paths, noise.grid.shape[0] + 1))
    np.cumsum(noise.cells, axis=1, out=B[:, 1:])
    return B


def ito_input(noise):
    """``A(s, t) = B_s (B_t - B_s)`` from a 1-d white noise on ``[0, T]``."""
    B = brownian_path(noise)

    def raw(i, j):
        return B[:, i] * (B[:, j] - B[:, i])

    def cond(cut):
        return ito_input(noise.condition_past(cut))

    return SewingInput(noise.grid, raw, noise.n_paths, cond, "ito")


def additive_input(grid, g, n_paths=1):
    """``A(s, t) = g(t) - g(s)`` for node values (or a callable) ``g``."""
    vals = g(grid.nodes(0)) if callable(g) else np.asarray(g, dtype=float)
    vals = np.broadcast_to(vals, (n_paths, grid.shape[0] + 1))

    def raw(i, j):
        return vals[:, j] - vals[:, i]

    return SewingInput(grid, raw, n_paths, lambda cut: additive_input(grid, vals, n_paths),
                       "additive")


def zero_input(grid, n_paths=1):
    def raw(i, j):
        return np.zeros((n_paths,) + np.shape(i))

    return SewingInput(grid, raw, n_paths, lambda cut: zero_input(grid, n_paths), "zero")


@dataclass
class SewingOutput:
    """Sewn process ``I_n`` at the level-``n`` dyadic times of ``[0, T]``."""

    times: np.ndarray
    values: np.ndarray
    level: int

    def at(self, t):
        k = int(np.rint(t / (self.times[1] - self.times[0])))
        return self.values[:, k]


def sew(A, n):
    """Dyadic Riemann sums ``I_n(t) = sum_{t_i < t} A(t_i, t_{i+1})``.

    Parameters
    ----------
    A : SewingInput
    n : int
        Dyadic level; the partition has mesh ``2**-n`` and must be
        resolved by the input grid.
    """
    if n < 2:
        raise ArgumentError("sewing level must be >= 2")
    L = A.grid.levels[0]
    if n > L:
        raise ArgumentError(f"sewing level {n} exceeds the grid level {L}")
    step = 2 ** (L - n)
    idx = np.arange(0, A.grid.shape[0] + 1, step)
    incr = A.A_idx(idx[:-1], idx[1:])
    values = np.zeros((A.n_paths, idx.size))
    np.cumsum(incr, axis=1, out=values[:, 1:])
    return SewingOutput(A.grid.nodes(0)[idx], values, n)


def sewn_pairing(A, psi, n=None):
    """``-sum_j I_n(t_j) psi'(t_j) dt`` over the grid nodes."""
    n = A.grid.levels[0] if n is None else n
    if n != A.grid.levels[0]:
        raise ArgumentError("pairing uses the full grid resolution")
    out = sew(A, n)
    gf = as_grid_function(psi, A.grid)
    return -(out.values * gf.derivative_nodes(0)).sum(axis=1) * A.grid.h[0]


def walsh_integral(X, W, psi):
    """Elementary integral ``sum_cells X(lower corner) psi(cell) W(cell)``.

    ``X`` is evaluated at the lower-left node of each cell, which is the
    past of the cell along every adapted axis.
    """
    if X.grid != W.grid:
        raise ArgumentError("field and noise must share a grid")
    s = as_grid_function(psi, W.grid).samples
    d = W.grid.d
    lower = X.values[(slice(None),) + tuple(slice(0, g) for g in W.grid.shape)]
    return np.tensordot(lower * W.cells, s, axes=d)


def isometry_variance(X, psi, K=None):
    """``E[(int X psi dW)^2]`` for deterministic ``X`` by quadrature.

    Equals ``sum_t ||X(t, .) psi(t, .)||_K^2 dt`` with ``K`` acting on the
    spatial axes (white when omitted or when the grid is one-dimensional).
    """
    grid = X.grid
    s = as_grid_function(psi, grid).samples
    lower = X.values[(0,) + tuple(slice(0, g) for g in grid.shape)]
    g = lower * s
    if K is None or K.kind == "white" or grid.d == 1:
        return float((g * g).sum() * grid.cell_volume)
    space = Grid(grid.lo[1:], grid.hi[1:], grid.levels[1:])
    return float(sum(K.quadratic_form(g[k], space) for k in range(grid.shape[0])) * grid.h[0])


def homogeneity_check(K, phi, lambdas, d, level=None, ppl=64):
    """Slope of ``lam -> int ||phi^lam(s, .)||_K^2 ds`` in log-log coordinates.

    ``phi`` is a test function on time plus ``d`` space axes centered at the
    origin.  Each ``lam`` uses its own grid with ``ppl`` cells per unit of
    ``lam``, so the quadrature error is the same at every scale.

    Returns
    -------
    RateFit
        Expected slope ``2 alpha`` with ``alpha = -d - 1/2 + delta/2``.
    """
    if phi.d != d + 1:
        raise ArgumentError("phi must live on time plus d space axes")
    scaling = ScalingVector.canonical(d + 1)
    vals = []
    for lam in lambdas:
        loc = phi.localize(np.zeros(d + 1), lam, scaling)
        L = int(np.round(np.log2(ppl / lam))) if level is None else level
        h = 2.0 ** -L
        lo = np.floor(loc.lo / h) * h
        hi = np.ceil(loc.hi / h) * h
        grid = Grid(lo, hi, L)
        g = loc.on(grid).samples
        space = Grid(grid.lo[1:], grid.hi[1:], grid.levels[1:])
        if K.kind == "white":
            total = float((g * g).sum() * grid.cell_volume)
        else:
            total = sum(K.quadratic_form(g[k], space) for k in range(grid.shape[0])) * grid.h[0]
        vals.append(total)
    return fit_loglog(np.asarray(lambdas, dtype=float), vals, base=2)
