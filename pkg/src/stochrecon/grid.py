"""Scalings, fine uniform grids and test functions sampled on them.

Every functional in the package is evaluated with the midpoint rule on a
fixed dyadic grid: a box ``[lo, hi)`` split into cells of side ``2**-L_i``
along axis ``i``.  Samples of a :class:`GridFunction` live at cell centers,
random fields live at cell nodes.
"""
import itertools

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .errors import ArgumentError, DomainError, ResolutionError

_TOL = 1e-9


class ScalingVector:
    """Anisotropic scaling ``S^lam x = (lam**s_1 x_1, ..., lam**s_d x_d)``.

    Parameters
    ----------
    exponents : sequence of int
        Positive integer exponents ``s_i``.
    """

    def __init__(self, exponents):
        exps = tuple(int(s) for s in np.atleast_1d(exponents))
        if not exps:
            raise ArgumentError("scaling needs at least one exponent")
        for s, raw in zip(exps, np.atleast_1d(exponents)):
            if s < 1 or s != raw:
                raise ArgumentError(f"scaling exponents must be integers >= 1, got {raw!r}")
        self.exponents = exps

    @classmethod
    def canonical(cls, d):
        return cls([1] * d)

    @classmethod
    def parabolic(cls, d):
        return cls([2] + [1] * (d - 1))

    @property
    def d(self):
        return len(self.exponents)

    @property
    def rank(self):
        """``|S|``, the sum of the exponents."""
        return sum(self.exponents)

    @property
    def s(self):
        return np.asarray(self.exponents, dtype=float)

    def norm(self, x):
        """Homogeneous norm ``sum_i |x_i|**(1/s_i)``."""
        x = np.asarray(x, dtype=float)
        return np.sum(np.abs(x) ** (1.0 / self.s), axis=-1)

    def dilate(self, lam, x):
        """Return ``S^lam x``."""
        return np.asarray(lam, dtype=float) ** self.s * np.asarray(x, dtype=float)

    def __eq__(self, other):
        return isinstance(other, ScalingVector) and self.exponents == other.exponents

    def __hash__(self):
        return hash(self.exponents)

    def __repr__(self):
        return f"ScalingVector({list(self.exponents)})"


def _on_lattice(value, level):
    scaled = np.asarray(value, dtype=float) * 2.0 ** level
    return np.all(np.abs(scaled - np.rint(scaled)) < _TOL)


class Grid:
    """Uniform dyadic grid on an axis-aligned box.

    Parameters
    ----------
    lo, hi : array_like
        Box corners.  Both must lie on the lattice ``2**-level Z`` per axis.
    levels : int or sequence of int
        Per-axis dyadic resolution ``L_i``; the spacing is ``2**-L_i``.
    """

    def __init__(self, lo, hi, levels):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        levels = np.broadcast_to(np.atleast_1d(np.asarray(levels, dtype=int)), lo.shape)
        if lo.shape != hi.shape:
            raise ArgumentError("lo and hi must have the same length")
        if np.any(hi <= lo):
            raise ArgumentError("grid volume must be positive")
        for i in range(lo.size):
            if not (_on_lattice(lo[i], levels[i]) and _on_lattice(hi[i], levels[i])):
                raise ResolutionError(
                    f"box edge on axis {i} is not a multiple of 2**-{levels[i]}")
        self.lo = lo
        self.levels = tuple(int(v) for v in levels)
        self.h = 2.0 ** -np.asarray(self.levels, dtype=float)
        self.shape = tuple(int(round(v)) for v in (hi - lo) / self.h)
        self.hi = lo + np.asarray(self.shape) * self.h

    @property
    def d(self):
        return self.lo.size

    @property
    def cell_volume(self):
        return float(np.prod(self.h))

    @property
    def volume(self):
        return float(np.prod(self.hi - self.lo))

    def centers(self, axis):
        return self.lo[axis] + (np.arange(self.shape[axis]) + 0.5) * self.h[axis]

    def nodes(self, axis):
        return self.lo[axis] + np.arange(self.shape[axis] + 1) * self.h[axis]

    def center_coords(self):
        """Open mesh of cell centers, suitable for broadcasting."""
        return np.ix_(*[self.centers(i) for i in range(self.d)])

    def node_coords(self):
        return np.ix_(*[self.nodes(i) for i in range(self.d)])

    @property
    def node_shape(self):
        return tuple(g + 1 for g in self.shape)

    def node_index(self, axis, value):
        """Integer index of a node, raising if ``value`` is not a node."""
        pos = (np.asarray(value, dtype=float) - self.lo[axis]) / self.h[axis]
        idx = np.rint(pos).astype(np.int64)
        if np.any(np.abs(pos - idx) > 1e-7):
            raise ResolutionError(f"point {value} is not on the axis-{axis} grid")
        if np.any(idx < 0) or np.any(idx > self.shape[axis]):
            raise DomainError(f"point {value} outside the axis-{axis} grid")
        return idx

    def contains(self, lo, hi):
        lo = np.atleast_1d(lo)
        hi = np.atleast_1d(hi)
        return bool(np.all(lo >= self.lo - _TOL) and np.all(hi <= self.hi + _TOL))

    def extended(self, pad_lo, pad_hi):
        """Grid with the same spacing, padded by the given widths."""
        return Grid(self.lo - np.asarray(pad_lo, float), self.hi + np.asarray(pad_hi, float),
                    self.levels)

    def commensurable(self, other):
        if self.d != other.d:
            return False
        if not (np.allclose(self.lo, other.lo) and np.allclose(self.hi, other.hi)):
            return False
        return True

    def spec(self):
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist(), "levels": list(self.levels)}

    def __eq__(self, other):
        return (isinstance(other, Grid) and self.levels == other.levels
                and np.allclose(self.lo, other.lo) and self.shape == other.shape)

    def __hash__(self):
        return hash((tuple(np.round(self.lo, 12)), self.levels, self.shape))

    def __repr__(self):
        return f"Grid(lo={self.lo.tolist()}, hi={self.hi.tolist()}, levels={list(self.levels)})"


class GridFunction:
    """Samples of a function at the cell centers of a grid.

    Parameters
    ----------
    grid : Grid
    samples : ndarray
        Array of shape ``grid.shape``.
    order : int
        Declared smoothness (number of grid derivatives that are meaningful).
    """

    def __init__(self, grid, samples, order=2):
        samples = np.asarray(samples, dtype=float)
        if samples.shape != grid.shape:
            raise ArgumentError(f"samples shape {samples.shape} != grid shape {grid.shape}")
        self.grid = grid
        self.samples = samples
        self.order = order

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape))

    def support(self):
        """Bounding box ``(lo, hi)`` of the nonzero cells, or None."""
        nz = np.nonzero(self.samples)
        if nz[0].size == 0:
            return None
        g = self.grid
        lo = np.array([g.lo[i] + nz[i].min() * g.h[i] for i in range(g.d)])
        hi = np.array([g.lo[i] + (nz[i].max() + 1) * g.h[i] for i in range(g.d)])
        return lo, hi

    def integral(self):
        return float(self.samples.sum() * self.grid.cell_volume)

    def norm(self, p=2):
        if np.isinf(p):
            return float(np.abs(self.samples).max())
        return float((np.abs(self.samples) ** p).sum() * self.grid.cell_volume) ** (1.0 / p)

    def derivative_nodes(self, axis=0):
        """Node-centered difference ``(psi_j - psi_{j-1}) / h``, zero outside the box.

        The result has one more entry than ``samples`` along ``axis``.
        """
        if self.order < 1:
            raise ArgumentError("test function has no grid derivative (order < 1)")
        pad = [(0, 0)] * self.grid.d
        pad[axis] = (1, 1)
        return np.diff(np.pad(self.samples, pad), axis=axis) / self.grid.h[axis]

    def reg_norm(self, r=None):
        """Sup of finite-difference derivatives up to order ``r``."""
        r = min(self.order, 2) if r is None else r
        best = float(np.abs(self.samples).max(initial=0.0))
        d = self.grid.d
        for total in range(1, int(r) + 1):
            for beta in itertools.product(range(total + 1), repeat=d):
                if sum(beta) != total:
                    continue
                arr = self.samples
                for axis, k in enumerate(beta):
                    for _ in range(k):
                        pad = [(0, 0)] * d
                        pad[axis] = (1, 1)
                        arr = np.diff(np.pad(arr, pad), axis=axis) / self.grid.h[axis]
                best = max(best, float(np.abs(arr).max(initial=0.0)))
        return best

    def _check(self, other):
        if not isinstance(other, GridFunction) or other.grid != self.grid:
            raise ResolutionError("grid functions live on different grids")

    def __add__(self, other):
        self._check(other)
        return GridFunction(self.grid, self.samples + other.samples, min(self.order, other.order))

    def __sub__(self, other):
        self._check(other)
        return GridFunction(self.grid, self.samples - other.samples, min(self.order, other.order))

    def __mul__(self, c):
        return GridFunction(self.grid, self.samples * float(c), self.order)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0


def _bump1d(u):
    out = np.zeros_like(u, dtype=float)
    inside = np.abs(u) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - u[inside] ** 2))
    return out


class TestFunction:
    """Analytic compactly supported test function.

    Parameters
    ----------
    func : callable
        ``func(*coords)`` evaluated with broadcasting coordinate arrays.
    lo, hi : array_like
        Box containing the support.
    order : int or float
        Declared smoothness, ``np.inf`` for smooth bumps.
    """

    __test__ = False  # not a pytest class

    def __init__(self, func, lo, hi, order=np.inf):
        self.func = func
        self.lo = np.atleast_1d(np.asarray(lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(hi, dtype=float))
        self.order = order

    @property
    def d(self):
        return self.lo.size

    @classmethod
    def bump(cls, lo, hi, height=1.0):
        """Smooth product bump ``prod_i exp(1 - 1/(1 - u_i**2))`` on ``[lo, hi]``."""
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        mid, half = (lo + hi) / 2, (hi - lo) / 2

        def f(*coords):
            val = height
            for i, c in enumerate(coords):
                val = val * _bump1d((np.asarray(c, dtype=float) - mid[i]) / half[i])
            return val

        return cls(f, lo, hi)

    @classmethod
    def indicator(cls, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))

        def f(*coords):
            val = 1.0
            for c in coords:
                val = val * np.ones_like(np.asarray(c, dtype=float))
            return val

        return cls(f, lo, hi, order=0)

    def __call__(self, *coords):
        coords = [np.asarray(c, dtype=float) for c in coords]
        val = np.asarray(self.func(*coords), dtype=float)
        inside = True
        for i, c in enumerate(coords):
            inside = inside & (c >= self.lo[i]) & (c <= self.hi[i])
        return np.where(inside, val, 0.0)

    def localize(self, x, lam, scaling):
        """Return ``lam**-|S| psi(S^{1/lam}(y - x))`` as a new test function."""
        if not 0 < lam <= 1:
            raise ArgumentError("lambda must lie in (0, 1]")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        width = float(lam) ** scaling.s
        norm = float(lam) ** -scaling.rank
        base = self

        def f(*coords):
            return norm * base.func(*[(c - x[i]) / width[i] for i, c in enumerate(coords)])

        return TestFunction(f, x + width * self.lo, x + width * self.hi, self.order)

    def __mul__(self, c):
        base = self
        return TestFunction(lambda *co: float(c) * base.func(*co), self.lo, self.hi, self.order)

    __rmul__ = __mul__

    def on(self, grid):
        """Sample at the cell centers of ``grid``."""
        if not grid.contains(self.lo, self.hi):
            raise DomainError(f"support [{self.lo}, {self.hi}] escapes {grid!r}")
        samples = np.broadcast_to(self(*grid.center_coords()), grid.shape).copy()
        order = self.order if np.isfinite(self.order) else 8
        return GridFunction(grid, samples, order=order)


def as_grid_function(psi, grid):
    if isinstance(psi, GridFunction):
        if psi.grid != grid:
            raise ResolutionError("test function lives on a different grid")
        return psi
    if isinstance(psi, TestFunction):
        return psi.on(grid)
    raise ArgumentError(f"cannot use {type(psi).__name__} as a test function")


def localize(psi, x, lam, scaling, grid=None):
    """Localized test function ``psi_x^lam``.

    Analytic inputs stay analytic unless ``grid`` is given.  Grid inputs are
    resampled on their own grid by linear interpolation.
    """
    if not 0 < lam <= 1:
        raise ArgumentError("lambda must lie in (0, 1]")
    if isinstance(psi, TestFunction):
        out = psi.localize(x, lam, scaling)
        return out if grid is None else out.on(grid)
    if not isinstance(psi, GridFunction):
        raise ArgumentError("psi must be a TestFunction or GridFunction")
    g = psi.grid
    x = np.atleast_1d(np.asarray(x, dtype=float))
    width = float(lam) ** scaling.s
    sup = psi.support()
    if sup is None:
        return GridFunction.zeros(g)
    new_lo, new_hi = x + width * sup[0], x + width * sup[1]
    if not g.contains(new_lo, new_hi):
        raise DomainError("localized support escapes the working box")
    axes = [g.centers(i) for i in range(g.d)]
    interp = RegularGridInterpolator(axes, psi.samples, bounds_error=False, fill_value=0.0)
    pts = np.meshgrid(*[(a - x[i]) / width[i] for i, a in enumerate(axes)], indexing="ij")
    vals = interp(np.stack(pts, axis=-1)) * float(lam) ** -scaling.rank
    return GridFunction(g, vals, psi.order)


def inner_product(f, g):
    """Midpoint-rule value of ``int f g`` for grid functions.

    Grids must share the box; when their resolutions differ the coarser one
    is refined by sample repetition, which requires one level to divide the
    other per axis.
    """
    if not f.grid.commensurable(g.grid):
        raise ResolutionError("grids do not share a box")
    a, b = f.samples, g.samples
    for axis in range(f.grid.d):
        la, lb = f.grid.levels[axis], g.grid.levels[axis]
        if la < lb:
            a = np.repeat(a, 2 ** (lb - la), axis=axis)
        elif lb < la:
            b = np.repeat(b, 2 ** (la - lb), axis=axis)
    levels = np.maximum(f.grid.levels, g.grid.levels)
    vol = float(np.prod(2.0 ** -levels.astype(float)))
    return float(np.sum(a * b) * vol)
