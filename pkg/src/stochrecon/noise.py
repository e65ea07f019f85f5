"""Gaussian noise on dyadic grids and moving-average Hoelder fields.

A :class:`NoiseField` stores one Gaussian weight per grid cell and path, so
that ``xi(psi) = sum_c psi(c) eta_c``.  Conditioning on a filtration cut
zeroes the cells whose center lies after the cut; for functionals that are
linear in the noise this is the exact conditional expectation.
"""
import json
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .errors import ArgumentError, ConstructionError, DomainError
from .grid import Grid, GridFunction, TestFunction, as_grid_function

RNG_ALGORITHM = "numpy.PCG64/SeedSequence"
PSD_FLOOR = -1e-10


def make_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class FiltrationCut:
    """Past of ``time`` along grid axis ``direction`` (0-based)."""

    direction: int
    time: float


class CovarianceMeasure:
    """White or kernel covariance measure on the spatial axes.

    Parameters
    ----------
    kind : {"white", "kernel"}
    kernel : callable, optional
        ``kernel(x, y)`` for point arrays of shape ``(..., d)``.
    scaling_delta : float, optional
        Homogeneity ``delta`` of ``K(lam dx, lam dy) = lam**delta K(dx, dy)``.
    """

    def __init__(self, kind="white", kernel=None, scaling_delta=None, d=None):
        if kind not in ("white", "kernel"):
            raise ArgumentError(f"unknown covariance kind {kind!r}")
        if kind == "kernel" and kernel is None:
            raise ArgumentError("kernel kind needs a kernel function")
        self.kind = kind
        self.kernel = kernel
        if kind == "white" and scaling_delta is None:
            scaling_delta = d
        self.scaling_delta = scaling_delta

    @classmethod
    def white(cls, d=1):
        return cls("white", d=d)

    @classmethod
    def constant(cls, value=1.0):
        """Rank-one kernel ``k(x, y) = value``."""
        return cls("kernel", lambda x, y: np.full(np.broadcast_shapes(x.shape[:-1], y.shape[:-1]),
                                                  float(value)))

    def _points(self, grid):
        mesh = np.meshgrid(*[grid.centers(i) for i in range(grid.d)], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def kernel_matrix(self, grid):
        pts = self._points(grid)
        k = np.asarray(self.kernel(pts[:, None, :], pts[None, :, :]), dtype=float)
        if not np.allclose(k, k.T, atol=1e-12):
            raise ConstructionError("kernel is not symmetric on the grid")
        return k

    def factor(self, grid):
        """Matrix ``F`` with ``F F^T`` equal to the cell covariance ``K(c_j x c_l)``."""
        vol = grid.cell_volume
        if self.kind == "white":
            return None
        k = self.kernel_matrix(grid)
        vals, vecs = np.linalg.eigh(k)
        scale = max(1.0, float(np.abs(vals).max()))
        if vals.min() < PSD_FLOOR * scale:
            raise ConstructionError(f"kernel is indefinite (eigenvalue {vals.min():.3e})")
        return vecs * np.sqrt(np.clip(vals, 0.0, None)) * vol

    def quadratic_form(self, g, grid):
        """``||g||_K^2 = int int g(x) g(y) K(dx, dy)`` by midpoint quadrature."""
        g = np.asarray(g, dtype=float).reshape(-1)
        vol = grid.cell_volume
        if self.kind == "white":
            return float(g @ g) * vol
        return float(g @ self.kernel_matrix(grid) @ g) * vol * vol

    def describe(self):
        return {"kind": self.kind, "delta": self.scaling_delta}


class NoiseField:
    """Gaussian cell weights for a block of Monte Carlo paths.

    Attributes
    ----------
    grid : Grid
    cells : ndarray
        Shape ``(M, *grid.shape)``.
    kind : CovarianceMeasure
    seed : object
        Seed material used to draw the cells.
    time_axis : int or None
        Axis carrying Brownian time for martingale measures.
    """

    def __init__(self, grid, cells, kind=None, seed=None, time_axis=None):
        cells = np.asarray(cells, dtype=float)
        if cells.shape[1:] != grid.shape:
            raise ArgumentError("cells do not match the grid")
        self.grid = grid
        self.cells = cells
        self.kind = kind if kind is not None else CovarianceMeasure.white(grid.d)
        self.seed = seed
        self.time_axis = time_axis

    @property
    def n_paths(self):
        return self.cells.shape[0]

    @property
    def density(self):
        return self.cells

    def evaluate(self, psi):
        """``xi(psi)`` for every path."""
        if isinstance(psi, np.ndarray):
            samples = psi
        else:
            samples = as_grid_function(psi, self.grid).samples
        if samples.shape != self.grid.shape:
            raise DomainError("test function does not match the noise grid")
        return np.tensordot(self.cells, samples, axes=self.grid.d)

    def condition_past(self, cut):
        """Field with every cell centered after ``cut.time`` set to zero."""
        keep = _past_mask(self.grid, cut)
        if keep is None:
            return self
        return NoiseField(self.grid, self.cells * keep, self.kind, self.seed, self.time_axis)

    def save(self, prefix):
        """Write ``prefix.bin`` (float64, C order) and ``prefix.json``."""
        self.cells.astype("<f8").tofile(f"{prefix}.bin")
        header = {"grid": self.grid.spec(), "paths": self.n_paths, "kind": self.kind.describe(),
                  "seed": None if self.seed is None else str(self.seed),
                  "time_axis": self.time_axis, "rng": RNG_ALGORITHM, "dtype": "<f8"}
        with open(f"{prefix}.json", "w") as fh:
            json.dump(header, fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, prefix):
        with open(f"{prefix}.json") as fh:
            header = json.load(fh)
        g = header["grid"]
        grid = Grid(g["lo"], g["hi"], g["levels"])
        cells = np.fromfile(f"{prefix}.bin", dtype=header["dtype"])
        cells = cells.reshape((header["paths"],) + grid.shape)
        kind = CovarianceMeasure(header["kind"]["kind"], kernel=None if header["kind"]["kind"] == "white"
                                 else (lambda x, y: np.nan), scaling_delta=header["kind"]["delta"])
        return cls(grid, cells, kind, header["seed"], header["time_axis"])


def _past_mask(grid, cut):
    if not 0 <= cut.direction < grid.d:
        raise ArgumentError(f"cut direction {cut.direction} invalid for a {grid.d}-d grid")
    centers = grid.centers(cut.direction)
    keep = (centers <= cut.time).astype(float)
    if keep.all():
        return None
    shape = [1] * (grid.d + 1)
    shape[cut.direction + 1] = centers.size
    return keep.reshape(shape)


def condition_past(noise, cut):
    """Functional form of :meth:`NoiseField.condition_past`."""
    return noise.condition_past(cut)


def sample_white_noise(grid, seed, n_paths=1):
    """Independent ``N(0, vol)`` cell weights (deterministic given ``seed``)."""
    if grid.volume <= 0:
        raise ArgumentError("grid volume must be positive")
    rng = make_rng(seed)
    cells = rng.standard_normal((n_paths,) + grid.shape) * np.sqrt(grid.cell_volume)
    return NoiseField(grid, cells, CovarianceMeasure.white(grid.d), seed)


def sample_noise(K, grid, seed, n_paths=1):
    """Spatial Gaussian noise with covariance measure ``K`` (no time axis)."""
    if K.kind == "white":
        return sample_white_noise(grid, seed, n_paths)
    F = K.factor(grid)
    rng = make_rng(seed)
    z = rng.standard_normal((n_paths, F.shape[1]))
    cells = (z @ F.T).reshape((n_paths,) + grid.shape)
    return NoiseField(grid, cells, K, seed)


def sample_martingale_measure(K, grid, seed, n_paths=1, time_axis=0):
    """Gaussian martingale measure ``W_t(A)`` on a time-space grid.

    Cell weights are ``sqrt(dt) F z`` with ``F F^T`` the spatial cell
    covariance, independent across time slices, so that
    ``E[W_s(A) W_t(B)] = min(s, t) K(A x B)`` on grid-aligned sets.
    """
    if time_axis != 0:
        raise ArgumentError("the time axis must be axis 0")
    if grid.d < 2:
        raise ArgumentError("a martingale measure needs time plus at least one space axis")
    rng = make_rng(seed)
    dt = grid.h[0]
    space = Grid(grid.lo[1:], grid.hi[1:], grid.levels[1:])
    if K.kind == "white":
        cells = rng.standard_normal((n_paths,) + grid.shape) * np.sqrt(grid.cell_volume)
    else:
        F = K.factor(space)
        z = rng.standard_normal((n_paths, grid.shape[0], F.shape[1]))
        cells = (np.sqrt(dt) * (z @ F.T)).reshape((n_paths,) + grid.shape)
    return NoiseField(grid, cells, K, seed, time_axis=0)


def martingale_value(noise, t, A_lo, A_hi):
    """``W_t(A)`` for a grid-aligned spatial box ``A`` (time starts at the grid edge)."""
    g = noise.grid
    it = g.node_index(0, t)
    sl = [slice(None), slice(0, it)]
    for i in range(1, g.d):
        a, b = g.node_index(i, A_lo[i - 1]), g.node_index(i, A_hi[i - 1])
        sl.append(slice(a, b))
    return noise.cells[tuple(sl)].reshape(noise.n_paths, -1).sum(axis=1)


class RandomField:
    """Node samples of a Gaussian moving-average field for a block of paths.

    ``values`` has shape ``(M, *grid.node_shape)``.  The auxiliary noise and
    kernel are kept so that conditioning on a cut can be recomputed exactly.
    """

    smoothness = 0

    def __init__(self, grid, values, holder_exponent, adapted_directions, seed=None,
                 zeta=None, kernel=None, ext_grid=None, kernel_first=None):
        self.grid = grid
        self.values = np.asarray(values, dtype=float)
        self.holder_exponent = holder_exponent
        self.adapted_directions = tuple(adapted_directions)
        self.seed = seed
        self._zeta = zeta
        self._kernel = kernel
        self._ext = ext_grid
        self._first = kernel_first

    @classmethod
    def deterministic(cls, grid, func, adapted_directions=None):
        """Path-independent field from a callable of node coordinates.

        A deterministic field is adapted to every filtration, so all axes
        are adapted unless stated otherwise.
        """
        if adapted_directions is None:
            adapted_directions = range(grid.d)
        vals = np.broadcast_to(func(*grid.node_coords()), grid.node_shape)[None].copy()
        field = cls(grid, vals, 1.0, adapted_directions)
        field.smoothness = 8
        return field

    @property
    def n_paths(self):
        return self.values.shape[0]

    def node_values(self, points):
        """Values at node points, shape ``(M, K)`` for points of shape ``(K, d)``."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        idx = tuple(self.grid.node_index(i, points[:, i]) for i in range(self.grid.d))
        return self.values[(slice(None),) + idx]

    def mesh_values(self, mesh):
        """Values on a dyadic mesh, shape ``(M, *mesh.shape)``."""
        idx = [self.grid.node_index(i, mesh.axis_points(i)) for i in range(self.grid.d)]
        return self.values[np.ix_(np.arange(self.n_paths), *idx)]

    def condition_past(self, cut):
        """``E[X | F_t]`` along ``cut.direction`` (zero future auxiliary noise)."""
        if self._zeta is None:
            return self
        keep = _past_mask(self._ext, cut)
        if keep is None:
            return self
        values = _moving_average(self._zeta * keep, self._kernel, self._first, self._ext, self.grid)
        return RandomField(self.grid, values, self.holder_exponent, self.adapted_directions,
                           self.seed, self._zeta * keep, self._kernel, self._ext, self._first)

    def modulus(self, lags, axis=0, p=2, n_base=64):
        """Empirical ``||X(x + lag e) - X(x)||_{L_p}`` averaged over base nodes."""
        g = self.grid
        out = []
        for lag in lags:
            k = int(round(lag / g.h[axis]))
            if k < 1 or k > g.shape[axis]:
                raise ArgumentError(f"lag {lag} not representable on the grid")
            a = np.take(self.values, np.arange(0, g.shape[axis] + 1 - k), axis=axis + 1)
            b = np.take(self.values, np.arange(k, g.shape[axis] + 1), axis=axis + 1)
            diff = (b - a).reshape(self.n_paths, -1)
            step = max(1, diff.shape[1] // n_base)
            diff = diff[:, ::step]
            out.append(float(np.mean(np.mean(np.abs(diff) ** p, axis=0)) ** (1.0 / p)))
        return np.array(out)


def _kernel_values(alpha, d, offsets_axes, h, horizon):
    """Tapered power kernel ``|v|**beta (1 - |v|/T)**2`` on half-integer offsets."""
    beta = alpha - d / 2.0 if alpha < 1 else 1.5 - d / 2.0
    mesh = np.meshgrid(*[(m + 0.5) * h[i] for i, m in enumerate(offsets_axes)], indexing="ij")
    r = np.sqrt(sum(v * v for v in mesh))
    k = r ** beta * np.clip(1.0 - r / horizon, 0.0, None) ** 2
    return k


def _moving_average(zeta, kernel, first, ext, grid):
    d = grid.d
    conv = fftconvolve(zeta, kernel[None], mode="full", axes=tuple(range(1, d + 1)))
    sl = [slice(None)]
    for i in range(d):
        pad = int(round((grid.lo[i] - ext.lo[i]) / grid.h[i]))
        # node j of ext sees cells j - 1 - m, i.e. full index j - 1 - first
        start = pad - 1 - first[i]
        sl.append(slice(start, start + grid.shape[i] + 1))
    return conv[tuple(sl)]


def sample_holder_field(alpha, grid, adapted_directions, seed, n_paths=1, kernel="power",
                        horizon=1.0):
    """Gaussian field of L2-Hoelder exponent ``alpha`` adapted on given axes.

    ``X(x) = sum_c K(x - c) zeta_c`` over an auxiliary white noise ``zeta``
    restricted to the past cone: cells before ``x`` along adapted axes, both
    sides along the others.  ``kernel="constant"`` returns a path-wise
    constant field (zero modulus).
    """
    if not 0 < alpha <= 1:
        raise ArgumentError("alpha must lie in (0, 1]")
    adapted = tuple(sorted(set(int(a) for a in adapted_directions)))
    for a in adapted:
        if not 0 <= a < grid.d:
            raise ArgumentError(f"adapted direction {a} invalid")
    rng = make_rng(seed)
    if kernel == "constant":
        z = rng.standard_normal(n_paths)
        vals = np.broadcast_to(z.reshape((n_paths,) + (1,) * grid.d),
                               (n_paths,) + grid.node_shape).copy()
        return RandomField(grid, vals, alpha, adapted, seed)
    if kernel != "power":
        raise ArgumentError(f"unknown kernel {kernel!r}")
    d = grid.d
    H = [int(round(horizon / grid.h[i])) for i in range(d)]
    pad_lo = np.array([H[i] * grid.h[i] for i in range(d)])
    pad_hi = np.array([0.0 if i in adapted else H[i] * grid.h[i] for i in range(d)])
    ext = grid.extended(pad_lo, pad_hi)
    offsets = [np.arange(0, H[i]) if i in adapted else np.arange(-H[i], H[i]) for i in range(d)]
    first = [int(o[0]) for o in offsets]
    kern = _kernel_values(alpha, d, offsets, grid.h, horizon)
    kern = kern / np.sqrt(np.sum(kern ** 2) * grid.cell_volume)
    zeta = rng.standard_normal((n_paths,) + ext.shape) * np.sqrt(grid.cell_volume)
    values = _moving_average(zeta, kern, first, ext, grid)
    return RandomField(grid, values, alpha, adapted, seed, zeta, kern, ext, first)
