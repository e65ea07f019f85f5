"""Compactly supported orthonormal wavelets on anisotropic dyadic meshes.

The scaling function satisfies ``phi(x) = sqrt(2) sum_k a_k phi(2x - k)`` and
is shifted so that its support ``[C, R]`` is strictly positive.  Values are
tabulated on ``2**-J Z`` by the cascade algorithm; since refinement from
exact integer values produces exact dyadic values, every functional below
is a finite sum over a fine grid with weights read off the table.
"""
import functools
import itertools
from dataclasses import dataclass
from math import comb

import numpy as np

from . import kernels
from .errors import (ArgumentError, ConstructionError, DomainError, NumericError,
                     ResolutionError)
from .grid import Grid, GridFunction, ScalingVector, TestFunction, as_grid_function

SQRT2 = np.sqrt(2.0)


def daubechies_filter(n_moments):
    """Minimum-phase Daubechies filter with ``n_moments`` vanishing moments.

    Obtained by spectral factorisation of the Daubechies polynomial
    ``P(y) = sum_{k<N} binom(N-1+k, k) y**k``.  Taps are normalised so that
    ``sum(a) == sqrt(2)``.
    """
    N = int(n_moments)
    if not 1 <= N <= 10:
        raise ConstructionError(f"vanishing moments must be in 1..10, got {n_moments}")
    if N == 1:
        return np.array([1.0, 1.0]) / SQRT2
    coeffs = [comb(N - 1 + k, k) for k in range(N)]
    zeros = []
    for y in np.roots(coeffs[::-1]):
        # y = (1 - (z + 1/z)/2) / 2 maps back to the reciprocal pair (z, 1/z)
        pair = np.roots([1.0, -(2.0 - 4.0 * y), 1.0])
        zeros.append(pair[np.argmin(np.abs(pair))])
    poly = np.array([1.0 + 0j])
    for _ in range(N):
        poly = np.convolve(poly, [1.0, 1.0])
    for z in zeros:
        poly = np.convolve(poly, [1.0, -z])
    taps = np.real(poly)
    return taps * SQRT2 / taps.sum()


def _integer_values(a, max_iter=500, tol=1e-15):
    """Values of phi at the integers by power iteration from the box function."""
    L = a.size
    R = L - 1
    M = np.zeros((R + 1, R + 1))
    for j in range(R + 1):
        for k in range(L):
            i = 2 * j - k
            if 0 <= i <= R:
                M[j, i] += SQRT2 * a[k]
    v = np.zeros(R + 1)
    v[0] = 1.0
    history = []
    for _ in range(max_iter):
        w = M @ v
        s = w.sum()
        if not np.isfinite(s) or s == 0.0:
            raise NumericError("cascade iteration degenerated")
        w /= s
        res = float(np.abs(w - v).max())
        history.append(res)
        v = w
        if res < tol:
            return v
        if len(history) > 40 and min(history[-20:]) >= min(history[:-20]):
            raise NumericError("cascade residual is not decreasing")
    if history[-1] > 1e-12:
        raise NumericError(f"cascade did not converge (residual {history[-1]:.2e})")
    return v


def _refine(values, a, levels):
    """Refine integer samples ``levels`` times with the two-scale relation."""
    L = a.size
    vals = values
    for lev in range(1, levels + 1):
        n = (vals.size - 1) * 2 + 1
        new = np.empty(n)
        new[::2] = vals
        odd = np.arange(1, n, 2)
        acc = np.zeros(odd.size)
        step = 2 ** (lev - 1)
        for k in range(L):
            idx = odd - k * step
            ok = (idx >= 0) & (idx < vals.size)
            acc[ok] += SQRT2 * a[k] * vals[idx[ok]]
        new[1::2] = acc
        vals = new
    return vals


def _mother(phi, b, level):
    """Detail function on the same points ``C + i 2**-level`` as ``phi``."""
    # 2x - k for x = C + i h and k = C + kk sits at table index 2i - kk/h
    out = np.zeros(phi.size)
    i = np.arange(phi.size)
    for kk in range(b.size):
        idx = 2 * i - kk * 2 ** level
        ok = (idx >= 0) & (idx < phi.size)
        out[ok] += SQRT2 * b[kk] * phi[idx[ok]]
    return out


class WaveletBasis:
    """Orthonormal scaling function ``phi`` and detail function on ``[C, R]``.

    Parameters
    ----------
    filter_taps : ndarray
        Unshifted taps ``a_0..a_{2N-1}``.
    n_moments : int
        Vanishing moments ``N`` of the detail function.
    cascade_resolution : int
        Level ``J`` of the sample table for ``phi``.
    shift : int
        Integer shift ``C >= 1`` of the support.
    family : str
    """

    def __init__(self, filter_taps, n_moments, cascade_resolution=14, shift=1,
                 family="daubechies"):
        if cascade_resolution < 6:
            raise ConstructionError("cascade resolution must be at least 6")
        if shift < 1:
            raise ConstructionError("support shift must be >= 1 for positive support")
        self.family = family
        self.n_moments = int(n_moments)
        self.cascade_resolution = int(cascade_resolution)
        self.shift = int(shift)
        self.taps = np.asarray(filter_taps, dtype=float)
        L = self.taps.size
        # b_k = (-1)^k a_{2C + 2N - 1 - k}, both indexed over k = C..R
        k = np.arange(self.shift, self.shift + L)
        self.detail_taps = (-1.0) ** k * self.taps[::-1]
        J = self.cascade_resolution
        base = _integer_values(self.taps)
        self._phi = _refine(base, self.taps, J)
        self._psi = _mother(self._phi, self.detail_taps, J)

    @property
    def C(self):
        return self.shift

    @property
    def R(self):
        return self.shift + self.taps.size - 1

    @property
    def support(self):
        return (self.C, self.R)

    @property
    def filter(self):
        """Taps indexed by ``k = C..R`` (dict-free array, index ``k - C``)."""
        return self.taps

    def filter_residuals(self):
        """Residuals of ``sum a = sqrt 2`` and ``sum a_k a_{k+2m} = delta``."""
        a = self.taps
        s = abs(a.sum() - SQRT2)
        orth = max(abs(np.dot(a[:a.size - 2 * m], a[2 * m:]) - (m == 0))
                   for m in range(a.size // 2))
        return s, orth

    def samples(self, level, kind="phi"):
        """Samples on ``C + 2**-level * {0, 1, ...}`` covering ``[C, R]``."""
        top = self.cascade_resolution
        if level > top or level < 0:
            raise ResolutionError(f"level {level} exceeds cascade resolution {top}")
        table = self._phi if kind == "phi" else self._psi
        return table[::2 ** (top - level)]

    def refinement_residual(self, level):
        """Max of ``|phi(x) - sqrt2 sum_k a_k phi(2x - k)|`` over ``2**-level`` points."""
        v = self.samples(level)
        x = np.arange(v.size)  # phi at C + x 2**-level
        acc = np.zeros(v.size)
        step = 2 ** level
        for kk in range(self.taps.size):
            # 2(C + x h) - (C + kk) - C = 2 x h - kk  in units of h: 2x - kk*step
            idx = 2 * x - kk * step
            ok = (idx >= 0) & (idx < v.size)
            acc[ok] += SQRT2 * self.taps[kk] * v[idx[ok]]
        return float(np.abs(v - acc).max())

    @functools.lru_cache(maxsize=256)
    def taps_on_grid(self, n, s, ratio, kind="phi", moment=0):
        """Midpoint weights of ``2**(n s/2) g(2**(n s)(c - y))`` on a fine grid.

        ``ratio`` is the number of fine cells per mesh step.  Entry ``q``
        belongs to the cell center ``y + (C*ratio + q + 1/2) h``.  With
        ``moment > 0`` the weights are multiplied by ``(c - y)**moment``.
        """
        if ratio < 1 or ratio & (ratio - 1):
            raise ResolutionError(f"fine cells per mesh step must be a power of 2, got {ratio}")
        level = int(np.log2(ratio)) + 1
        table = self.samples(level, kind)  # points C + i / (2 ratio)
        q = np.arange((self.R - self.C) * ratio)
        w = table[2 * q + 1] * 2.0 ** (n * s / 2.0)
        if moment:
            w = w * ((self.C * ratio + q + 0.5) / ratio * 2.0 ** (-n * s)) ** moment
        w.setflags(write=False)
        return w

    def evaluate(self, x, kind="phi"):
        """Evaluate by linear interpolation in the cascade table."""
        top = self.cascade_resolution
        table = self._phi if kind == "phi" else self._psi
        pos = (np.asarray(x, dtype=float) - self.C) * 2.0 ** top
        return np.interp(pos, np.arange(table.size), table, left=0.0, right=0.0)

    def to_table(self, path):
        """Export filter, support, moments and cascade samples as text."""
        with open(path, "w") as fh:
            fh.write(f"# family {self.family}\n# moments {self.n_moments}\n")
            fh.write(f"# support {self.C} {self.R}\n# level {self.cascade_resolution}\n")
            fh.write("# taps\n")
            np.savetxt(fh, self.taps, fmt="%.17g")
            fh.write("# phi\n")
            np.savetxt(fh, self._phi, fmt="%.17g")

    @classmethod
    def from_table(cls, path):
        meta, blocks, current = {}, {"taps": [], "phi": []}, None
        with open(path) as fh:
            for line in fh:
                if line.startswith("#"):
                    parts = line[1:].split()
                    if parts[0] in blocks:
                        current = parts[0]
                    else:
                        meta[parts[0]] = parts[1:]
                elif line.strip():
                    blocks[current].append(float(line))
        basis = cls.__new__(cls)
        basis.family = meta["family"][0]
        basis.n_moments = int(meta["moments"][0])
        basis.cascade_resolution = int(meta["level"][0])
        basis.shift = int(meta["support"][0])
        basis.taps = np.array(blocks["taps"])
        k = np.arange(basis.shift, basis.shift + basis.taps.size)
        basis.detail_taps = (-1.0) ** k * basis.taps[::-1]
        basis._phi = np.array(blocks["phi"])
        basis._psi = _mother(basis._phi, basis.detail_taps, basis.cascade_resolution)
        return basis

    def __repr__(self):
        return (f"WaveletBasis({self.family}, N={self.n_moments}, support=[{self.C}, {self.R}], "
                f"J={self.cascade_resolution})")


def build_basis(family="daubechies", vanishing_moments=2, cascade_resolution=14, shift=1):
    """Build a Haar or Daubechies basis with positive support."""
    family = family.lower()
    if family == "haar":
        vanishing_moments = 1
    elif family not in ("daubechies", "db"):
        raise ConstructionError(f"unknown wavelet family {family!r}")
    if vanishing_moments < 1:
        raise ConstructionError("vanishing moments must be >= 1")
    if cascade_resolution < 6:
        raise ConstructionError("cascade resolution must be at least 6")
    taps = daubechies_filter(vanishing_moments)
    return WaveletBasis(taps, vanishing_moments, cascade_resolution, shift,
                        "haar" if family == "haar" else "daubechies")


def cascade_eval(basis, level):
    """Scaling-function samples on ``C + 2**-level Z``."""
    if level > basis.cascade_resolution:
        raise ResolutionError("level exceeds the cascade resolution")
    return basis.samples(level)


def detail_masks(d):
    """Nonzero binary masks indexing the tensor-product detail family."""
    return [m for m in itertools.product((0, 1), repeat=d) if any(m)]


@dataclass(frozen=True)
class DyadicMesh:
    """Points ``offset + 2**(-n s_i) m_i`` of the level-``n`` mesh in a box."""

    level: int
    scaling: ScalingVector
    box: tuple
    offset: tuple
    first: tuple
    shape: tuple
    active_axes: tuple = None

    @property
    def spacing(self):
        return 2.0 ** (-self.level * self.scaling.s)

    def axis_points(self, axis):
        sp = self.spacing[axis]
        return self.offset[axis] + (self.first[axis] + np.arange(self.shape[axis])) * sp

    def points(self):
        grids = np.meshgrid(*[self.axis_points(i) for i in range(len(self.shape))],
                            indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    @property
    def size(self):
        return int(np.prod(self.shape))


def mesh_points(level, scaling, box, offset=None, basis=None, active_axes=None):
    """Level-``level`` mesh points in ``box``.

    With a basis, returns every point whose basis-function support
    ``y + 2**(-n s)[C, R]`` meets the open box; otherwise every point of
    the closed box.  ``offset`` shifts the mesh on ``active_axes``.
    """
    if level < 0:
        raise ArgumentError("mesh level must be >= 0")
    d = scaling.d
    lo = np.atleast_1d(np.asarray(box[0], dtype=float))
    hi = np.atleast_1d(np.asarray(box[1], dtype=float))
    off = np.zeros(d) if offset is None else np.atleast_1d(np.asarray(offset, dtype=float))
    if active_axes is not None:
        a, b = active_axes
        mask = np.zeros(d, dtype=bool)
        mask[a:b + 1] = True
        off = np.where(mask, off, 0.0)
    sp = 2.0 ** (-level * scaling.s)
    first, shape = [], []
    for i in range(d):
        if basis is None:
            m0 = int(np.ceil((lo[i] - off[i]) / sp[i] - 1e-9))
            m1 = int(np.floor((hi[i] - off[i]) / sp[i] + 1e-9))
        else:
            m0 = int(np.floor((lo[i] - off[i]) / sp[i] - basis.R + 1e-9)) + 1
            m1 = int(np.ceil((hi[i] - off[i]) / sp[i] - basis.C - 1e-9)) - 1
        first.append(m0)
        shape.append(max(0, m1 - m0 + 1))
    return DyadicMesh(level, scaling, (tuple(lo), tuple(hi)), tuple(off), tuple(first),
                      tuple(shape), active_axes)


def _axis_plan(basis, mesh, grid, axis):
    n, s = mesh.level, mesh.scaling.exponents[axis]
    L = grid.levels[axis]
    if L < n * s:
        raise ResolutionError(f"grid level {L} is coarser than mesh level {n}*{s}")
    ratio = 2 ** (L - n * s)
    y0 = mesh.axis_points(axis)[0] if mesh.shape[axis] else grid.lo[axis]
    pos = (y0 - grid.lo[axis]) / grid.h[axis]
    ipos = int(np.rint(pos))
    if abs(pos - ipos) > 1e-7:
        raise ResolutionError("mesh points are not grid nodes")
    return ratio, ipos + basis.C * ratio


def _kinds(mask, d):
    if mask is None:
        return ["phi"] * d
    return ["psi" if m else "phi" for m in mask]


def check_inside(basis, mesh, grid):
    """Raise if some basis-function support of ``mesh`` leaves ``grid``."""
    for i in range(grid.d):
        if mesh.shape[i] == 0:
            continue
        pts = mesh.axis_points(i)
        sp = mesh.spacing[i]
        if pts[0] + basis.C * sp < grid.lo[i] - 1e-9 or pts[-1] + basis.R * sp > grid.hi[i] + 1e-9:
            raise DomainError(f"wavelet supports at level {mesh.level} leave the grid on axis {i}")


def coefficients(basis, density, grid, mesh, mask=None, moments=None):
    """Values ``sum_c density(c) g_y(c)`` for every mesh point ``y``.

    ``g_y`` is ``phi_y^n`` (``mask`` None) or the detail function with the
    given mask.  ``density`` has shape ``(..., *grid.shape)``; leading axes
    are carried through.  ``moments`` multiplies axis ``i`` by
    ``(c_i - y_i)**moments[i]``.
    """
    density = np.asarray(density, dtype=float)
    d = grid.d
    lead = density.ndim - d
    if density.shape[lead:] != grid.shape:
        raise ArgumentError("density does not match the grid")
    kinds = _kinds(mask, d)
    out = density
    for i in range(d):
        ratio, start = _axis_plan(basis, mesh, grid, i)
        w = basis.taps_on_grid(mesh.level, mesh.scaling.exponents[i], ratio, kinds[i],
                               0 if moments is None else int(moments[i]))
        out = kernels.analyze_axis(out, w, start, ratio, mesh.shape[i], lead + i)
    return out


def synthesize(basis, coeffs, grid, mesh, mask=None):
    """Grid samples of ``sum_y coeffs[y] g_y`` (truncated to the grid)."""
    coeffs = np.asarray(coeffs, dtype=float)
    d = grid.d
    lead = coeffs.ndim - d
    kinds = _kinds(mask, d)
    out = coeffs
    for i in range(d):
        ratio, start = _axis_plan(basis, mesh, grid, i)
        w = basis.taps_on_grid(mesh.level, mesh.scaling.exponents[i], ratio, kinds[i])
        out = kernels.synthesize_axis(out, w, start, ratio, grid.shape[i], lead + i)
    return out


def wavelet_function(basis, n, y, scaling, grid, mask=None):
    """``phi_y^n`` (or a detail function) sampled on ``grid``."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    sp = 2.0 ** (-n * scaling.s)
    m = np.rint(y / sp)
    if np.any(np.abs(m * sp - y) > 1e-9):
        raise ArgumentError("y is not a level-n mesh point")
    mesh = DyadicMesh(n, scaling, (tuple(y), tuple(y)), tuple(np.zeros(grid.d)),
                      tuple(int(v) for v in m), tuple([1] * grid.d))
    c = np.ones((1,) * grid.d)
    return GridFunction(grid, synthesize(basis, c, grid, mesh, mask), order=0)


def _density_of(f, grid):
    if isinstance(f, (GridFunction, TestFunction)):
        return as_grid_function(f, grid).samples * grid.cell_volume
    dens = getattr(f, "density", None)
    if dens is None:
        raise ArgumentError("f must be a grid function or a distribution with a density")
    dens = np.asarray(dens)
    return dens.reshape(dens.shape[-grid.d:]) if dens.shape[0] == 1 else dens


def project(f, basis, n, scaling, grid, kind="P"):
    """Projection ``P_n f`` or ``P_hat_n f`` as a grid function.

    ``f`` is a grid function (acting through the L2 pairing) or a
    deterministic distribution exposing a ``density`` on ``grid``.
    """
    dens = _density_of(f, grid)
    nz = np.nonzero(dens)
    if nz[0].size == 0:
        return GridFunction.zeros(grid)
    lo = np.array([grid.lo[i] + nz[i].min() * grid.h[i] for i in range(grid.d)])
    hi = np.array([grid.lo[i] + (nz[i].max() + 1) * grid.h[i] for i in range(grid.d)])
    mesh = mesh_points(n, scaling, (lo, hi), basis=basis)
    check_inside(basis, mesh, grid)
    if kind == "P":
        masks = [None]
    elif kind in ("P_hat", "Phat"):
        masks = detail_masks(grid.d)
    else:
        raise ArgumentError(f"unknown projection kind {kind!r}")
    total = np.zeros(grid.shape)
    for mask in masks:
        c = coefficients(basis, dens, grid, mesh, mask)
        total += synthesize(basis, c, grid, mesh, mask)
    return GridFunction(grid, total, order=0)


def snapped_grid(lo, hi, levels):
    """Smallest grid at ``levels`` containing ``[lo, hi]``."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    h = 2.0 ** -np.asarray(np.broadcast_to(levels, lo.shape), dtype=float)
    glo = np.floor(lo / h + 1e-9) * h
    ghi = np.ceil(hi / h - 1e-9) * h
    ghi = np.where(ghi <= glo, glo + h, ghi)
    return Grid(glo, ghi, levels)


def max_coefficients(basis, psi, scaling, n, detail=False, extra_levels=2):
    """``max_y |<g_y^n, psi>|`` over the mesh, with ``g`` = phi or the worst detail."""
    psi_lo, psi_hi = psi.lo, psi.hi
    levels = np.array([n * s + extra_levels for s in scaling.exponents])
    grid = snapped_grid(psi_lo, psi_hi, levels)
    dens = psi.on(grid).samples * grid.cell_volume
    mesh = mesh_points(n, scaling, (grid.lo, grid.hi), basis=basis)
    masks = detail_masks(grid.d) if detail else [None]
    return max(float(np.abs(coefficients(basis, dens, grid, mesh, m)).max(initial=0.0))
               for m in masks)


def verify_lemma1(basis, psi, scaling, levels, lam=0.5, z=None, extra_levels=2):
    """Fit the decay in ``n`` of wavelet coefficients of ``psi_z^lam``.

    Returns ``(phi_fit, detail_fit)``; expected slopes in base 2 are
    ``-|S|/2`` and ``-|S|/2 - N min(s)`` respectively.
    """
    from .fitting import fit_loglog

    levels = list(levels)
    if not levels:
        raise ArgumentError("empty sample set")
    for n in levels:
        if 2.0 ** -n > lam + 1e-12:
            raise ArgumentError("need 2**-n <= lambda for every level")
    z = np.zeros(scaling.d) if z is None else np.atleast_1d(z)
    loc = psi.localize(z, lam, scaling)
    phi_vals = [max_coefficients(basis, loc, scaling, n, False, extra_levels) for n in levels]
    det_vals = [max_coefficients(basis, loc, scaling, n, True, extra_levels) for n in levels]
    ns = np.asarray(levels, dtype=float)
    return (fit_loglog(2.0 ** ns, phi_vals, base=2, transform_x=np.log2),
            fit_loglog(2.0 ** ns, det_vals, base=2, transform_x=np.log2))
