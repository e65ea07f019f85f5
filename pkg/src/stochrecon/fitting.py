"""Log-log rate fits used as measurable surrogates for asymptotic bounds."""
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ArgumentError

DEGENERATE_FLOOR = 1e-12


@dataclass
class RateFit:
    """Least-squares line ``log y = intercept + slope * x``.

    ``x`` is already transformed (for example ``log2`` of a scale or a level
    index), ``y`` holds the raw positive magnitudes.
    """

    slope: float
    intercept: float
    stderr: float
    x: list = field(default_factory=list)
    y: list = field(default_factory=list)
    r_squared: float = float("nan")
    base: float = 2.0
    degenerate: bool = False

    def predict(self, x):
        return self.base ** (self.intercept + self.slope * np.asarray(x, dtype=float))

    def to_dict(self):
        out = asdict(self)
        out["x"] = [float(v) for v in self.x]
        out["y"] = [float(v) for v in self.y]
        return out


def fit_loglog(scale, values, base=2.0, transform_x=None, min_points=4):
    """Fit ``log_base(values)`` against ``log_base(scale)``.

    Parameters
    ----------
    scale, values : array_like
        Design points and positive magnitudes.
    transform_x : callable, optional
        Replaces the default ``log_base`` transform of ``scale``.
    min_points : int
        At least this many points are required.

    Returns
    -------
    RateFit
        Flagged ``degenerate`` when every magnitude is below ``1e-12``.
    """
    scale = np.asarray(scale, dtype=float)
    values = np.abs(np.asarray(values, dtype=float))
    if scale.size != values.size:
        raise ArgumentError("scale and values differ in length")
    if scale.size < min_points:
        raise ArgumentError(f"need at least {min_points} design points, got {scale.size}")
    x = transform_x(scale) if transform_x is not None else np.log(scale) / np.log(base)
    if np.all(values < DEGENERATE_FLOOR):
        return RateFit(float("nan"), float("nan"), float("nan"), list(x), list(values),
                       float("nan"), base, True)
    y = np.log(np.maximum(values, np.finfo(float).tiny)) / np.log(base)
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = max(x.size - 2, 1)
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(A.T @ A)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(float(coef[1]), float(coef[0]), float(np.sqrt(cov[1, 1])), list(x),
                   list(values), r2, base, False)


def median_slope(x, y):
    """Theil-Sen slope: median of pairwise slopes."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    i, j = np.triu_indices(x.size, 1)
    keep = x[j] != x[i]
    if not np.any(keep):
        raise ArgumentError("median slope needs two distinct design points")
    return float(np.median((y[j] - y[i])[keep] / (x[j] - x[i])[keep]))
