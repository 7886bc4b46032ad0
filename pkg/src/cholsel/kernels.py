"""Matern kernels, covariance assembly, and dense conditioning utilities.

Covariance values are consumed throughout the package via the small
:class:`CovarianceSource` interface, so that an explicit matrix can stand in
for a kernel wherever selection or entry computation is performed (the factor
recovery experiment relies on this).

The nugget is part of the kernel: it is added on the diagonal whenever the
row and column refer to the *same stored point index*, never for distinct
points that merely share coordinates.  This keeps cross-covariance blocks
unambiguous.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist

from .exceptions import NotPositiveDefiniteError, SingularBlockError

SUPPORTED_SMOOTHNESS = (0.5, 1.5, 2.5)

_SQRT3 = np.sqrt(3.0)
_SQRT5 = np.sqrt(5.0)


@dataclass(frozen=True)
class KernelSpec:
    """Matern covariance with half-integer smoothness.

    Parameters
    ----------
    nu : float
        Smoothness, one of 1/2, 3/2, 5/2.  These admit closed forms and
        avoid Bessel-function evaluations.
    length_scale : float
        Correlation length, in the same units as the point coordinates.
    variance : float
        Marginal variance (sill).
    nugget : float
        Nonnegative value added to the diagonal for matching point indices.
    """

    nu: float = 1.5
    length_scale: float = 1.0
    variance: float = 1.0
    nugget: float = 0.0

    def __post_init__(self):
        if self.nu not in SUPPORTED_SMOOTHNESS:
            raise ValueError(
                f"smoothness must be one of {SUPPORTED_SMOOTHNESS}, got {self.nu}"
            )
        if not self.length_scale > 0:
            raise ValueError("length_scale must be positive")
        if not self.variance > 0:
            raise ValueError("variance must be positive")
        if self.nugget < 0:
            raise ValueError("nugget must be nonnegative")


def matern_correlation(nu, r):
    """Matern correlation at scaled distance ``r`` for half-integer ``nu``."""
    r = np.asarray(r, dtype=float)
    if nu == 0.5:
        return np.exp(-r)
    if nu == 1.5:
        t = _SQRT3 * r
        return (1.0 + t) * np.exp(-t)
    if nu == 2.5:
        t = _SQRT5 * r
        return (1.0 + t + t * t / 3.0) * np.exp(-t)
    raise ValueError(f"unsupported smoothness {nu}")


def kernel_eval(spec, x, y):
    """Evaluate the kernel between two points.

    The nugget is included when the two points have exactly equal
    coordinates (for index-aware assembly use :func:`assemble_covariance`).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape != y.shape:
        raise ValueError(f"point dimensions differ: {x.shape} vs {y.shape}")
    r = np.linalg.norm(x - y) / spec.length_scale
    value = spec.variance * float(matern_correlation(spec.nu, r))
    if spec.nugget and np.array_equal(x, y):
        value += spec.nugget
    return value


def assemble_covariance(spec, points, rows=None, cols=None):
    """Dense covariance block over two index slices of a point set.

    ``rows`` and ``cols`` index into ``points``; ``None`` means all points.
    The nugget lands at entries whose row and column index coincide.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ValueError("points must be a 2-d array of coordinates")
    n = points.shape[0]
    rows = np.arange(n) if rows is None else np.asarray(rows, dtype=np.intp)
    cols = np.arange(n) if cols is None else np.asarray(cols, dtype=np.intp)
    dist = cdist(points[rows], points[cols]) / spec.length_scale
    theta = spec.variance * matern_correlation(spec.nu, dist)
    if spec.nugget:
        theta[rows[:, None] == cols[None, :]] += spec.nugget
    return theta


def conditional_oracle(theta, rows, cols, conditioning=()):
    """Conditional covariance block by recursively applied Schur complements.

    Computes ``Cov[y_rows, y_cols | y_V1, ..., y_Vn]`` for the centered
    Gaussian with covariance ``theta``, peeling the conditioning sets off one
    at a time.  This is the brute-force reference used to validate every
    selection objective; it is deliberately simple and O(n^3) per peel.
    """
    theta = np.asarray(theta, dtype=float)
    rows = np.asarray(rows, dtype=np.intp)
    cols = np.asarray(cols, dtype=np.intp)
    conditioning = [np.asarray(v, dtype=np.intp) for v in conditioning if len(v)]
    if not conditioning:
        return theta[np.ix_(rows, cols)]
    *rest, last = conditioning
    a = conditional_oracle(theta, rows, cols, rest)
    b = conditional_oracle(theta, rows, last, rest)
    c = conditional_oracle(theta, last, last, rest)
    d = conditional_oracle(theta, last, cols, rest)
    try:
        factor = cho_factor(c, lower=True)
    except np.linalg.LinAlgError as err:
        raise SingularBlockError("singular conditioning block") from err
    return a - b @ cho_solve(factor, d)


class CovarianceSource:
    """Access to covariance entries by point index.

    Concrete sources are either kernel-backed (points plus a
    :class:`KernelSpec`) or an explicit symmetric matrix.  Selection and
    factorization only ever call :meth:`block` and :meth:`diag`.
    """

    def __len__(self):
        raise NotImplementedError

    def diag(self, idx):
        """Marginal variances of the given indices."""
        raise NotImplementedError

    def block(self, rows, cols):
        """Covariance block between two index sets."""
        raise NotImplementedError


class KernelSource(CovarianceSource):
    """Covariance entries evaluated on demand from a kernel and points."""

    def __init__(self, spec, points):
        self.spec = spec
        self.points = np.asarray(points, dtype=float)
        if self.points.ndim != 2:
            raise ValueError("points must be a 2-d array of coordinates")

    def __len__(self):
        return self.points.shape[0]

    def diag(self, idx):
        idx = np.asarray(idx, dtype=np.intp)
        return np.full(len(idx), self.spec.variance + self.spec.nugget)

    def block(self, rows, cols):
        return assemble_covariance(self.spec, self.points, rows, cols)


class MatrixSource(CovarianceSource):
    """Covariance entries read from an explicit symmetric matrix."""

    def __init__(self, theta):
        self.theta = np.asarray(theta, dtype=float)
        if self.theta.ndim != 2 or self.theta.shape[0] != self.theta.shape[1]:
            raise ValueError("theta must be a square matrix")

    def __len__(self):
        return self.theta.shape[0]

    def diag(self, idx):
        idx = np.asarray(idx, dtype=np.intp)
        return self.theta[idx, idx].copy()

    def block(self, rows, cols):
        rows = np.asarray(rows, dtype=np.intp)
        cols = np.asarray(cols, dtype=np.intp)
        return self.theta[np.ix_(rows, cols)].copy()


def spd_cholesky(theta, what="matrix"):
    """Lower Cholesky factor, raising the package error on failure."""
    try:
        return np.linalg.cholesky(theta)
    except np.linalg.LinAlgError as err:
        raise NotPositiveDefiniteError(f"{what} is not positive definite") from err
