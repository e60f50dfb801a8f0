"""Dense linear algebra and ellipsoid geometry.

All density arithmetic elsewhere in the package is done in natural-log
space; this module provides the geometric primitives (moment estimates,
Cholesky factors, Mahalanobis distances, ellipsoid volumes) they rest on.
Everything here is a pure function over immutable inputs.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln

from .errors import InvalidInput, NotPositiveDefinite

SYMMETRY_RTOL = 1e-10
RIDGE_EPS = 1e-8


def as_draw_matrix(draws, min_rows=1):
    """Validate and return a T x d float matrix of posterior draws."""
    a = np.asarray(draws, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise InvalidInput(f"draws must be 2-dimensional, got ndim={a.ndim}")
    t, d = a.shape
    if t < min_rows or d < 1:
        raise InvalidInput(f"draw matrix of shape {a.shape} is too small")
    if not np.all(np.isfinite(a)):
        raise InvalidInput("draw matrix contains non-finite entries")
    return a


def as_log_density_vector(values, n_rows):
    """Validate per-draw log unnormalized posterior values.

    -inf encodes a zero-density draw; +inf and NaN are rejected.
    """
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.shape[0] != n_rows:
        raise InvalidInput(
            f"log-density vector has length {v.shape[0]}, expected {n_rows}"
        )
    if np.any(np.isnan(v)) or np.any(v == np.inf):
        raise InvalidInput("log-density vector contains NaN or +inf")
    return v


def sample_mean(draws):
    """Columnwise arithmetic mean of a draw matrix."""
    a = as_draw_matrix(draws, min_rows=1)
    return a.mean(axis=0)


def sample_covariance(draws):
    """Unbiased (divisor T-1) sample covariance; symmetric by construction."""
    a = as_draw_matrix(draws, min_rows=2)
    c = np.cov(a, rowvar=False, ddof=1)
    c = np.atleast_2d(c)
    return 0.5 * (c + c.T)


def cholesky_factor(sigma, ridge=False):
    """Lower-triangular factor Lo with Lo Lo^T = sigma.

    sigma must be symmetric to 1e-10 relative; it is symmetrized before
    factorization. A failed factorization raises NotPositiveDefinite unless
    ridge=True, in which case eps * mean(diag) * I is added once and the
    factorization retried.
    """
    s = np.asarray(sigma, dtype=float)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise InvalidInput(f"expected a square matrix, got shape {s.shape}")
    scale = np.max(np.abs(s))
    if scale > 0 and np.max(np.abs(s - s.T)) > SYMMETRY_RTOL * scale:
        raise InvalidInput("matrix is not symmetric within tolerance")
    s = 0.5 * (s + s.T)
    try:
        return np.linalg.cholesky(s)
    except np.linalg.LinAlgError:
        if not ridge:
            raise NotPositiveDefinite(
                "covariance matrix is not positive definite"
            ) from None
    s_r = s + RIDGE_EPS * np.mean(np.diag(s)) * np.eye(s.shape[0])
    try:
        return np.linalg.cholesky(s_r)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite(
            "covariance matrix is not positive definite even with ridge"
        ) from None


@dataclass(frozen=True)
class Ellipsoid:
    """Truncation set: {theta : (theta-center)^T Sigma^-1 (theta-center) < radius^2}.

    scale is the lower-triangular factor of Sigma, so log|Sigma| is
    twice the sum of the log diagonal (cached at construction).
    """

    center: np.ndarray
    scale: np.ndarray
    radius: float
    log_det_sigma: float = field(default=None)

    def __post_init__(self):
        center = np.asarray(self.center, dtype=float).reshape(-1)
        scale = np.asarray(self.scale, dtype=float)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "scale", scale)
        if scale.ndim != 2 or scale.shape != (center.size, center.size):
            raise InvalidInput("scale factor shape does not match center")
        diag = np.diag(scale)
        if np.any(diag <= 0):
            raise InvalidInput("scale factor must have strictly positive diagonal")
        if not (np.isfinite(self.radius) and self.radius > 0):
            raise InvalidInput("radius must be finite and positive")
        if self.log_det_sigma is None:
            object.__setattr__(
                self, "log_det_sigma", 2.0 * float(np.sum(np.log(diag)))
            )

    @property
    def dim(self):
        return self.center.size

    @classmethod
    def from_moments(cls, center, sigma, radius, ridge=False):
        return cls(center, cholesky_factor(sigma, ridge=ridge), radius)

    @classmethod
    def fit(cls, draws, radius, ridge=False):
        """Fit center and shape to a draw matrix (empirical mean/covariance)."""
        a = as_draw_matrix(draws, min_rows=2)
        return cls.from_moments(sample_mean(a), sample_covariance(a), radius,
                                ridge=ridge)


def standardize(draws, e: Ellipsoid):
    """Map each row theta to Lo^-1 (theta - center)."""
    a = as_draw_matrix(draws)
    if a.shape[1] != e.dim:
        raise InvalidInput("draw dimension does not match ellipsoid")
    z = solve_triangular(e.scale, (a - e.center).T, lower=True)
    return z.T


def mahalanobis_sq(theta, e: Ellipsoid):
    """(theta - center)^T Sigma^-1 (theta - center) via one triangular solve.

    Accepts a single d-vector or a T x d matrix; returns a scalar or a
    length-T vector accordingly.
    """
    t = np.asarray(theta, dtype=float)
    single = t.ndim == 1
    if single:
        if t.size != e.dim:
            raise InvalidInput("theta dimension does not match ellipsoid")
        t = t.reshape(1, -1)
    z = standardize(t, e)
    out = np.einsum("ij,ij->i", z, z)
    return float(out[0]) if single else out


def log_volume(e: Ellipsoid):
    """Log volume of the ellipsoid, evaluated through log-gamma."""
    d = e.dim
    return (
        d * np.log(e.radius)
        + 0.5 * d * np.log(np.pi)
        + 0.5 * e.log_det_sigma
        - gammaln(0.5 * d + 1.0)
    )
