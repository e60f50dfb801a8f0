"""Constrained-support adjustment.

When the truncation ellipsoid sticks out of the posterior support, the
reciprocal estimate is inflated by the volume ratio
R = V(A intersect support) / V(A). R is estimated by uniform Monte Carlo
sampling inside the ellipsoid and divided back out.

Sampling uses the counter-based Philox generator, so a 64-bit seed fully
determines the draw; parallel replications should derive per-replication
seeds with seeds.spawn_seed.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtri

from .errors import InvalidInput, ZeroSupportOverlap
from .geometry import Ellipsoid


@dataclass(frozen=True)
class SupportPredicate:
    """Membership test for the posterior support.

    kind is one of "unbounded", "positive_orthant", "box", "simplex",
    "callback". Simplex membership means the selected coordinates are
    strictly positive and sum to less than 1 (the last, dropped simplex
    coordinate holds the remainder).
    """

    kind: str
    indices: tuple = None
    lower: tuple = None
    upper: tuple = None
    func: object = None

    @classmethod
    def unbounded(cls):
        return cls("unbounded")

    @classmethod
    def positive_orthant(cls, indices):
        return cls("positive_orthant", indices=tuple(int(i) for i in indices))

    @classmethod
    def box(cls, lower, upper):
        lower = tuple(float(x) for x in lower)
        upper = tuple(float(x) for x in upper)
        if len(lower) != len(upper) or any(l >= u for l, u in zip(lower, upper)):
            raise InvalidInput("box bounds must satisfy lower < upper componentwise")
        return cls("box", lower=lower, upper=upper)

    @classmethod
    def simplex(cls, indices=None):
        idx = None if indices is None else tuple(int(i) for i in indices)
        return cls("simplex", indices=idx)

    @classmethod
    def callback(cls, func):
        return cls("callback", func=func)

    def contains(self, points):
        """Vectorized membership for an n x d matrix; returns a bool vector."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n, d = pts.shape
        if self.kind == "unbounded":
            return np.ones(n, dtype=bool)
        if self.kind == "positive_orthant":
            self._check_indices(d)
            return np.all(pts[:, list(self.indices)] > 0.0, axis=1)
        if self.kind == "box":
            if len(self.lower) != d:
                raise InvalidInput("box bounds do not match dimension")
            lo = np.asarray(self.lower)
            up = np.asarray(self.upper)
            return np.all((pts > lo) & (pts < up), axis=1)
        if self.kind == "simplex":
            idx = list(self.indices) if self.indices is not None else list(range(d))
            if idx and max(idx) >= d:
                raise InvalidInput("simplex indices out of range")
            sub = pts[:, idx]
            return np.all(sub > 0.0, axis=1) & (sub.sum(axis=1) < 1.0)
        if self.kind == "callback":
            return np.fromiter((bool(self.func(p)) for p in pts), dtype=bool,
                               count=n)
        raise InvalidInput(f"unknown support kind {self.kind!r}")

    def _check_indices(self, d):
        if any(i < 0 or i >= d for i in self.indices):
            raise InvalidInput("support indices out of range")


@dataclass(frozen=True)
class ConstrainedCorrectionConfig:
    support: SupportPredicate
    n_samples: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise InvalidInput("n_samples must be >= 1")


def _rng(seed):
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


def sample_uniform_ellipsoid(e: Ellipsoid, n, seed):
    """n iid uniform points in the open ellipsoid, deterministic per seed.

    Direction from a normalized Gaussian vector, radius from c * u^(1/d).
    """
    if n < 1:
        raise InvalidInput("sample count must be >= 1")
    rng = _rng(seed)
    d = e.dim
    g = rng.standard_normal((n, d))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0  # measure-zero guard
    s = g / norms
    r = e.radius * rng.random(n) ** (1.0 / d)
    return e.center + (s * r[:, None]) @ e.scale.T


def estimate_volume_ratio(e: Ellipsoid, support: SupportPredicate, n, seed,
                          ci_level=0.95):
    """Monte Carlo volume ratio R_hat with a normal-approximation CI.

    Raises ZeroSupportOverlap (carrying the CI) when no sample lands in
    the support, since dividing by R_hat = 0 is undefined.
    """
    pts = sample_uniform_ellipsoid(e, n, seed)
    hits = support.contains(pts)
    r_hat = float(np.mean(hits))
    z = ndtri(0.5 * (1.0 + ci_level))
    half = z * np.sqrt(r_hat * (1.0 - r_hat) / n)
    ci = (max(0.0, r_hat - half), min(1.0, r_hat + half))
    if r_hat == 0.0:
        raise ZeroSupportOverlap(
            "no uniform sample fell inside the support; increase n or check "
            "the support specification", ci=ci)
    return r_hat, ci


def apply_correction(result, r_hat):
    """Divide the reciprocal estimate by the volume ratio."""
    if not 0.0 < r_hat <= 1.0:
        raise ZeroSupportOverlap(f"volume ratio must be in (0, 1], got {r_hat}")
    log_r = float(np.log(r_hat))
    lower, upper = result.ci_log_z
    return replace(
        result,
        log_recip_z=result.log_recip_z - log_r,
        log_z=result.log_z + log_r,
        ci_log_z=(lower + log_r, upper + log_r),
        correction_ratio=float(r_hat),
    )
