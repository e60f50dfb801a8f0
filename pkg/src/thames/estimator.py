"""Truncated harmonic mean estimation of the reciprocal marginal likelihood.

The core quantity is

    log Zhat^-1 = -log T' - log V(A) + logsumexp_{t in A} ( -log Lpi_t )

where A is a Mahalanobis ellipsoid fit to (one half of) the posterior
draws. All accumulation is in log space; the raw-scale sum overflows for
realistic |log Lpi| of order 10^3.
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp, ndtri

from .errors import (
    DegenerateTerm,
    EmptyTruncationSet,
    InsufficientData,
    InvalidInput,
)
from .geometry import (
    Ellipsoid,
    as_draw_matrix,
    as_log_density_vector,
    log_volume,
    mahalanobis_sq,
)
from .radius import RadiusPolicy, resolve_radius


@dataclass(frozen=True)
class ThamesOptions:
    """Estimator configuration.

    serial_correction is "none", "ar1", or a user-supplied variance
    inflation factor >= 1. correction, when set, is a
    ConstrainedCorrectionConfig from the correction module.
    """

    radius_policy: RadiusPolicy = RadiusPolicy.sqrt_d_plus_1()
    split: bool = True
    split_fraction: float = 0.5
    ci_level: float = 0.95
    serial_correction: object = "none"
    correction: object = None
    ridge: bool = False

    def __post_init__(self):
        if not 0.0 < self.split_fraction < 1.0:
            raise InvalidInput("split_fraction must be in (0, 1)")
        if not 0.0 < self.ci_level < 1.0:
            raise InvalidInput("ci_level must be in (0, 1)")
        sc = self.serial_correction
        if isinstance(sc, str):
            if sc not in ("none", "ar1"):
                raise InvalidInput(f"unknown serial correction {sc!r}")
        elif not (np.isreal(sc) and sc >= 1.0):
            raise InvalidInput("user inflation factor must be a real >= 1")


@dataclass(frozen=True)
class ThamesResult:
    log_recip_z: float
    log_z: float
    se_recip_rel: float
    ci_log_z: tuple  # (lower, upper) on the log Z scale; may be +-inf
    t_estimation: int
    n_inside: int
    radius_used: float
    ellipsoid: Ellipsoid
    correction_ratio: float = None


def _split_index(t, opts: ThamesOptions):
    t_fit = int(np.floor(opts.split_fraction * t))
    if t_fit < 2 or t - t_fit < 2:
        raise InvalidInput(
            f"split of T={t} at fraction {opts.split_fraction} leaves "
            "fewer than 2 draws on one side"
        )
    return t_fit


def variance_recip_iid(log_terms, t_estimation, log_vol):
    """Relative standard error of the mean of per-draw reciprocal terms.

    log_terms holds log(1/(L pi)) for the included draws only; excluded
    draws contribute exact zeros. The shifted-moment identity
    m2/m1^2 = exp(lse(2x) - 2 lse(x) + log T') keeps everything finite
    even when the terms themselves underflow on the raw scale.
    """
    lt = np.asarray(log_terms, dtype=float).reshape(-1) - log_vol
    if lt.size < 2:
        raise InsufficientData("need at least 2 included draws for a variance")
    if t_estimation < lt.size:
        raise InvalidInput("t_estimation smaller than the included count")
    log_m1 = logsumexp(lt) - np.log(t_estimation)
    log_m2 = logsumexp(2.0 * lt) - np.log(t_estimation)
    ratio = np.exp(log_m2 - 2.0 * log_m1)  # m2 / m1^2 >= 1
    return float(np.sqrt(max(ratio - 1.0, 0.0) / t_estimation))


def confidence_interval(log_recip_z, se_recip_rel, level):
    """Normal CI for Zhat^-1, reciprocated onto the log Z scale.

    The interval is symmetric on the reciprocal scale; after
    reciprocation it is not. A nonpositive lower reciprocal endpoint
    leaves the log Z interval unbounded above.
    """
    if se_recip_rel < 0:
        raise InvalidInput("standard error must be nonnegative")
    if not 0.0 < level < 1.0:
        raise InvalidInput("confidence level must be in (0, 1)")
    z = ndtri(0.5 * (1.0 + level))
    delta = z * se_recip_rel
    lower_log_z = -(log_recip_z + np.log1p(delta))
    if delta >= 1.0:
        upper_log_z = np.inf
    else:
        upper_log_z = -(log_recip_z + np.log(1.0 - delta))
    return float(lower_log_z), float(upper_log_z)


def ar1_inflation(log_series):
    """Variance inflation 1/(1-phi)^2 from the lag-1 autocorrelation.

    log_series holds the per-draw reciprocal terms in log space, with
    -inf for excluded draws (raw-scale zeros). The factor is clamped to
    [1, 1e6]; a constant series yields 1.
    """
    ls = np.asarray(log_series, dtype=float).reshape(-1)
    if ls.size < 10:
        raise InvalidInput("need at least 10 terms for an AR(1) fit")
    m = np.max(ls)
    if m == -np.inf:
        return 1.0
    x = np.exp(ls - m)  # scale-free; autocorrelation is scale invariant
    xc = x - x.mean()
    denom = np.dot(xc, xc)
    if denom == 0.0:
        return 1.0
    phi = np.dot(xc[:-1], xc[1:]) / denom
    factor = 1.0 / (1.0 - phi) ** 2 if phi < 1.0 else np.inf
    return float(np.clip(factor, 1.0, 1e6))


def harmonic_mean_log_z(log_likelihoods):
    """Classical (untruncated) harmonic mean of the likelihoods; unstable baseline."""
    ll = np.asarray(log_likelihoods, dtype=float).reshape(-1)
    if ll.size < 1 or not np.all(np.isfinite(ll)):
        raise InvalidInput("log-likelihoods must be nonempty and finite")
    return float(np.log(ll.size) - logsumexp(-ll))


def _estimate_with_ellipsoid(draws_est, log_post_est, e, opts: ThamesOptions):
    maha = mahalanobis_sq(draws_est, e)
    inside = maha < e.radius * e.radius  # strict: boundary ties excluded
    n_inside = int(np.count_nonzero(inside))
    if n_inside == 0:
        raise EmptyTruncationSet("no draw inside the truncation ellipsoid")
    lp_in = log_post_est[inside]
    if np.any(lp_in == -np.inf):
        raise DegenerateTerm(
            "zero-density draw inside the ellipsoid makes the sum infinite"
        )
    t_est = draws_est.shape[0]
    log_vol = log_volume(e)
    log_terms = -lp_in  # log(1/(L pi)) per included draw
    log_recip_z = float(logsumexp(log_terms) - log_vol - np.log(t_est))

    if n_inside >= 2:
        se = variance_recip_iid(log_terms, t_est, log_vol)
    else:
        se = np.inf
    if opts.serial_correction == "ar1":
        series = np.where(inside, -log_post_est, -np.inf)
        se *= np.sqrt(ar1_inflation(series))
    elif not isinstance(opts.serial_correction, str):
        se *= np.sqrt(float(opts.serial_correction))

    ci = confidence_interval(log_recip_z, se, opts.ci_level) if np.isfinite(se) \
        else (-np.inf, np.inf)
    return ThamesResult(
        log_recip_z=log_recip_z,
        log_z=-log_recip_z,
        se_recip_rel=se,
        ci_log_z=ci,
        t_estimation=t_est,
        n_inside=n_inside,
        radius_used=e.radius,
        ellipsoid=e,
    )


def thames(draws, log_post, opts: ThamesOptions = None, ellipsoid: Ellipsoid = None):
    """Estimate log Z^-1 (and log Z) from posterior draws.

    With splitting enabled, the ellipsoid is fit on the first
    floor(split_fraction * T) draws and the sum runs over the remainder.
    Passing an explicit ellipsoid bypasses fitting (and splitting)
    entirely, e.g. for oracle posterior moments.
    """
    opts = opts or ThamesOptions()
    a = as_draw_matrix(draws, min_rows=2)
    lp = as_log_density_vector(log_post, a.shape[0])
    d = a.shape[1]

    if opts.radius_policy.kind == "grid" and ellipsoid is None:
        c, _ = tune_radius_grid(a, lp, opts.radius_policy.grid, opts)
    else:
        c = ellipsoid.radius if ellipsoid is not None \
            else resolve_radius(opts.radius_policy, d)

    if ellipsoid is not None:
        e = ellipsoid
        a_est, lp_est = a, lp
    elif opts.split:
        t_fit = _split_index(a.shape[0], opts)
        e = Ellipsoid.fit(a[:t_fit], c, ridge=opts.ridge)
        a_est, lp_est = a[t_fit:], lp[t_fit:]
    else:
        e = Ellipsoid.fit(a, c, ridge=opts.ridge)
        a_est, lp_est = a, lp

    result = _estimate_with_ellipsoid(a_est, lp_est, e, opts)

    if opts.correction is not None:
        from . import correction as corr

        r_hat, _ = corr.estimate_volume_ratio(
            e, opts.correction.support, opts.correction.n_samples,
            opts.correction.seed,
        )
        result = corr.apply_correction(result, r_hat)
    return result


def tune_radius_grid(draws, log_post, grid, opts: ThamesOptions = None):
    """Evaluate the estimator over a radius grid with a shared ellipsoid shape.

    Returns (c_best, table) where table rows are (c, log_z, se_recip_rel);
    grid entries yielding an empty or singleton truncation set carry NaNs.
    c_best minimizes the estimated relative standard error, ties broken
    toward the smaller radius.
    """
    if not grid:
        raise InvalidInput("radius grid must be nonempty")
    opts = opts or ThamesOptions()
    a = as_draw_matrix(draws, min_rows=2)
    lp = as_log_density_vector(log_post, a.shape[0])
    if opts.split:
        t_fit = _split_index(a.shape[0], opts)
        fit_part, a_est, lp_est = a[:t_fit], a[t_fit:], lp[t_fit:]
    else:
        fit_part, a_est, lp_est = a, a, lp
    base = Ellipsoid.fit(fit_part, 1.0, ridge=opts.ridge)

    table = []
    for c in grid:
        e = Ellipsoid(base.center, base.scale, float(c))
        try:
            res = _estimate_with_ellipsoid(a_est, lp_est, e, opts)
        except (EmptyTruncationSet, InsufficientData, DegenerateTerm):
            table.append((float(c), np.nan, np.nan))
            continue
        table.append((float(c), res.log_z, res.se_recip_rel))
    usable = [(se, c) for c, _, se in table if np.isfinite(se)]
    if not usable:
        raise EmptyTruncationSet("every grid radius left the truncation set empty")
    c_best = min(usable)[1]  # ties break toward the smaller radius
    return c_best, table


def empirical_scv(draws, log_post, c, opts: ThamesOptions = None):
    """Plug-in squared coefficient of variation, T' * (relative SE)^2."""
    opts = opts or ThamesOptions()
    opts = replace(opts, radius_policy=RadiusPolicy.fixed(c),
                   serial_correction="none")
    res = thames(draws, log_post, opts)
    return float(res.t_estimation * res.se_recip_rel ** 2)
