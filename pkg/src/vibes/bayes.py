"""Online MAP estimation of normal driving behavior and surprise scoring.

The normal state per dimension is a Gaussian whose mean is a precision-weighted
blend of a dynamic prior and the current neighborhood observations, with
observation weight N / (N + lambda). Surprise is the excess standardized
deviation beyond the credible-region quantile: values inside the region score
exactly zero, so nominal fluctuation costs nothing downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import ParameterError

# Rational approximation coefficients for the standard normal quantile
# (Acklam), refined below with one Newton step against erfc.
_A = (
    -3.969683028665376e01,
    2.209460984245205e02,
    -2.759285104469687e02,
    1.383577518672690e02,
    -3.066479806614716e01,
    2.506628277459239e00,
)
_B = (
    -5.447609879822406e01,
    1.615858368580409e02,
    -1.556989798598866e02,
    6.680131188771972e01,
    -1.328068155288572e01,
)
_C = (
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e00,
    -2.549732539343734e00,
    4.374664141464968e00,
    2.938163982698783e00,
)
_D = (
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e00,
    3.754408661907416e00,
)
_P_LOW = 0.02425
_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / _SQRT2)


def inv_norm_cdf(p: float) -> float:
    """Standard normal quantile, |error| <= 1e-8 on (0, 1)."""
    if not (0.0 < p < 1.0) or math.isnan(p):
        raise ParameterError(f"quantile argument {p!r} outside (0, 1)")
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = (
            ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        ) / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    elif p <= 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = (
            ((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]
        ) * q / (
            ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        )
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -(
            ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        ) / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    # One Newton refinement against the exact CDF.
    err = norm_cdf(x) - p
    pdf = math.exp(-0.5 * x * x) / _SQRT_2PI
    if pdf > 0.0:
        x -= err / pdf
    return x


@dataclass(frozen=True)
class Posterior:
    mu_par: float
    mu_perp: float
    sigma_par: float
    sigma_perp: float
    n_obs: int

    def to_dict(self) -> dict:
        return {
            "mu_par": self.mu_par,
            "mu_perp": self.mu_perp,
            "sigma_par": self.sigma_par,
            "sigma_perp": self.sigma_perp,
            "n_obs": self.n_obs,
        }


@dataclass(frozen=True)
class SurpriseScore:
    s_par: float
    s_perp: float
    s_ego: float

    def to_dict(self) -> dict:
        return {"s_par": self.s_par, "s_perp": self.s_perp, "s_ego": self.s_ego}


def map_update(prior_mean: float, observations: Sequence[float], lam: float) -> float:
    """Posterior mean as w_prior * prior + w_obs * obs mean, w_obs = N / (N + lambda)."""
    if lam < 0.0:
        raise ParameterError(f"precision ratio lambda {lam} must be >= 0")
    n = len(observations)
    if n == 0:
        return prior_mean
    w_obs = n / (n + lam)
    obs_mean = sum(observations) / n
    return (1.0 - w_obs) * prior_mean + w_obs * obs_mean


def population_std(values: Sequence[float]) -> float:
    n = len(values)
    if n <= 1:
        return 0.0
    mean = sum(values) / n
    return math.sqrt(sum((v - mean) ** 2 for v in values) / n)


def posterior_std(
    observations: Sequence[float],
    sigma_floor: float,
    ema_alpha: float,
    previous: Optional[float] = None,
) -> float:
    """EMA-smoothed population std of the current observations, floored."""
    if sigma_floor <= 0.0:
        raise ParameterError(f"sigma floor {sigma_floor} must be positive")
    if not (0.0 < ema_alpha <= 1.0):
        raise ParameterError(f"ema alpha {ema_alpha} outside (0, 1]")
    raw = population_std(observations)
    smoothed = ema_alpha * raw + (1.0 - ema_alpha) * previous if previous is not None else raw
    return max(smoothed, sigma_floor)


def longitudinal_prior(
    flow_speed_history: Sequence[float],
    horizon: int,
    current_obs_mean: Optional[float] = None,
) -> Optional[float]:
    """Mean flow speed over the last ``horizon`` samples.

    Falls back to the current observation mean when no history exists; returns
    None (scoring must be skipped) when neither is available.
    """
    if horizon < 1:
        raise ParameterError(f"horizon {horizon} must be >= 1")
    recent = flow_speed_history[-horizon:] if flow_speed_history else ()
    if recent:
        return sum(recent) / len(recent)
    return current_obs_mean


def surprise(
    v_par_eff: float,
    v_perp_eff: float,
    posterior: Posterior,
    alpha_par: float,
    alpha_perp: float,
) -> SurpriseScore:
    """Decoupled longitudinal/lateral surprise; ego score is their supremum.

    The lateral expectation is fixed at zero: vehicles are expected to hold
    their lane, so any standardized lateral magnitude beyond the quantile is
    surprising regardless of the neighborhood's incidental lateral mean.
    """
    for name, alpha in (("alpha_par", alpha_par), ("alpha_perp", alpha_perp)):
        if not (0.0 < alpha < 0.5):
            raise ParameterError(f"{name}={alpha} outside (0, 0.5)")
    z_par = abs(v_par_eff - posterior.mu_par) / posterior.sigma_par
    s_par = max(0.0, z_par - inv_norm_cdf(1.0 - alpha_par))
    z_perp = abs(v_perp_eff) / posterior.sigma_perp
    s_perp = max(0.0, z_perp - inv_norm_cdf(1.0 - alpha_perp))
    return SurpriseScore(s_par=s_par, s_perp=s_perp, s_ego=max(s_par, s_perp))


def mahalanobis_check(
    feature: Sequence[float], mean: Sequence[float], cov_diag: Sequence[float]
) -> float:
    """Squared Mahalanobis distance under a diagonal 2x2 covariance.

    Test oracle for the decoupled sum-of-squared-z-scores form; the trigger
    path never calls this.
    """
    if len(feature) != 2 or len(mean) != 2 or len(cov_diag) != 2:
        raise ParameterError("mahalanobis_check expects 2-vectors")
    if cov_diag[0] <= 0.0 or cov_diag[1] <= 0.0:
        raise ParameterError(f"non-positive variance in {tuple(cov_diag)}")
    d0 = feature[0] - mean[0]
    d1 = feature[1] - mean[1]
    return d0 * d0 / cov_diag[0] + d1 * d1 / cov_diag[1]
