import math

import numpy as np
import pytest

from vibes.bayes import (
    Posterior,
    inv_norm_cdf,
    longitudinal_prior,
    mahalanobis_check,
    map_update,
    norm_cdf,
    posterior_std,
    surprise,
)
from vibes.errors import ParameterError

# Reference standard-normal quantiles (15-digit table values).
QUANTILES = {
    0.5: 0.0,
    0.9: 1.2815515655446004,
    0.95: 1.6448536269514722,
    0.975: 1.959963984540054,
    0.99: 2.3263478740408408,
}


# ------------------------------------------------------------------- quantile


def test_inv_norm_cdf_reference_values():
    for p, expected in QUANTILES.items():
        assert abs(inv_norm_cdf(p) - expected) <= 1e-8, p


def test_inv_norm_cdf_symmetry():
    for p in (0.6, 0.75, 0.9, 0.99, 0.999):
        assert abs(inv_norm_cdf(p) + inv_norm_cdf(1 - p)) <= 1e-10


def test_inv_norm_cdf_round_trips_through_cdf():
    rng = np.random.default_rng(3)
    for p in rng.uniform(1e-6, 1 - 1e-6, size=500):
        assert abs(norm_cdf(inv_norm_cdf(float(p))) - p) <= 1e-12


def test_inv_norm_cdf_domain_errors():
    for bad in (0.0, 1.0, -0.2, 1.4, float("nan")):
        with pytest.raises(ParameterError):
            inv_norm_cdf(bad)


# ------------------------------------------------------------------ MAP update


def test_map_update_no_observations_keeps_prior():
    assert map_update(12.0, [], lam=4.0) == 12.0


def test_map_update_zero_lambda_is_pure_observation():
    assert map_update(99.0, [7.0, 8.0, 9.0], lam=0.0) == 8.0


def test_map_update_half_weight_case():
    # w_obs = 4 / (4 + 4) = 0.5 -> midpoint of prior 0 and obs mean 10
    assert map_update(0.0, [10.0, 10.0, 10.0, 10.0], lam=4.0) == 5.0


def test_map_update_rejects_negative_lambda():
    with pytest.raises(ParameterError):
        map_update(0.0, [1.0], lam=-1.0)


def test_map_update_limit_n_to_infinity():
    rng = np.random.default_rng(8)
    prior = 50.0
    obs = list(rng.normal(10, 1, size=20000))
    mu = map_update(prior, obs, lam=4.0)
    assert abs(mu - np.mean(obs)) <= 0.02


def test_map_update_limit_lambda_to_infinity_and_monotone():
    rng = np.random.default_rng(9)
    for _ in range(20):
        prior = float(rng.uniform(-10, 10))
        obs = list(rng.normal(0, 5, size=int(rng.integers(1, 30))))
        gaps = []
        for lam in (0.0, 1.0, 10.0, 1e3, 1e9):
            gaps.append(abs(map_update(prior, obs, lam) - prior))
        assert all(a >= b - 1e-12 for a, b in zip(gaps, gaps[1:]))  # shrinks toward prior
        assert gaps[-1] <= 1e-6 * max(1.0, abs(prior) + 50)


# --------------------------------------------------------------- posterior std


def test_posterior_std_floor_engages_when_empty():
    assert posterior_std([], sigma_floor=0.5, ema_alpha=0.3) == 0.5


def test_posterior_std_population_variance_oracle():
    # population variance of {8,10,12} = ((-2)^2 + 0 + 2^2)/3 = 8/3
    expected = math.sqrt(8.0 / 3.0)
    assert abs(posterior_std([8, 10, 12], 0.5, 1.0) - expected) <= 1e-12
    assert abs(expected - np.std([8, 10, 12])) <= 1e-12


def test_posterior_std_equal_observations_hit_floor():
    assert posterior_std([4.0, 4.0, 4.0], sigma_floor=0.5, ema_alpha=1.0) == 0.5


def test_posterior_std_ema_blend():
    raw = np.std([8, 10, 12])
    got = posterior_std([8, 10, 12], sigma_floor=0.1, ema_alpha=0.25, previous=2.0)
    assert abs(got - (0.25 * raw + 0.75 * 2.0)) <= 1e-12


def test_posterior_std_parameter_errors():
    with pytest.raises(ParameterError):
        posterior_std([1.0], sigma_floor=0.0, ema_alpha=0.3)
    with pytest.raises(ParameterError):
        posterior_std([1.0], sigma_floor=0.5, ema_alpha=0.0)


# -------------------------------------------------------------------- priors


def test_longitudinal_prior_history_mean():
    assert longitudinal_prior([10, 10, 10], horizon=50) == 10
    assert longitudinal_prior([8, 12], horizon=2) == 10


def test_longitudinal_prior_horizon_slices_recent():
    assert longitudinal_prior([100, 8, 12], horizon=2) == 10


def test_longitudinal_prior_fallbacks():
    assert longitudinal_prior([], horizon=10, current_obs_mean=9) == 9
    assert longitudinal_prior([], horizon=10) is None


# ------------------------------------------------------------------- surprise


def make_posterior(mu_par=20.0, sigma_par=5.0, sigma_perp=1.0):
    return Posterior(mu_par=mu_par, mu_perp=0.0, sigma_par=sigma_par, sigma_perp=sigma_perp, n_obs=4)


def test_surprise_zero_at_expected_behavior():
    score = surprise(20.0, 0.0, make_posterior(), 0.1, 0.1)
    assert score.s_par == 0.0 and score.s_perp == 0.0 and score.s_ego == 0.0


def test_surprise_longitudinal_exact_value():
    # z = |30-20|/5 = 2.0; quantile(0.9) = 1.2815515655; margin = 0.7184484345
    score = surprise(30.0, 0.0, make_posterior(), 0.1, 0.1)
    assert abs(score.s_par - (2.0 - QUANTILES[0.9])) <= 1e-8
    assert score.s_ego == score.s_par


def test_surprise_inside_credible_region_is_zero():
    # z_perp = 1.0 < quantile(0.9) = 1.2816
    score = surprise(20.0, 1.0, make_posterior(), 0.1, 0.1)
    assert score.s_perp == 0.0


def test_surprise_supremum():
    score = surprise(30.0, 5.0, make_posterior(), 0.1, 0.1)
    assert score.s_ego == max(score.s_par, score.s_perp)
    assert score.s_perp > score.s_par


def test_surprise_invalid_alpha():
    with pytest.raises(ParameterError):
        surprise(0, 0, make_posterior(), 0.5, 0.1)
    with pytest.raises(ParameterError):
        surprise(0, 0, make_posterior(), 0.1, 0.0)


def test_surprise_scale_covariance():
    # scaling deviation and sigma together leaves the score unchanged
    rng = np.random.default_rng(12)
    for _ in range(50):
        dev = float(rng.uniform(-30, 30))
        sigma = float(rng.uniform(0.5, 10))
        k = float(rng.uniform(0.1, 20))
        a = surprise(10 + dev, 0.0, make_posterior(mu_par=10, sigma_par=sigma), 0.1, 0.1)
        b = surprise(10 + k * dev, 0.0, make_posterior(mu_par=10, sigma_par=k * sigma), 0.1, 0.1)
        assert abs(a.s_par - b.s_par) <= 1e-9


def test_surprise_monotone_beyond_quantile():
    post = make_posterior(mu_par=0.0, sigma_par=1.0)
    values = [surprise(v, 0.0, post, 0.1, 0.1).s_par for v in np.linspace(1.2816, 8, 40)]
    assert all(b > a for a, b in zip(values, values[1:]))


# ---------------------------------------------------------------- mahalanobis


def test_mahalanobis_zero_at_mean():
    assert mahalanobis_check((5, 5), (5, 5), (2, 3)) == 0.0


def test_mahalanobis_term_by_term():
    # 3^2/1 + 4^2/4 = 9 + 4
    assert mahalanobis_check((3, 4), (0, 0), (1, 4)) == 13.0


def test_mahalanobis_equals_full_matrix_inverse():
    rng = np.random.default_rng(99)
    for _ in range(1000):
        feature = rng.uniform(-50, 50, size=2)
        mean = rng.uniform(-50, 50, size=2)
        variances = rng.uniform(0.1, 25, size=2)
        cov = np.diag(variances)
        diff = feature - mean
        oracle = float(diff @ np.linalg.inv(cov) @ diff)
        got = mahalanobis_check(tuple(feature), tuple(mean), tuple(variances))
        assert abs(got - oracle) <= 1e-9


def test_mahalanobis_rejects_bad_variance():
    with pytest.raises(ParameterError):
        mahalanobis_check((0, 0), (0, 0), (1, 0))
