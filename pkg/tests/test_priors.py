"""Prior families: densities, sampling consistency, elicitation, JSON."""

import math

import numpy as np
import pytest
from scipy.stats import chi2, kstest

from urnbias.priors import (
    Degenerate,
    DiscreteUniform,
    DiscretizedTruncatedNormal,
    ElicitedMoments,
    LogNormalOdds,
    TruncatedPoisson,
    elicit_from_moments,
    implied_odds_quantile,
    prior_from_json,
    prior_mean,
    prior_median,
    prior_to_json,
    sample,
)


def truncated_poisson_series(mean: float, lower: int, terms: int = 1000):
    """Direct-summation oracle: renormalized masses over lower..lower+terms."""
    logs = {}
    for k in range(lower, lower + terms):
        logs[k] = k * math.log(mean) - mean - math.lgamma(k + 1)
    peak = max(logs.values())
    total = sum(math.exp(v - peak) for v in logs.values())
    return {k: math.exp(v - peak) / total for k, v in logs.items()}


class TestTruncatedPoisson:
    def test_mass_at_lower_vs_series_oracle(self):
        spec = TruncatedPoisson(mean=5.0, lower=4)
        oracle = truncated_poisson_series(5.0, 4)
        assert math.exp(spec.log_density(4)) == pytest.approx(oracle[4], rel=1e-10)

    def test_density_sums_to_one(self):
        spec = TruncatedPoisson(mean=30.0, lower=25)
        total = sum(math.exp(spec.log_density(k)) for k in range(25, 400))
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_below_lower_is_neg_inf(self):
        spec = TruncatedPoisson(mean=5.0, lower=4)
        assert spec.log_density(3) == -math.inf
        assert spec.log_density(4.5) == -math.inf

    def test_samples_respect_truncation_and_mean(self):
        spec = TruncatedPoisson(mean=10.0, lower=12)
        rng = np.random.default_rng(3)
        draws = np.array([spec.sample(rng) for _ in range(10**5)])
        assert draws.min() >= 12
        oracle = truncated_poisson_series(10.0, 12)
        want = sum(k * p for k, p in oracle.items())
        var = sum(k * k * p for k, p in oracle.items()) - want**2
        se = math.sqrt(var / draws.size)
        assert abs(draws.mean() - want) < 2 * se + 1e-9

    def test_deep_truncation_sampling(self):
        # tail mass < 0.01 forces the tabulated path
        spec = TruncatedPoisson(mean=5.0, lower=15)
        rng = np.random.default_rng(4)
        draws = np.array([spec.sample(rng) for _ in range(20000)])
        assert draws.min() >= 15
        oracle = truncated_poisson_series(5.0, 15)
        want = sum(k * p for k, p in oracle.items())
        assert abs(draws.mean() - want) < 0.02

    def test_chi_square_consistency(self):
        spec = TruncatedPoisson(mean=8.0, lower=6)
        rng = np.random.default_rng(5)
        draws = np.array([spec.sample(rng) for _ in range(10**5)])
        oracle = truncated_poisson_series(8.0, 6)
        ks = [k for k, p in oracle.items() if p * draws.size >= 5]
        counts = np.array([(draws == k).sum() for k in ks], dtype=float)
        expected = np.array([oracle[k] * draws.size for k in ks])
        rest_count = draws.size - counts.sum()
        rest_exp = draws.size - expected.sum()
        stat = float(((counts - expected) ** 2 / expected).sum())
        stat += (rest_count - rest_exp) ** 2 / max(rest_exp, 1e-9)
        assert stat < chi2.ppf(0.999, len(ks))

    def test_validation(self):
        with pytest.raises(ValueError):
            TruncatedPoisson(mean=0.0, lower=1)
        with pytest.raises(ValueError):
            TruncatedPoisson(mean=5.0, lower=-1)


class TestDiscreteUniform:
    def test_log_mass(self):
        assert DiscreteUniform(1, 4).log_density(3) == pytest.approx(math.log(0.25))

    def test_outside_support(self):
        spec = DiscreteUniform(1, 4)
        assert spec.log_density(0) == -math.inf
        assert spec.log_density(5) == -math.inf
        assert spec.log_density(2.5) == -math.inf

    def test_frequencies(self):
        spec = DiscreteUniform(0, 9)
        rng = np.random.default_rng(6)
        draws = np.array([spec.sample(rng) for _ in range(10**5)])
        for k in range(10):
            assert abs((draws == k).mean() - 0.1) < 0.005

    def test_a_greater_than_b_rejected(self):
        with pytest.raises(ValueError, match="a <= b"):
            DiscreteUniform(4, 1)


class TestLogNormalOdds:
    def test_implied_odds_quantiles(self):
        spec = LogNormalOdds(0.0, 1.0)
        assert implied_odds_quantile(spec, 0.025) == pytest.approx(0.14, abs=0.01)
        assert implied_odds_quantile(spec, 0.975) == pytest.approx(7.1, abs=0.2)

    def test_odds_median_is_one(self):
        assert implied_odds_quantile(LogNormalOdds(0.0, 1.0), 0.5) == 1.0

    def test_density_integrates_to_one(self):
        spec = LogNormalOdds(0.3, 2.0)
        xs = np.linspace(-15, 15, 20001)
        total = np.trapezoid(np.exp([spec.log_density(x) for x in xs]), xs)
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_ks_consistency(self):
        spec = LogNormalOdds(0.5, 0.8)
        rng = np.random.default_rng(7)
        draws = np.array([spec.sample(rng) for _ in range(10**5)])
        res = kstest(draws, "norm", args=(0.5, math.sqrt(0.8)))
        assert res.pvalue > 0.001

    def test_validation(self):
        with pytest.raises(ValueError):
            LogNormalOdds(0.0, 0.0)
        with pytest.raises(ValueError):
            LogNormalOdds(math.nan, 1.0)


class TestDegenerate:
    def test_point_mass(self):
        spec = Degenerate(1.0)
        rng = np.random.default_rng(8)
        assert all(spec.sample(rng) == 1.0 for _ in range(10))
        assert spec.log_density(1.0) == 0.0
        assert spec.log_density(1.0 + 1e-12) == -math.inf


class TestDiscretizedTruncatedNormal:
    def test_unimodal_at_mean(self):
        spec = elicit_from_moments(ElicitedMoments(50.0, 5.0), 0, 100)
        m50 = spec.log_density(50)
        assert m50 > spec.log_density(60)
        assert m50 > spec.log_density(40)

    def test_symmetry_about_mean(self):
        spec = elicit_from_moments(ElicitedMoments(50.0, 5.0), 0, 100)
        assert spec.log_density(45) == pytest.approx(spec.log_density(55), abs=1e-12)

    def test_mass_sums_to_one(self):
        spec = elicit_from_moments(ElicitedMoments(10.0, 3.0), 8, 40)
        total = sum(math.exp(spec.log_density(k)) for k in range(8, 41))
        assert total == pytest.approx(1.0, abs=1e-8)

    def test_mean_vs_summation_oracle_and_sampler(self):
        spec = elicit_from_moments(ElicitedMoments(10.0, 3.0), 8, 40)
        masses = {k: math.exp(spec.log_density(k)) for k in range(8, 41)}
        want = sum(k * p for k, p in masses.items())
        var = sum(k * k * p for k, p in masses.items()) - want**2
        rng = np.random.default_rng(9)
        draws = np.array([spec.sample(rng) for _ in range(10**5)])
        assert abs(draws.mean() - want) < 2 * math.sqrt(var / draws.size) + 1e-9

    def test_mean_far_outside_range_errors(self):
        with pytest.raises(ValueError, match="underflow|mass"):
            DiscretizedTruncatedNormal(mean=1e4, sd=1.0, lower=0, upper=10)

    def test_bounds_validation(self):
        with pytest.raises(ValueError):
            elicit_from_moments(ElicitedMoments(5.0, 1.0), 10, 10)


class TestJsonRoundTrip:
    @pytest.mark.parametrize(
        "spec",
        [
            TruncatedPoisson(12.5, 3),
            DiscreteUniform(2, 9),
            LogNormalOdds(-0.3, 1.7),
            Degenerate(4.25),
            DiscretizedTruncatedNormal(20.0, 4.0, 10, 60),
        ],
    )
    def test_round_trip(self, spec):
        assert prior_from_json(prior_to_json(spec)) == spec

    def test_unknown_family_rejected(self):
        with pytest.raises(ValueError, match="family"):
            prior_from_json({"family": "cauchy", "x0": 0})

    def test_missing_fields_rejected(self):
        with pytest.raises(ValueError, match="missing"):
            prior_from_json({"family": "discrete_uniform", "a": 1})


class TestMoments:
    def test_prior_mean_uniform(self):
        assert prior_mean(DiscreteUniform(2, 8)) == pytest.approx(5.0)

    def test_prior_median_degenerate(self):
        assert prior_median(Degenerate(3.0)) == 3.0

    def test_prior_mean_truncated_poisson_matches_series(self):
        oracle = truncated_poisson_series(10.0, 12)
        want = sum(k * p for k, p in oracle.items())
        assert prior_mean(TruncatedPoisson(10.0, 12)) == pytest.approx(want, rel=1e-6)

    def test_dispatch_helpers(self):
        rng = np.random.default_rng(10)
        assert sample(Degenerate(2.0), rng) == 2.0
