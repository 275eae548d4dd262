"""Posterior summaries: HPD windows, medians, coverage accounting."""

import math
import warnings

import numpy as np
import pytest

from urnbias.summaries import PosteriorSummary, coverage, fmt_float, hpd_interval, summarize


class TestHpd:
    def test_tie_break_lowest_window(self):
        lo, hi = hpd_interval(np.array([1.0, 2, 3, 4, 5]), 0.6)
        assert (lo, hi) == (1.0, 3.0)

    def test_known_normal_quantiles(self):
        rng = np.random.default_rng(12)
        draws = rng.normal(size=10**5)
        lo, hi = hpd_interval(draws, 0.95)
        assert lo == pytest.approx(-1.96, abs=0.05)
        assert hi == pytest.approx(1.96, abs=0.05)

    def test_minimality_and_content(self):
        rng = np.random.default_rng(13)
        draws = np.sort(rng.gamma(3.0, size=501))
        level = 0.9
        lo, hi = hpd_interval(draws, level)
        k = math.ceil(level * draws.size)
        inside = ((draws >= lo) & (draws <= hi)).sum()
        assert inside >= k
        widths = draws[k - 1 :] - draws[: draws.size - k + 1]
        assert hi - lo == pytest.approx(widths.min(), abs=0.0)


class TestSummarize:
    def test_constant_draws(self):
        s = summarize(np.full(50, 7.0))
        assert s.mean == s.median == s.hpd_lo == s.hpd_hi == 7.0
        assert s.sd == 0.0

    def test_integer_median_stays_in_support(self):
        s = summarize(np.array([1, 2, 3, 4]))
        assert s.median == 2.0

    def test_continuous_median_uses_midpoint(self):
        s = summarize(np.array([1.0, 2.5, 3.0, 4.0]))
        assert s.median == pytest.approx(2.75)

    def test_too_few_draws(self):
        with pytest.raises(ValueError, match="at least 2"):
            summarize(np.array([1.0]))

    def test_bad_level(self):
        with pytest.raises(ValueError, match="level"):
            summarize(np.arange(10), level=1.0)

    def test_multimodal_warning(self):
        draws = np.concatenate([np.zeros(500), np.full(500, 100.0)])
        with pytest.warns(UserWarning, match="multimodal"):
            summarize(draws)

    def test_unimodal_no_warning(self):
        rng = np.random.default_rng(14)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            summarize(rng.normal(size=5000))


class TestCoverage:
    def _s(self, lo, hi):
        return PosteriorSummary(mean=0, sd=1, median=0, hpd_lo=lo, hpd_hi=hi)

    def test_all_cover(self):
        assert coverage([self._s(0, 2)] * 4, [1.0] * 4) == 1.0

    def test_none_cover(self):
        assert coverage([self._s(0, 2)] * 4, [5.0] * 4) == 0.0

    def test_exact_ratio(self):
        sums = [self._s(0, 2), self._s(0, 2), self._s(0, 2)]
        assert coverage(sums, [1.0, 5.0, 1.5]) == 2 / 3

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            coverage([self._s(0, 1)], [1.0, 2.0])


class TestFmtFloat:
    def test_round_trip_and_integers(self):
        assert fmt_float(0.1) == "0.10000000000000001"
        assert float(fmt_float(math.pi)) == math.pi
        assert fmt_float(3) == "3"
