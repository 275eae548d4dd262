"""Distribution-level tests: exact values, oracles, and invariances."""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chi2

from urnbias.fnch import (
    BinomialCaptureModel,
    FnchParams,
    UnivariateSupport,
    binomial_condition_oracle,
    conditional_pair_params,
    count_support,
    enumerate_support,
    log_normalizer_conv,
    log_normalizer_gf,
    log_pmf_multivariate,
    log_pmf_multivariate_chain,
    log_pmf_univariate,
    sample_univariate,
    univariate_log_table,
)


def fraction_pmf(m1: int, m2: int, n: int, w: Fraction, y: int) -> Fraction:
    """Exact rational univariate pmf, no logs, no shared code."""
    lo, hi = max(0, n - m2), min(n, m1)
    terms = {
        v: Fraction(math.comb(m1, v) * math.comb(m2, n - v)) * w**v for v in range(lo, hi + 1)
    }
    return terms[y] / sum(terms.values())


def fraction_pmf_multi(m, n, w, y) -> Fraction:
    total = Fraction(0)
    val = None
    for comp in enumerate_support(m, n):
        mass = Fraction(1)
        for mc, wc, yc in zip(m, w, comp):
            mass *= Fraction(math.comb(mc, yc)) * wc**yc
        total += mass
        if comp == tuple(y):
            val = mass
    assert val is not None, "query point outside support"
    return val / total


class TestUnivariatePmf:
    def test_central_two_by_two(self):
        assert log_pmf_univariate(2, 2, 2, 0.0, 1) == pytest.approx(math.log(2 / 3), abs=1e-12)

    def test_two_term_odds_three(self):
        assert log_pmf_univariate(1, 1, 1, math.log(3), 1) == pytest.approx(
            math.log(0.75), abs=1e-12
        )

    def test_against_rational_oracle(self):
        got = log_pmf_univariate(40, 60, 30, math.log(2.5), 18)
        want = fraction_pmf(40, 60, 30, Fraction(5, 2), 18)
        assert math.exp(got) == pytest.approx(float(want), rel=1e-12)

    def test_out_of_support_is_neg_inf(self):
        assert log_pmf_univariate(5, 5, 4, 0.3, 5) == -math.inf
        assert log_pmf_univariate(5, 5, 4, 0.3, -1) == -math.inf
        assert log_pmf_univariate(5, 5, 4, 0.3, 2.5) == -math.inf

    def test_empty_support_raises(self):
        with pytest.raises(ValueError, match="empty support"):
            log_pmf_univariate(3, 3, 7, 0.0, 2)

    def test_negative_sizes_raise(self):
        with pytest.raises(ValueError):
            log_pmf_univariate(-1, 3, 2, 0.0, 1)

    def test_nonfinite_log_w_raises(self):
        with pytest.raises(ValueError, match="finite"):
            log_pmf_univariate(3, 3, 2, math.inf, 1)


class TestSupport:
    def test_bounds(self):
        s = UnivariateSupport.of(3, 2, 4)
        assert (s.lo, s.hi) == (2, 3)

    def test_point_support(self):
        s = UnivariateSupport.of(3, 0, 2)
        assert (s.lo, s.hi) == (2, 2)

    def test_count_and_enumerate_agree(self):
        m = (3, 2, 4)
        for n in range(0, 10):
            comps = list(enumerate_support(m, n))
            assert len(comps) == count_support(m, n)
            assert all(sum(c) == n for c in comps)
            assert len(set(comps)) == len(comps)


class TestMultivariatePmf:
    def test_hand_enumeration(self):
        p = FnchParams([2, 1, 1], 2, [0.0, 0.0, math.log(2)])
        assert log_pmf_multivariate(p, [1, 0, 1]) == pytest.approx(math.log(4 / 9), abs=1e-12)

    def test_central_case(self):
        p = FnchParams([2, 1, 1], 2, [0.0, 0.0, 0.0])
        assert log_pmf_multivariate(p, [2, 0, 0]) == pytest.approx(math.log(1 / 6), abs=1e-12)

    def test_oracle_vs_chain_rule(self):
        p = FnchParams([5, 7, 4, 3], 8, [math.log(1.5), math.log(0.7), math.log(2.0), 0.0])
        y = [3, 2, 2, 1]
        assert log_pmf_multivariate(p, y) == pytest.approx(
            log_pmf_multivariate_chain(p, y), abs=1e-10
        )

    def test_oracle_vs_fraction_arithmetic(self):
        m, n = (4, 3, 3), 5
        w = (Fraction(3, 2), Fraction(1, 2), Fraction(2, 1))
        lw = [math.log(float(v)) for v in w]
        p = FnchParams(m, n, lw)
        for y in enumerate_support(m, n):
            want = float(fraction_pmf_multi(m, n, w, y))
            assert math.exp(log_pmf_multivariate(p, y)) == pytest.approx(want, rel=1e-10)

    def test_size_cap(self):
        p = FnchParams([400] * 6, 1200, [0.0] * 6)
        with pytest.raises(ValueError, match="oracle"):
            log_pmf_multivariate(p, [200] * 6, cap=10**5)

    def test_wrong_sum_is_neg_inf(self):
        p = FnchParams([2, 2], 2, [0.0, 0.0])
        assert log_pmf_multivariate(p, [2, 1]) == -math.inf


class TestNormalizerRoutes:
    def test_three_routes_agree(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            c = rng.integers(2, 5)
            m = rng.integers(1, 9, size=c).tolist()
            n = int(rng.integers(0, sum(m) + 1))
            lw = rng.normal(0, 1, size=c).tolist()
            by_gf = log_normalizer_gf(m, n, lw)
            by_conv = log_normalizer_conv(m, n, lw)
            assert by_gf == pytest.approx(by_conv, abs=1e-10)
            total = -math.inf
            for y in enumerate_support(m, n):
                t = sum(
                    math.log(math.comb(mc, yc)) + yc * wc for mc, wc, yc in zip(m, lw, y)
                )
                total = np.logaddexp(total, t)
            assert by_gf == pytest.approx(float(total), abs=1e-10)


class TestConditionalPair:
    def test_direct_substitution(self):
        p = FnchParams([2, 1, 1], 2, [0.0, 0.0, math.log(2)])
        assert conditional_pair_params(p, [1, 0, 1], 0, 2) == (
            2,
            1,
            2,
            pytest.approx(math.log(0.5)),
        )

    def test_equal_weights_give_zero_odds(self):
        p = FnchParams([4, 5, 6], 7, [0.3, 0.3, 0.3])
        for a in range(3):
            for b in range(3):
                if a != b:
                    assert conditional_pair_params(p, [2, 2, 3], a, b)[3] == 0.0

    def test_identical_indices_raise(self):
        p = FnchParams([2, 2], 2, [0.0, 0.0])
        with pytest.raises(ValueError, match="differ"):
            conditional_pair_params(p, [1, 1], 1, 1)

    def test_conditional_joint_consistency(self):
        # pair pmf at y_a equals joint / marginal-of-rest, via enumeration
        p = FnchParams([5, 7, 4, 3], 8, [math.log(1.5), math.log(0.7), math.log(2.0), 0.0])
        y = [3, 2, 2, 1]
        m1, m2, n_pair, lw = conditional_pair_params(p, y, 0, 1)
        joint = log_pmf_multivariate(p, y)
        rest = -math.inf
        for ya in range(0, n_pair + 1):
            yb = n_pair - ya
            if ya <= p.m[0] and yb <= p.m[1]:
                rest = np.logaddexp(rest, log_pmf_multivariate(p, [ya, yb, y[2], y[3]]))
        assert log_pmf_univariate(m1, m2, n_pair, lw, y[0]) == pytest.approx(
            joint - float(rest), abs=1e-10
        )


class TestSampling:
    def test_degenerate_support(self):
        rng = np.random.default_rng(0)
        assert all(sample_univariate(rng, 3, 0, 2, 1.7) == 2 for _ in range(20))

    def test_hypergeometric_frequency(self):
        rng = np.random.default_rng(1)
        draws = [sample_univariate(rng, 2, 2, 2, 0.0) for _ in range(10**5)]
        freq = sum(1 for d in draws if d == 1) / len(draws)
        assert abs(freq - 2 / 3) < 0.01

    @pytest.mark.parametrize(
        "m1,m2,n,log_w",
        [
            (40, 60, 30, math.log(2.5)),  # table path
            (300, 400, 350, -0.8),  # window path
            (3000, 2500, 2000, 0.4),  # window path, large support
        ],
    )
    def test_chi_square_against_exact_pmf(self, m1, m2, n, log_w):
        rng = np.random.default_rng(42)
        ys, logp = univariate_log_table(m1, m2, n, log_w)
        p = np.exp(logp)
        draws = np.array([sample_univariate(rng, m1, m2, n, log_w) for _ in range(10**5)])
        counts = np.bincount(draws - ys[0], minlength=len(ys)).astype(float)
        # pool cells with tiny expectation so the chi-square approximation holds
        keep = p * draws.size >= 5
        pooled_count = counts[keep].sum()
        pooled_exp = p[keep].sum() * draws.size
        stat = float(
            np.sum((counts[keep] - p[keep] * draws.size) ** 2 / (p[keep] * draws.size))
        )
        stat += (draws.size - pooled_count - (draws.size - pooled_exp)) ** 2 / max(
            draws.size - pooled_exp, 1e-9
        )
        dof = int(keep.sum())  # +1 pooled cell -1 normalization
        assert stat < chi2.ppf(0.999, dof)

    def test_empty_support_errors(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError, match="empty support"):
            sample_univariate(rng, 2, 2, 5, 0.0)


class TestBinomialConditioning:
    def test_symmetric_single(self):
        t = binomial_condition_oracle(
            BinomialCaptureModel(1, 0.5), BinomialCaptureModel(1, 0.5), 1
        )
        assert t == {0: pytest.approx(0.5), 1: pytest.approx(0.5)}

    def test_odds_three_vs_one(self):
        t = binomial_condition_oracle(
            BinomialCaptureModel(1, 0.75), BinomialCaptureModel(1, 0.5), 1
        )
        assert t[1] == pytest.approx(0.75)

    def test_pointwise_equality_with_fnch(self):
        a = BinomialCaptureModel(12, 0.3)
        b = BinomialCaptureModel(9, 0.6)
        table = binomial_condition_oracle(a, b, 10)
        lw = a.log_odds - b.log_odds
        for y, prob in table.items():
            assert prob == pytest.approx(math.exp(log_pmf_univariate(12, 9, 10, lw, y)), abs=1e-10)

    def test_zeta_bounds(self):
        with pytest.raises(ValueError, match="zeta"):
            BinomialCaptureModel(5, 1.0)


# ---------------------------------------------------------------------------
# Randomized properties. Each runs on >= 100 instances (criterion: the
# distribution-level property suite).

small_univariate = st.tuples(
    st.integers(0, 40), st.integers(0, 40), st.integers(0, 60), st.floats(-2.5, 2.5)
).filter(lambda t: t[2] <= t[0] + t[1])


@settings(max_examples=120, deadline=None)
@given(small_univariate)
def test_normalization_property(t):
    m1, m2, n, lw = t
    _, logp = univariate_log_table(m1, m2, n, lw)
    assert abs(np.exp(logp).sum() - 1.0) < 1e-10


@settings(max_examples=120, deadline=None)
@given(small_univariate)
def test_hypergeometric_reduction_property(t):
    # exact integer-arithmetic hypergeometric reference; scipy's hypergeom
    # NaNs out the legitimate empty-urn case (m1 = m2 = n = 0)
    m1, m2, n, _ = t
    ys, logp = univariate_log_table(m1, m2, n, 0.0)
    denom = math.comb(m1 + m2, n)
    ref = np.array([math.comb(m1, y) * math.comb(m2, n - y) / denom for y in ys])
    np.testing.assert_allclose(np.exp(logp), ref, atol=1e-12)


def test_weight_shift_canonicalization_dyadic():
    # dyadic values subtract exactly, so the canonical forms compare equal
    assert FnchParams([3, 2], 2, [0.5, 0.25]) == FnchParams([3, 2], 2, [0.75, 0.5])


@settings(max_examples=120, deadline=None)
@given(small_univariate, st.floats(-40, 40))
def test_weight_scaling_invariance_property(t, shift):
    m1, m2, n, lw = t
    p = FnchParams([m1, m2], n, [lw, 0.0])
    q = FnchParams([m1, m2], n, [lw + shift, shift])
    y = [min(n, m1), n - min(n, m1)]
    a = log_pmf_multivariate_chain(p, y)
    b = log_pmf_multivariate_chain(q, y)
    assert a == pytest.approx(b, abs=1e-12)


@settings(max_examples=120, deadline=None)
@given(small_univariate)
def test_label_symmetry_property(t):
    m1, m2, n, lw = t
    s = UnivariateSupport.of(m1, m2, n)
    for y in range(s.lo, s.hi + 1):
        a = log_pmf_univariate(m1, m2, n, lw, y)
        b = log_pmf_univariate(m2, m1, n, -lw, n - y)
        assert a == pytest.approx(b, abs=1e-12)


def test_binomial_conditioning_identity_100_instances():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        m1 = int(rng.integers(1, 25))
        m2 = int(rng.integers(1, 25))
        n = int(rng.integers(0, m1 + m2 + 1))
        z1, z2 = rng.uniform(0.05, 0.95, size=2)
        a, b = BinomialCaptureModel(m1, z1), BinomialCaptureModel(m2, z2)
        table = binomial_condition_oracle(a, b, n)
        lw = a.log_odds - b.log_odds
        for y, prob in table.items():
            assert prob == pytest.approx(
                math.exp(log_pmf_univariate(m1, m2, n, lw, y)), abs=1e-10
            )


def test_conditional_decomposition_identity_100_instances():
    # joint = pair-conditional univariate x marginal of the rest
    rng = np.random.default_rng(77)
    for _ in range(100):
        c = int(rng.integers(2, 5))
        m = [int(v) for v in rng.integers(1, 7, size=c)]
        n = int(rng.integers(0, sum(m) + 1))
        lw = [float(v) for v in rng.normal(0, 0.8, size=c)]
        p = FnchParams(m, n, lw)
        comps = list(enumerate_support(m, n))
        y = list(comps[rng.integers(0, len(comps))])
        a, b = 0, 1
        m1, m2, n_pair, lwp = conditional_pair_params(p, y, a, b)
        joint = log_pmf_multivariate(p, y)
        rest = -math.inf
        for ya in range(max(0, n_pair - m2), min(n_pair, m1) + 1):
            yy = list(y)
            yy[a], yy[b] = ya, n_pair - ya
            rest = np.logaddexp(rest, log_pmf_multivariate(p, yy))
        want = joint - float(rest)
        got = log_pmf_univariate(m1, m2, n_pair, lwp, y[a])
        if want == -math.inf:
            assert got == -math.inf
        else:
            assert got == pytest.approx(want, abs=1e-10)


def test_multivariate_normalization_small_supports():
    rng = np.random.default_rng(11)
    for _ in range(40):
        c = int(rng.integers(2, 5))
        m = [int(v) for v in rng.integers(0, 8, size=c)]
        n = int(rng.integers(0, sum(m) + 1))
        lw = [float(v) for v in rng.normal(0, 1.2, size=c)]
        p = FnchParams(m, n, lw)
        total = sum(math.exp(log_pmf_multivariate(p, y)) for y in enumerate_support(m, n))
        assert abs(total - 1.0) < 1e-10
