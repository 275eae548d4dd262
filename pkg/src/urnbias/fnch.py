"""Fisher's noncentral hypergeometric (FNCH) distribution.

The univariate law is the distribution of Y1 given Y1 + Y2 = n where
Y_c ~ Binomial(m_c, zeta_c) independently.  Only the odds ratio

    w = [zeta1 / (1 - zeta1)] / [zeta2 / (1 - zeta2)]

is identifiable, so the pmf is parameterized by (m1, m2, n, log_w).  The
multivariate version conditions C independent binomials on their sum; its
weight vector is identified up to a common positive factor, and we store
log-weights normalized so the first entry is zero.

All mass computations run in log space with log-gamma binomial coefficients
and log-sum-exp normalizers.  Out-of-support pmf queries return -inf instead
of raising, because samplers routinely probe boundary states.  The full
multivariate normalizer is available through three independent routes
(explicit support enumeration, generating-function coefficient extraction,
and a telescoping chain rule), which the test suite plays against each other.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

NEG_INF = float("-inf")

_table_lock = threading.Lock()
_log_factorial_table = gammaln(np.arange(1024, dtype=np.float64) + 1.0)


def _log_factorials(nmax: int) -> np.ndarray:
    """Table t with t[k] = log(k!) for 0 <= k <= nmax, grown on demand."""
    global _log_factorial_table
    if nmax < _log_factorial_table.size:
        return _log_factorial_table
    with _table_lock:
        if nmax >= _log_factorial_table.size:
            size = max(nmax + 1, 2 * _log_factorial_table.size)
            _log_factorial_table = gammaln(np.arange(size, dtype=np.float64) + 1.0)
    return _log_factorial_table


def log_choose(m: int, k: int) -> float:
    """log of C(m, k); -inf when k is outside [0, m]."""
    if k < 0 or k > m:
        return NEG_INF
    t = _log_factorials(m)
    return float(t[m] - t[k] - t[m - k])


def _log_choose_range(m: int, ks: np.ndarray) -> np.ndarray:
    """Vectorized log C(m, k) for k already known to lie in [0, m]."""
    t = _log_factorials(m)
    return t[m] - t[ks] - t[m - ks]


def _as_int(value, name: str) -> int:
    if isinstance(value, (bool, np.bool_)):
        raise ValueError(f"{name} must be an integer, got bool")
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, float) and value.is_integer():
        return int(value)
    raise ValueError(f"{name} must be an integer, got {value!r}")


@dataclass(frozen=True)
class UnivariateSupport:
    """Support [lo, hi] of the univariate FNCH count y1."""

    lo: int
    hi: int

    @classmethod
    def of(cls, m1: int, m2: int, n: int) -> "UnivariateSupport":
        return cls(lo=max(0, n - m2), hi=min(n, m1))

    def __len__(self) -> int:
        return self.hi - self.lo + 1

    def __contains__(self, y: int) -> bool:
        return self.lo <= y <= self.hi

    def values(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1)


def _check_univariate(m1: int, m2: int, n: int) -> UnivariateSupport:
    m1 = _as_int(m1, "m1")
    m2 = _as_int(m2, "m2")
    n = _as_int(n, "n")
    if m1 < 0 or m2 < 0 or n < 0:
        raise ValueError(f"negative parameter: m1={m1}, m2={m2}, n={n}")
    if n > m1 + m2:
        raise ValueError(f"empty support: n={n} exceeds m1+m2={m1 + m2}")
    return UnivariateSupport.of(m1, m2, n)


def univariate_log_table(m1: int, m2: int, n: int, log_w: float) -> tuple[np.ndarray, np.ndarray]:
    """Normalized log-pmf over the full support.

    Returns (ys, logp) with ys = [lo..hi] and logp the log-probabilities.
    This is the workhorse both samplers and pmf queries share; the
    normalizer is a log-sum-exp over at most min(n, m1) + 1 terms.
    """
    support = _check_univariate(m1, m2, n)
    if not math.isfinite(log_w):
        raise ValueError(f"log_w must be finite, got {log_w}")
    ys = support.values()
    terms = _log_choose_range(m1, ys) + _log_choose_range(m2, n - ys) + ys * log_w
    peak = terms.max()
    return ys, terms - (peak + math.log(np.exp(terms - peak).sum()))


def log_pmf_univariate(m1: int, m2: int, n: int, log_w: float, y: int) -> float:
    """log P(Y1 = y) for the univariate FNCH; -inf outside the support."""
    support = _check_univariate(m1, m2, n)
    if not math.isfinite(log_w):
        raise ValueError(f"log_w must be finite, got {log_w}")
    if not isinstance(y, (int, np.integer)):
        yf = float(y)
        if not yf.is_integer():
            return NEG_INF
        y = int(yf)
    y = int(y)
    if y not in support:
        return NEG_INF
    ys, logp = univariate_log_table(m1, m2, n, log_w)
    return float(logp[y - support.lo])


@dataclass(frozen=True)
class FnchParams:
    """Parameters of a multivariate FNCH distribution.

    m is the vector of group sizes, n the conditioned total, log_w the
    log-weights.  Weights are identified only up to a common factor, so the
    constructor re-centers log_w to make the first entry zero; two parameter
    sets that differ by a constant shift of log_w compare equal.
    """

    m: tuple[int, ...]
    n: int
    log_w: tuple[float, ...]

    def __init__(self, m: Sequence[int], n: int, log_w: Sequence[float]):
        m_t = tuple(_as_int(v, "m") for v in m)
        n_i = _as_int(n, "n")
        lw = tuple(float(v) for v in log_w)
        if len(m_t) < 2:
            raise ValueError(f"need at least 2 groups, got {len(m_t)}")
        if len(lw) != len(m_t):
            raise ValueError(f"log_w length {len(lw)} != group count {len(m_t)}")
        if any(v < 0 for v in m_t):
            raise ValueError(f"negative group size in {m_t}")
        if n_i < 0:
            raise ValueError(f"negative draw total n={n_i}")
        if n_i > sum(m_t):
            raise ValueError(f"empty support: n={n_i} exceeds sum(m)={sum(m_t)}")
        if not all(math.isfinite(v) for v in lw):
            raise ValueError(f"non-finite log-weight in {lw}")
        lw = tuple(v - lw[0] for v in lw)
        object.__setattr__(self, "m", m_t)
        object.__setattr__(self, "n", n_i)
        object.__setattr__(self, "log_w", lw)

    @property
    def n_groups(self) -> int:
        return len(self.m)


def count_support(m: Sequence[int], n: int) -> int:
    """Number of integer vectors y with sum y = n and 0 <= y_c <= m_c.

    Dynamic program over partial sums; used to guard the enumeration oracle
    before any composition is materialized.
    """
    counts = np.zeros(n + 1, dtype=np.float64)
    counts[0] = 1.0
    for mc in m:
        width = min(mc, n)
        new = np.zeros(n + 1, dtype=np.float64)
        for k in range(0, width + 1):
            new[k:] += counts[: n + 1 - k]
        counts = new
    return int(round(counts[n]))


def enumerate_support(m: Sequence[int], n: int) -> Iterator[tuple[int, ...]]:
    """Yield all y with sum = n and 0 <= y_c <= m_c in lexicographic order."""
    m = [int(v) for v in m]

    def rec(idx: int, remaining: int, prefix: tuple[int, ...]) -> Iterator[tuple[int, ...]]:
        if idx == len(m) - 1:
            if 0 <= remaining <= m[idx]:
                yield prefix + (remaining,)
            return
        tail_cap = sum(m[idx + 1 :])
        lo = max(0, remaining - tail_cap)
        hi = min(m[idx], remaining)
        for v in range(lo, hi + 1):
            yield from rec(idx + 1, remaining - v, prefix + (v,))

    yield from rec(0, int(n), ())


def _log_unnorm_multi(params: FnchParams, y: Sequence[int]) -> float:
    total = 0.0
    for mc, lwc, yc in zip(params.m, params.log_w, y):
        lc = log_choose(mc, int(yc))
        if lc == NEG_INF:
            return NEG_INF
        total += lc + yc * lwc
    return total


DEFAULT_ORACLE_CAP = 10**7


def multivariate_log_table(
    params: FnchParams, cap: int = DEFAULT_ORACLE_CAP
) -> tuple[list[tuple[int, ...]], np.ndarray]:
    """Brute-force normalized log-pmf over the whole support.

    Enumerates every composition, so it is strictly an oracle for small
    instances; raises when the support size exceeds ``cap``.
    """
    size = count_support(params.m, params.n)
    if size > cap:
        raise ValueError(f"oracle too large: support has {size} points, cap is {cap}")
    ys = list(enumerate_support(params.m, params.n))
    terms = np.array([_log_unnorm_multi(params, y) for y in ys])
    return ys, terms - logsumexp(terms)


def log_pmf_multivariate(
    params: FnchParams, y: Sequence[int], cap: int = DEFAULT_ORACLE_CAP
) -> float:
    """Exact multivariate log-pmf by full support enumeration (oracle).

    Out-of-support y (wrong sum or a component beyond its group size)
    returns -inf.  Production code paths should use the pair-conditional
    decomposition instead; the sum in the normalizer is the documented
    bottleneck of the direct formula.
    """
    yv = [int(v) for v in y]
    if len(yv) != params.n_groups:
        raise ValueError(f"y has length {len(yv)}, expected {params.n_groups}")
    if sum(yv) != params.n or any(v < 0 or v > mc for v, mc in zip(yv, params.m)):
        return NEG_INF
    size = count_support(params.m, params.n)
    if size > cap:
        raise ValueError(f"oracle too large: support has {size} points, cap is {cap}")
    num = _log_unnorm_multi(params, yv)
    ys, logp = multivariate_log_table(params, cap)
    terms = np.array([_log_unnorm_multi(params, yy) for yy in ys])
    return float(num - logsumexp(terms))


def log_normalizer_gf(m: Sequence[int], n: int, log_w: Sequence[float]) -> float:
    """log of the FNCH normalizer via generating functions.

    The normalizer is the coefficient of t^n in prod_c (1 + w_c t)^{m_c};
    we build that coefficient by truncated log-space polynomial products,
    entirely independent of support enumeration.
    """
    n = _as_int(n, "n")
    poly = np.full(n + 1, NEG_INF)
    poly[0] = 0.0
    for mc, lwc in zip(m, log_w):
        mc = _as_int(mc, "m")
        width = min(mc, n)
        ks = np.arange(width + 1)
        factor = _log_choose_range(mc, ks) + ks * lwc
        poly = _log_poly_mul(poly, factor, n)
    return float(poly[n])


def log_normalizer_conv(m: Sequence[int], n: int, log_w: Sequence[float]) -> float:
    """log normalizer via linear-space polynomial products with rescaling.

    Same coefficient-of-t^n quantity as :func:`log_normalizer_gf`, but each
    factor is exponentiated against its own maximum and multiplied with
    ``np.convolve``, tracking the accumulated log offset.  Orders of
    magnitude faster for the repeated evaluations the exact acceptance-ratio
    mode performs; accurate to ~1e-13 relative for the small totals that
    mode is gated to.
    """
    n = _as_int(n, "n")
    acc = np.zeros(n + 1)
    acc[0] = 1.0
    offset = 0.0
    for mc, lwc in zip(m, log_w):
        mc = _as_int(mc, "m")
        ks = np.arange(min(mc, n) + 1)
        logf = _log_choose_range(mc, ks) + ks * lwc
        shift = float(np.max(logf))
        acc = np.convolve(acc, np.exp(logf - shift))[: n + 1]
        peak = float(np.max(acc))
        if peak <= 0.0:
            return NEG_INF
        acc /= peak
        offset += shift + math.log(peak)
    if acc[n] <= 0.0:
        return NEG_INF
    return offset + math.log(acc[n])


def _log_poly_mul(a: np.ndarray, b: np.ndarray, degree: int) -> np.ndarray:
    out = np.full(degree + 1, NEG_INF)
    for k in range(degree + 1):
        j_lo = max(0, k - (b.size - 1))
        j_hi = min(k, a.size - 1)
        if j_lo > j_hi:
            continue
        js = np.arange(j_lo, j_hi + 1)
        out[k] = logsumexp(a[js] + b[k - js])
    return out


def log_pmf_multivariate_chain(params: FnchParams, y: Sequence[int]) -> float:
    """Exact multivariate log-pmf without enumeration.

    Uses the telescoping factorization over suffix normalizers: the joint
    mass equals prod_c C(m_c, y_c) w_c^{y_c} divided by the full normalizer,
    where the normalizer comes from the generating-function route.  Scales
    as O(C n^2) instead of the support size, so it also covers instances the
    enumeration oracle rejects.
    """
    yv = [int(v) for v in y]
    if len(yv) != params.n_groups:
        raise ValueError(f"y has length {len(yv)}, expected {params.n_groups}")
    if sum(yv) != params.n or any(v < 0 or v > mc for v, mc in zip(yv, params.m)):
        return NEG_INF
    num = _log_unnorm_multi(params, yv)
    return float(num - log_normalizer_gf(params.m, params.n, params.log_w))


def conditional_pair_params(
    params: FnchParams, y: Sequence[int], a: int, b: int
) -> tuple[int, int, int, float]:
    """Univariate FNCH parameters for one pair of groups given the rest.

    Conditionally on every component except (a, b), the count y_a follows a
    univariate FNCH with group sizes (m_a, m_b), pair total y_a + y_b, and
    pair log-odds log_w_a - log_w_b.  Indices are zero-based.
    """
    if a == b:
        raise ValueError(f"pair indices must differ, got ({a}, {b})")
    c = params.n_groups
    if not (0 <= a < c and 0 <= b < c):
        raise ValueError(f"pair indices ({a}, {b}) out of range for {c} groups")
    yv = [int(v) for v in y]
    if len(yv) != c:
        raise ValueError(f"y has length {len(yv)}, expected {c}")
    if any(v < 0 or v > mc for v, mc in zip(yv, params.m)):
        raise ValueError(f"y={yv} violates 0 <= y_c <= m_c for m={params.m}")
    n_pair = yv[a] + yv[b]
    return params.m[a], params.m[b], n_pair, params.log_w[a] - params.log_w[b]


def sample_univariate(rng: np.random.Generator, m1: int, m2: int, n: int, log_w: float) -> int:
    """Draw one value from the univariate FNCH.

    For small supports the full pmf table is built and the CDF inverted.
    Beyond that, unnormalized masses are generated from the mode outward
    through the ratio recurrence

        p(y+1) / p(y) = w (m1 - y)(n - y) / ((y + 1)(m2 - n + y + 1)),

    truncating each tail once the next mass falls below 1e-15 of the running
    total, and the CDF of the visited window is inverted.  The window is
    O(sd) points wide, so the cost stays flat as the support grows.
    """
    support = _check_univariate(m1, m2, n)
    if not math.isfinite(log_w):
        raise ValueError(f"log_w must be finite, got {log_w}")
    if len(support) == 1:
        return support.lo
    if len(support) <= 64:
        ys, logp = univariate_log_table(m1, m2, n, log_w)
        probs = np.exp(logp)
        cdf = np.cumsum(probs)
        cdf[-1] = 1.0
        return int(ys[np.searchsorted(cdf, rng.random(), side="right")])
    return _sample_large_support(rng, m1, m2, n, log_w, support)


def _ratio(m1: int, m2: int, n: int, w: float, y: int) -> float:
    """p(y+1)/p(y) for the univariate pmf; strictly decreasing in y."""
    return w * (m1 - y) * (n - y) / ((y + 1.0) * (m2 - n + y + 1.0))


_LOG_TAIL_CUT = math.log(1e-15)


def _sample_large_support(
    rng: np.random.Generator, m1: int, m2: int, n: int, log_w: float, support: UnivariateSupport
) -> int:
    w = math.exp(log_w)
    lo, hi = support.lo, support.hi
    # The ratio is monotone decreasing, so the mode is the first y whose
    # step-up ratio drops below one; locate it by bisection.
    a, b = lo, hi
    while a < b:
        mid = (a + b) // 2
        if _ratio(m1, m2, n, w, mid) >= 1.0:
            a = mid + 1
        else:
            b = mid
    mode = a

    # Build the window around the mode in one vectorized pass, doubling the
    # half-width until both edges carry negligible mass (or hit the support).
    # The local curvature of the log-pmf (log of the step ratio across the
    # mode) gives 1/sd^2, which seeds the half-width so the first pass
    # nearly always succeeds.
    t = _log_factorials(m1 + m2)
    half = 16
    r_dn = _ratio(m1, m2, n, w, mode - 1) if mode > lo else 0.0
    r_up = _ratio(m1, m2, n, w, mode) if mode < hi else 0.0
    if r_dn > 0.0 and r_up > 0.0:
        curv = math.log(r_dn) - math.log(r_up)
        if curv > 0.0:
            half = int(9.0 / math.sqrt(curv)) + 16
    while True:
        w_lo = max(lo, mode - half)
        w_hi = min(hi, mode + half)
        ys = np.arange(w_lo, w_hi + 1)
        lm = (t[m1] - t[ys] - t[m1 - ys]) + (t[m2] - t[n - ys] - t[m2 - n + ys]) + ys * log_w
        peak = lm.max()
        if (w_lo == lo or lm[0] - peak < _LOG_TAIL_CUT) and (
            w_hi == hi or lm[-1] - peak < _LOG_TAIL_CUT
        ):
            break
        half *= 2
    cdf = np.cumsum(np.exp(lm - peak))
    return int(w_lo + np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))


@dataclass(frozen=True)
class BinomialCaptureModel:
    """One group of the generating model: Binomial(m, zeta) captures."""

    m: int
    zeta: float

    def __post_init__(self):
        m = _as_int(self.m, "m")
        object.__setattr__(self, "m", m)
        if m < 0:
            raise ValueError(f"negative group size m={m}")
        if not (0.0 < self.zeta < 1.0):
            raise ValueError(f"zeta must lie strictly inside (0, 1), got {self.zeta}")

    @property
    def log_odds(self) -> float:
        return math.log(self.zeta) - math.log1p(-self.zeta)


def binomial_condition_oracle(
    model1: BinomialCaptureModel, model2: BinomialCaptureModel, n: int
) -> dict[int, float]:
    """Exact table of P(Y1 = y1 | Y1 + Y2 = n) by binomial-product enumeration.

    Evaluates the two binomial pmfs directly and renormalizes, touching none
    of the FNCH code paths; conditioning independent binomials on their sum
    must reproduce log_pmf_univariate with log_w set to the difference of
    the groups' log-odds.
    """
    n = _as_int(n, "n")
    if n < 0:
        raise ValueError(f"negative total n={n}")
    if n > model1.m + model2.m:
        raise ValueError(f"empty support: n={n} exceeds m1+m2={model1.m + model2.m}")
    support = UnivariateSupport.of(model1.m, model2.m, n)
    ys = support.values()
    z1, z2 = model1.zeta, model2.zeta
    terms = (
        _log_choose_range(model1.m, ys)
        + ys * math.log(z1)
        + (model1.m - ys) * math.log1p(-z1)
        + _log_choose_range(model2.m, n - ys)
        + (n - ys) * math.log(z2)
        + (model2.m - (n - ys)) * math.log1p(-z2)
    )
    logp = terms - logsumexp(terms)
    return {int(yv): float(math.exp(lp)) for yv, lp in zip(ys, logp)}
