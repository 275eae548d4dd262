"""Prior families for the population-size model.

Five families cover every prior the estimation pipeline needs: a
left-truncated Poisson for register-anchored totals, a discrete uniform for
bounded sizes, a normal on the log odds ratio, a point mass, and a
discretized truncated normal used to carry posterior moments forward from
one estimation step to the next (prior elicitation).

Each family is a small value class with ``log_density`` and ``sample``
methods; the module-level :func:`log_density` and :func:`sample` dispatch on
the instance.  Discrete families return log-mass, continuous ones return
log-density, and every family returns ``-inf`` outside its support.
Malformed parameters fail at construction, never at query time.  Specs
round-trip through JSON with a ``family`` discriminator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.special import gammaln, logsumexp
from scipy.stats import norm, poisson

from .fnch import _as_int

NEG_INF = float("-inf")

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _is_integer_value(x) -> bool:
    if isinstance(x, (bool, np.bool_)):
        return False
    if isinstance(x, (int, np.integer)):
        return True
    return isinstance(x, (float, np.floating)) and float(x).is_integer()


@dataclass(frozen=True)
class TruncatedPoisson:
    """Poisson(mean) conditioned on the outcome being >= lower (inclusive)."""

    mean: float
    lower: int

    def __post_init__(self):
        object.__setattr__(self, "mean", float(self.mean))
        object.__setattr__(self, "lower", _as_int(self.lower, "lower"))
        if not (self.mean > 0 and math.isfinite(self.mean)):
            raise ValueError(f"mean must be a positive finite real, got {self.mean}")
        if self.lower < 0:
            raise ValueError(f"lower must be non-negative, got {self.lower}")

    @property
    def _log_tail(self) -> float:
        # log P(Poisson(mean) >= lower); sf at lower-1 covers lower = 0 too.
        # Memoized: scipy's sf call is costly and the instance is immutable.
        cached = getattr(self, "_log_tail_memo", None)
        if cached is None:
            cached = float(poisson.logsf(self.lower - 1, self.mean))
            object.__setattr__(self, "_log_tail_memo", cached)
        return cached

    def log_density(self, x) -> float:
        if not _is_integer_value(x):
            return NEG_INF
        k = int(x)
        if k < self.lower:
            return NEG_INF
        log_pmf = k * math.log(self.mean) - self.mean - float(gammaln(k + 1))
        return log_pmf - self._log_tail

    def sample(self, rng: np.random.Generator) -> int:
        tail = math.exp(self._log_tail)
        if tail >= 0.01:
            # cheap rejection from the untruncated Poisson
            while True:
                k = int(rng.poisson(self.mean))
                if k >= self.lower:
                    return k
        # deep truncation: tabulate the conditional law from `lower` upward
        log_tail = self._log_tail
        ks, cum, k = [], [], self.lower
        acc = NEG_INF
        while True:
            acc = np.logaddexp(acc, poisson.logpmf(k, self.mean) - log_tail)
            ks.append(k)
            cum.append(math.exp(acc))
            if cum[-1] >= 1.0 - 1e-12 or len(ks) > 100000:
                break
            k += 1
        u = rng.random()
        idx = int(np.searchsorted(np.asarray(cum), u, side="right"))
        return ks[min(idx, len(ks) - 1)]


@dataclass(frozen=True)
class DiscreteUniform:
    """Uniform mass on the integers a..b inclusive."""

    a: int
    b: int

    def __post_init__(self):
        object.__setattr__(self, "a", _as_int(self.a, "a"))
        object.__setattr__(self, "b", _as_int(self.b, "b"))
        if self.a > self.b:
            raise ValueError(f"need a <= b, got a={self.a}, b={self.b}")

    def log_density(self, x) -> float:
        if not _is_integer_value(x):
            return NEG_INF
        k = int(x)
        if k < self.a or k > self.b:
            return NEG_INF
        return -math.log(self.b - self.a + 1)

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.a, self.b + 1))


@dataclass(frozen=True)
class LogNormalOdds:
    """Normal prior on the log odds ratio: log w ~ N(mu, tau2).

    Density and samples live on the log-odds scale; the implied odds ratio
    is log-normal with median exp(mu).
    """

    mu: float
    tau2: float

    def __post_init__(self):
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "tau2", float(self.tau2))
        if not math.isfinite(self.mu):
            raise ValueError(f"mu must be finite, got {self.mu}")
        if not (self.tau2 > 0 and math.isfinite(self.tau2)):
            raise ValueError(f"tau2 must be a positive finite real, got {self.tau2}")

    def log_density(self, x) -> float:
        x = float(x)
        if not math.isfinite(x):
            return NEG_INF
        return -0.5 * (x - self.mu) ** 2 / self.tau2 - 0.5 * math.log(self.tau2) - _LOG_SQRT_2PI

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.normal(self.mu, math.sqrt(self.tau2)))


@dataclass(frozen=True)
class Degenerate:
    """Point mass at a fixed value; the parameter is not sampled."""

    value: float

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        if not math.isfinite(self.value):
            raise ValueError(f"value must be finite, got {self.value}")

    def log_density(self, x) -> float:
        return 0.0 if float(x) == self.value else NEG_INF

    def sample(self, rng: np.random.Generator) -> float:
        return self.value


@dataclass
class DiscretizedTruncatedNormal:
    """Normal density evaluated at the integers lower..upper, renormalized.

    The carrier of elicited moments: a normal with the requested mean and sd
    restricted to the logically valid integer range.  Construction fails when
    the mean sits so far outside [lower, upper] that the closest support
    point is beyond 40 sd, at which point the renormalized law is numerically
    meaningless.
    """

    mean: float
    sd: float
    lower: int
    upper: int
    _log_z: float = field(init=False, repr=False, compare=False)
    _cdf: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.mean = float(self.mean)
        self.sd = float(self.sd)
        self.lower = _as_int(self.lower, "lower")
        self.upper = _as_int(self.upper, "upper")
        if not (self.sd > 0 and math.isfinite(self.sd)):
            raise ValueError(f"sd must be a positive finite real, got {self.sd}")
        if self.lower > self.upper:
            raise ValueError(f"need lower <= upper, got [{self.lower}, {self.upper}]")
        gap = max(self.lower - self.mean, self.mean - self.upper, 0.0) / self.sd
        if gap > 40.0:
            raise ValueError(
                f"mean {self.mean} lies {gap:.0f} sd outside [{self.lower}, {self.upper}]; "
                "renormalized mass underflows"
            )
        ks = np.arange(self.lower, self.upper + 1)
        self._log_z = float(logsumexp(-0.5 * ((ks - self.mean) / self.sd) ** 2))

    def log_density(self, x) -> float:
        if not _is_integer_value(x):
            return NEG_INF
        k = int(x)
        if k < self.lower or k > self.upper:
            return NEG_INF
        return -0.5 * ((k - self.mean) / self.sd) ** 2 - self._log_z

    def sample(self, rng: np.random.Generator) -> int:
        if self._cdf is None:
            ks = np.arange(self.lower, self.upper + 1)
            logp = -0.5 * ((ks - self.mean) / self.sd) ** 2 - self._log_z
            cdf = np.cumsum(np.exp(logp))
            cdf[-1] = 1.0
            self._cdf = cdf
        return self.lower + int(np.searchsorted(self._cdf, rng.random(), side="right"))


PriorSpec = Union[
    TruncatedPoisson, DiscreteUniform, LogNormalOdds, Degenerate, DiscretizedTruncatedNormal
]


@dataclass(frozen=True)
class ElicitedMoments:
    """Mean and sd harvested from an upstream posterior."""

    mean: float
    sd: float

    def __post_init__(self):
        object.__setattr__(self, "mean", float(self.mean))
        object.__setattr__(self, "sd", float(self.sd))
        if not (self.sd > 0 and math.isfinite(self.sd)):
            raise ValueError(f"sd must be a positive finite real, got {self.sd}")


def elicit_from_moments(
    moments: ElicitedMoments, lower: int, upper: int
) -> DiscretizedTruncatedNormal:
    """Build the elicited prior: a discretized truncated normal on [lower, upper]."""
    lower = _as_int(lower, "lower")
    upper = _as_int(upper, "upper")
    if lower >= upper:
        raise ValueError(f"need lower < upper, got [{lower}, {upper}]")
    return DiscretizedTruncatedNormal(mean=moments.mean, sd=moments.sd, lower=lower, upper=upper)


def log_density(spec: PriorSpec, x) -> float:
    """Log mass (discrete families) or log density (continuous) of x under spec."""
    return spec.log_density(x)


def sample(spec: PriorSpec, rng: np.random.Generator):
    """One draw from spec using the given RNG stream."""
    return spec.sample(rng)


_FAMILY_TAGS = {
    TruncatedPoisson: "truncated_poisson",
    DiscreteUniform: "discrete_uniform",
    LogNormalOdds: "log_normal_odds",
    Degenerate: "degenerate",
    DiscretizedTruncatedNormal: "discretized_truncated_normal",
}
_FAMILY_FIELDS = {
    "truncated_poisson": (TruncatedPoisson, ("mean", "lower")),
    "discrete_uniform": (DiscreteUniform, ("a", "b")),
    "log_normal_odds": (LogNormalOdds, ("mu", "tau2")),
    "degenerate": (Degenerate, ("value",)),
    "discretized_truncated_normal": (
        DiscretizedTruncatedNormal,
        ("mean", "sd", "lower", "upper"),
    ),
}


def prior_to_json(spec: PriorSpec) -> dict:
    """Serialize a prior to a JSON-ready dict with a 'family' discriminator."""
    tag = _FAMILY_TAGS.get(type(spec))
    if tag is None:
        raise ValueError(f"unknown prior type {type(spec).__name__}")
    _, fields = _FAMILY_FIELDS[tag]
    out = {"family": tag}
    for name in fields:
        out[name] = getattr(spec, name)
    return out


def prior_from_json(obj: dict) -> PriorSpec:
    """Inverse of :func:`prior_to_json`; validates through the constructors."""
    if not isinstance(obj, dict) or "family" not in obj:
        raise ValueError(f"prior JSON needs a 'family' field, got {obj!r}")
    tag = obj["family"]
    if tag not in _FAMILY_FIELDS:
        raise ValueError(f"unknown prior family {tag!r}")
    cls, fields = _FAMILY_FIELDS[tag]
    missing = [name for name in fields if name not in obj]
    if missing:
        raise ValueError(f"prior family {tag!r} missing fields {missing}")
    return cls(**{name: obj[name] for name in fields})


def implied_odds_quantile(spec: LogNormalOdds, q: float) -> float:
    """Quantile of the odds ratio w = exp(log w) implied by a LogNormalOdds prior."""
    if not isinstance(spec, LogNormalOdds):
        raise ValueError("implied_odds_quantile applies to LogNormalOdds priors")
    return float(math.exp(norm.ppf(q, loc=spec.mu, scale=math.sqrt(spec.tau2))))


def prior_mean(spec: PriorSpec) -> float:
    """Analytic or summation mean of a prior; used for chain initialization."""
    if isinstance(spec, Degenerate):
        return spec.value
    if isinstance(spec, LogNormalOdds):
        return spec.mu
    if isinstance(spec, DiscreteUniform):
        return 0.5 * (spec.a + spec.b)
    if isinstance(spec, TruncatedPoisson):
        # E[X | X >= L] = mean * P(X >= L-1) / P(X >= L)
        num = poisson.logsf(spec.lower - 2, spec.mean)
        return spec.mean * math.exp(num - spec._log_tail)
    if isinstance(spec, DiscretizedTruncatedNormal):
        ks = np.arange(spec.lower, spec.upper + 1)
        p = np.exp(-0.5 * ((ks - spec.mean) / spec.sd) ** 2 - spec._log_z)
        return float((p * ks).sum())
    raise ValueError(f"unknown prior type {type(spec).__name__}")


def prior_median(spec: PriorSpec) -> float:
    """Median of a prior (lower-middle convention for discrete families)."""
    if isinstance(spec, Degenerate):
        return spec.value
    if isinstance(spec, LogNormalOdds):
        return spec.mu
    if isinstance(spec, DiscreteUniform):
        return float((spec.a + spec.b) // 2)
    if isinstance(spec, TruncatedPoisson):
        acc = NEG_INF
        k = spec.lower
        while True:
            acc = np.logaddexp(acc, poisson.logpmf(k, spec.mean) - spec._log_tail)
            if math.exp(acc) >= 0.5 or k > spec.lower + 100000:
                return float(k)
            k += 1
    if isinstance(spec, DiscretizedTruncatedNormal):
        ks = np.arange(spec.lower, spec.upper + 1)
        cdf = np.cumsum(np.exp(-0.5 * ((ks - spec.mean) / spec.sd) ** 2 - spec._log_z))
        return float(ks[int(np.searchsorted(cdf, 0.5, side="left"))])
    raise ValueError(f"unknown prior type {type(spec).__name__}")
