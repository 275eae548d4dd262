"""Metropolis-within-Gibbs samplers for the population-size posteriors.

Two entry points share the machinery.  ``run_univariate_posterior`` targets
the joint posterior of (M, N, log w) for one two-group cell, updating each
non-degenerate parameter in turn with a Metropolis step against the exact
univariate FNCH likelihood.  ``run_multivariate_posterior`` targets the
group-size vector M of a C-group model with known weights.

For the multivariate case the acceptance ratio comes in two flavours.  The
``pair`` mode evaluates only the univariate FNCH of the updated group
against a fixed anchor group (pair total y_c + y_anchor); this is the
published algorithm and is cheap at any scale, but it silently drops the
rest-marginal factor of the exact joint ratio and therefore targets a
slightly perturbed posterior (the distortion is second order once counts
reach the hundreds, and vanishes entirely for C=2).  The ``exact`` mode
computes the full joint pmf ratio through a convolution normalizer, which is
feasible when the draw total n is small.  The default ``auto`` mode uses the
exact ratio when n <= exact_n_cap and the pair ratio beyond.

Integer parameters use rounded-Gaussian random-walk proposals; a proposal
that rounds onto the current value counts as an accepted move, which keeps
the proposal symmetric and lets step-size adaptation see saturating
acceptance when the walk is too timid.  Adaptation (x1.1 above 0.5
windowed acceptance, x0.9 below 0.25) runs during burn-in only.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import priors as priors_mod
from .fnch import NEG_INF, _log_factorials, log_choose, log_normalizer_conv
from .priors import Degenerate, PriorSpec
from .summaries import fmt_float

UNIVARIATE_PARAMS = ("M", "N", "logw")


@dataclass(frozen=True)
class IndependentFromPrior:
    """Propose by drawing fresh values from the parameter's prior."""


@dataclass(frozen=True)
class RoundedGaussianWalk:
    """Symmetric integer random walk: round(current + sd * z)."""

    sd: float = 10.0

    def __post_init__(self):
        if not (self.sd > 0 and math.isfinite(self.sd)):
            raise ValueError(f"proposal sd must be positive and finite, got {self.sd}")


ProposalSpec = IndependentFromPrior | RoundedGaussianWalk


@dataclass(frozen=True)
class McmcConfig:
    iterations: int = 50000
    burn_in: int = 10000
    thin: int = 1
    seed: int = 0
    rw_sd: dict | None = None
    adapt: bool = True
    adapt_window: int = 50
    ratio_mode: str = "auto"
    exact_n_cap: int = 128
    scan: str = "systematic"

    def __post_init__(self):
        if self.iterations <= 0:
            raise ValueError(f"iterations must be positive, got {self.iterations}")
        if not (0 <= self.burn_in < self.iterations):
            raise ValueError(
                f"burn_in must lie in [0, iterations), got {self.burn_in} vs {self.iterations}"
            )
        if self.thin < 1:
            raise ValueError(f"thin must be >= 1, got {self.thin}")
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.seed}")
        if self.rw_sd is not None:
            for k, v in self.rw_sd.items():
                if not (v > 0 and math.isfinite(v)):
                    raise ValueError(f"rw_sd[{k!r}] must be positive, got {v}")
        if self.adapt_window < 1:
            raise ValueError(f"adapt_window must be >= 1, got {self.adapt_window}")
        if self.ratio_mode not in ("auto", "pair", "exact"):
            raise ValueError(f"ratio_mode must be auto/pair/exact, got {self.ratio_mode!r}")
        if self.scan not in ("systematic", "random"):
            raise ValueError(f"scan must be systematic or random, got {self.scan!r}")


@dataclass
class ChainDraws:
    """Posterior draws plus the bookkeeping needed to reproduce them."""

    params: tuple[str, ...]
    draws: np.ndarray
    accept_rate: dict[str, float]
    accept_rate_burn_in: dict[str, float]
    seed: int
    config: McmcConfig
    burn_in_rows: int
    final_step_sizes: dict[str, float] = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    def post(self, name: str) -> np.ndarray:
        """Post-burn-in draws of one parameter."""
        return self.draws[self.burn_in_rows :, self.params.index(name)]

    def to_csv(self, path) -> None:
        path = Path(path)
        integer_cols = [
            bool(np.all(self.draws[:, j] == np.floor(self.draws[:, j])))
            for j in range(len(self.params))
        ]
        with open(path, "w", newline="") as f:
            f.write("draw," + ",".join(self.params) + "\n")
            for i in range(self.draws.shape[0]):
                row = [
                    str(int(self.draws[i, j])) if integer_cols[j] else fmt_float(self.draws[i, j])
                    for j in range(len(self.params))
                ]
                f.write(f"{i}," + ",".join(row) + "\n")

    def metadata(self) -> dict:
        return {
            "params": list(self.params),
            "seed": int(self.seed),
            "iterations": self.config.iterations,
            "burn_in": self.config.burn_in,
            "thin": self.config.thin,
            "burn_in_rows": self.burn_in_rows,
            "accept_rate": self.accept_rate,
            "accept_rate_burn_in": self.accept_rate_burn_in,
            "final_step_sizes": self.final_step_sizes,
            "ratio_mode": self.config.ratio_mode,
            "n_proposal": "rounded_gaussian_walk",
            "notes": self.notes,
        }

    def write_metadata(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.metadata(), f, indent=1, sort_keys=True)
            f.write("\n")


def adapt_step_sizes(step_sizes: dict, window_accepts: dict, window: int) -> dict:
    """One adaptation step: scale each sd by the windowed acceptance rule."""
    out = dict(step_sizes)
    for name, accepted in window_accepts.items():
        if name not in out:
            continue
        rate = accepted / window
        if rate > 0.5:
            out[name] = out[name] * 1.1
        elif rate < 0.25:
            out[name] = out[name] * 0.9
    return out


class PmfCache:
    """Bounded memo of weight-free log-binomial-product vectors per (m1, m2, n)."""

    FLOAT_BUDGET = 4_000_000

    def __init__(self):
        self.entries: dict = {}
        self.floats = 0

    def get(self, key):
        return self.entries.get(key)

    def put(self, key, value):
        self.floats += value[0].size
        if self.floats > self.FLOAT_BUDGET:
            self.entries.clear()
            self.floats = value[0].size
        self.entries[key] = value


def _fnch_log_pmf_fast(
    m1: int, m2: int, n: int, log_w: float, y: int, cache: PmfCache | None = None
) -> float:
    """Univariate FNCH log-pmf without validation; -inf on any empty/invalid case.

    ``cache`` (optional) memoizes the weight-free log-binomial-product vector
    per (m1, m2, n); chains revisit the same sizes constantly, so this cuts
    the per-evaluation cost roughly in half on large supports.
    """
    if m1 < 0 or m2 < 0 or n < 0 or n > m1 + m2:
        return NEG_INF
    lo = max(0, n - m2)
    hi = min(n, m1)
    if y < lo or y > hi:
        return NEG_INF
    t = _log_factorials(m1 + m2)
    if log_w == 0.0:
        # unit odds collapse to the central hypergeometric, closed-form normalizer
        return float(
            t[m1]
            - t[y]
            - t[m1 - y]
            + t[m2]
            - t[n - y]
            - t[m2 - n + y]
            - (t[m1 + m2] - t[n] - t[m1 + m2 - n])
        )
    hit = None if cache is None else cache.get((m1, m2, n))
    if hit is None:
        ys = np.arange(lo, hi + 1, dtype=np.float64)
        iy = ys.astype(np.int64)
        base = (t[m1] - t[iy] - t[m1 - iy]) + (t[m2] - t[n - iy] - t[m2 - n + iy])
        if cache is not None:
            cache.put((m1, m2, n), (base, ys))
    else:
        base, ys = hit
    terms = base + ys * log_w
    peak = terms.max()
    return float(terms[y - lo] - peak - math.log(np.exp(terms - peak).sum()))


def _init_integer(spec: PriorSpec, lo: int | None, hi: int | None) -> int:
    v = int(round(priors_mod.prior_median(spec)))
    if lo is not None:
        v = max(v, lo)
    if hi is not None:
        v = min(v, hi)
    return v


def run_univariate_posterior(
    y_e: int,
    y_u: int,
    priors: dict,
    config: McmcConfig,
    rng: np.random.Generator | None = None,
) -> ChainDraws:
    """Sample the joint posterior of (M, N, log w) for a two-group cell.

    ``priors`` maps "M", "N", "logw" to PriorSpec instances.  Degenerate
    priors freeze their parameter.  Hard support constraints y_e < M and
    y_u < N - M are enforced on every state, with the N-dependent upper
    bound on M evaluated against the current N draw; proposals that violate
    them auto-reject.
    """
    y_e, y_u = int(y_e), int(y_u)
    if y_e < 0 or y_u < 0:
        raise ValueError(f"negative counts: y_e={y_e}, y_u={y_u}")
    n = y_e + y_u
    if n == 0:
        raise ValueError("cannot fit a cell with zero observed total")
    missing = [k for k in UNIVARIATE_PARAMS if k not in priors]
    if missing:
        raise ValueError(f"priors missing entries for {missing}")
    prior_m, prior_n, prior_w = priors["M"], priors["N"], priors["logw"]
    if rng is None:
        rng = np.random.default_rng(config.seed)

    pmf_cache = PmfCache()

    def log_target(m: int, nn: int, lw: float) -> float:
        if m < y_e + 1 or nn - m < y_u + 1:
            return NEG_INF
        lp = prior_m.log_density(m) + prior_n.log_density(nn) + prior_w.log_density(lw)
        if lp == NEG_INF:
            return NEG_INF
        return lp + _fnch_log_pmf_fast(m, nn - m, n, lw, y_e, pmf_cache)

    # Initialization: prior medians/means, M clipped into its hard bounds.
    nn = int(round(priors_mod.prior_mean(prior_n)))
    upper_m = nn - y_u - 1
    m = _init_integer(prior_m, y_e + 1, upper_m if upper_m >= y_e + 1 else None)
    lw = float(priors_mod.prior_mean(prior_w))
    if upper_m < y_e + 1:
        raise ValueError(
            f"initialization failed: M constraint set empty (y_e+1={y_e + 1} > "
            f"N-y_u-1={upper_m} at N={nn})"
        )
    current = log_target(m, nn, lw)
    if current == NEG_INF:
        raise ValueError(
            "initialization failed: zero posterior mass at start state "
            f"(M={m}, N={nn}, logw={lw}); check prior supports against the data"
        )

    update_flags = {
        "M": not isinstance(prior_m, Degenerate),
        "N": not isinstance(prior_n, Degenerate),
        "logw": not isinstance(prior_w, Degenerate),
    }
    defaults = {"M": 10.0, "N": 10.0, "logw": 0.5}
    sds = dict(defaults)
    if config.rw_sd:
        sds.update({k: float(v) for k, v in config.rw_sd.items()})

    rows = (config.iterations + config.thin - 1) // config.thin
    draws = np.empty((rows, 3))
    counts = {k: [0, 0] for k in UNIVARIATE_PARAMS}  # [burn-in accepts, post accepts]
    window_accepts = {k: 0 for k in UNIVARIATE_PARAMS}
    row = 0
    burn_rows = 0
    for it in range(config.iterations):
        in_burn = it < config.burn_in
        for name in UNIVARIATE_PARAMS:
            if not update_flags[name]:
                counts[name][0 if in_burn else 1] += 1
                window_accepts[name] += 1
                continue
            accepted = False
            if name == "logw":
                prop = lw + sds["logw"] * rng.standard_normal()
                cand = log_target(m, nn, prop)
                if cand - current >= 0 or rng.random() < math.exp(cand - current):
                    lw, current, accepted = prop, cand, True
            else:
                base = m if name == "M" else nn
                prop = int(round(base + sds[name] * rng.standard_normal()))
                if prop == base:
                    accepted = True
                else:
                    if name == "M":
                        cand = log_target(prop, nn, lw)
                    else:
                        cand = log_target(m, prop, lw)
                    if cand != NEG_INF and (
                        cand - current >= 0 or rng.random() < math.exp(cand - current)
                    ):
                        if name == "M":
                            m = prop
                        else:
                            nn = prop
                        current, accepted = cand, True
            if accepted:
                counts[name][0 if in_burn else 1] += 1
                window_accepts[name] += 1
        if config.adapt and in_burn and (it + 1) % config.adapt_window == 0:
            sds = adapt_step_sizes(sds, window_accepts, config.adapt_window)
            window_accepts = {k: 0 for k in UNIVARIATE_PARAMS}
        if it % config.thin == 0:
            draws[row] = (m, nn, lw)
            if in_burn:
                burn_rows += 1
            row += 1

    post_iters = config.iterations - config.burn_in
    rate_post = {k: counts[k][1] / post_iters if post_iters else 0.0 for k in UNIVARIATE_PARAMS}
    rate_burn = {
        k: counts[k][0] / config.burn_in if config.burn_in else 0.0 for k in UNIVARIATE_PARAMS
    }
    return ChainDraws(
        params=UNIVARIATE_PARAMS,
        draws=draws[:row],
        accept_rate=rate_post,
        accept_rate_burn_in=rate_burn,
        seed=config.seed,
        config=config,
        burn_in_rows=burn_rows,
        final_step_sizes={k: sds[k] for k in UNIVARIATE_PARAMS if update_flags[k]},
        notes={"y_e": y_e, "y_u": y_u, "n": n},
    )


def _anchor(c: int) -> int:
    # update group c against the first group, and the first group against the second
    return 0 if c != 0 else 1


def run_multivariate_posterior(
    y: Sequence[int],
    priors: Sequence[PriorSpec],
    log_w: Sequence[float],
    config: McmcConfig,
    proposals: Sequence[ProposalSpec] | None = None,
    rng: np.random.Generator | None = None,
) -> ChainDraws:
    """Sample the posterior of the group sizes M given counts y and known weights.

    Each sweep updates every group in ascending order (or uniformly at
    random with scan="random").  Proposals below y_c + 1 or outside the
    group's prior support auto-reject.  See the module docstring for the
    pair/exact acceptance-ratio modes.
    """
    y = [int(v) for v in y]
    C = len(y)
    if C < 2:
        raise ValueError(f"need at least 2 groups, got {C}")
    if len(priors) != C:
        raise ValueError(f"got {len(priors)} priors for {C} groups")
    lw = [float(v) for v in log_w]
    if len(lw) != C:
        raise ValueError(f"got {len(lw)} log-weights for {C} groups")
    if any(v < 0 for v in y):
        raise ValueError(f"negative count in y={y}")
    n = sum(y)
    if proposals is None:
        proposals = [RoundedGaussianWalk()] * C
    if len(proposals) != C:
        raise ValueError(f"got {len(proposals)} proposals for {C} groups")
    if rng is None:
        rng = np.random.default_rng(config.seed)

    mode = config.ratio_mode
    if mode == "auto":
        mode = "exact" if n <= config.exact_n_cap else "pair"

    state = []
    for c in range(C):
        state.append(_init_integer(priors[c], y[c] + 1, None))
    state = np.array(state, dtype=np.int64)

    def log_prior_c(c: int, v: int) -> float:
        return priors[c].log_density(v)

    def full_log_post(mvec: np.ndarray) -> float:
        lp = 0.0
        for c in range(C):
            pc = log_prior_c(c, int(mvec[c]))
            if pc == NEG_INF:
                return NEG_INF
            lp += pc + log_choose(int(mvec[c]), y[c]) + y[c] * lw[c]
        return lp - log_normalizer_conv(mvec.tolist(), n, lw)

    pmf_cache = PmfCache()

    def pair_loglik(c: int, v: int, anchor_v: int) -> float:
        a = _anchor(c)
        return _fnch_log_pmf_fast(v, anchor_v, y[c] + y[a], lw[c] - lw[a], y[c], pmf_cache)

    if mode == "exact":
        current_full = full_log_post(state)
        if current_full == NEG_INF:
            raise ValueError(
                f"initialization failed: zero posterior mass at start state M={state.tolist()}"
            )
    else:
        for c in range(C):
            if log_prior_c(c, int(state[c])) == NEG_INF:
                raise ValueError(
                    f"initialization failed: group {c} start {state[c]} has zero prior mass"
                )

    names = tuple(f"M{c + 1}" for c in range(C))
    sds = {names[c]: 10.0 for c in range(C)}
    if config.rw_sd:
        sds.update({k: float(v) for k, v in config.rw_sd.items() if k in sds})
    rows = (config.iterations + config.thin - 1) // config.thin
    draws = np.empty((rows, C))
    counts = {k: [0, 0] for k in names}
    window_accepts = {k: 0 for k in names}
    row = 0
    burn_rows = 0

    for it in range(config.iterations):
        in_burn = it < config.burn_in
        order = range(C) if config.scan == "systematic" else rng.integers(0, C, size=C)
        for c in order:
            c = int(c)
            name = names[c]
            cur = int(state[c])
            if isinstance(proposals[c], IndependentFromPrior):
                prop = int(priors[c].sample(rng))
                log_q_corr = log_prior_c(c, cur) - log_prior_c(c, prop)
            else:
                prop = int(round(cur + sds[name] * rng.standard_normal()))
                log_q_corr = 0.0
            accepted = False
            if prop == cur:
                accepted = True
            elif prop >= y[c] + 1 and log_prior_c(c, prop) > NEG_INF:
                if mode == "exact":
                    trial = state.copy()
                    trial[c] = prop
                    cand_full = full_log_post(trial)
                    log_r = cand_full - current_full + log_q_corr
                    if log_r >= 0 or rng.random() < math.exp(log_r):
                        state = trial
                        current_full = cand_full
                        accepted = True
                else:
                    a = _anchor(c)
                    anchor_v = int(state[a])
                    log_r = (
                        pair_loglik(c, prop, anchor_v)
                        - pair_loglik(c, cur, anchor_v)
                        + log_prior_c(c, prop)
                        - log_prior_c(c, cur)
                        + log_q_corr
                    )
                    if log_r >= 0 or rng.random() < math.exp(log_r):
                        state[c] = prop
                        accepted = True
            if accepted:
                counts[name][0 if in_burn else 1] += 1
                window_accepts[name] += 1
        if config.adapt and in_burn and (it + 1) % config.adapt_window == 0:
            sds = adapt_step_sizes(sds, window_accepts, config.adapt_window)
            window_accepts = {k: 0 for k in names}
        if it % config.thin == 0:
            draws[row] = state
            if in_burn:
                burn_rows += 1
            row += 1

    post_iters = config.iterations - config.burn_in
    rate_post = {k: counts[k][1] / post_iters if post_iters else 0.0 for k in names}
    rate_burn = {k: counts[k][0] / config.burn_in if config.burn_in else 0.0 for k in names}
    walk_sds = {
        names[c]: sds[names[c]]
        for c in range(C)
        if isinstance(proposals[c], RoundedGaussianWalk)
    }
    return ChainDraws(
        params=names,
        draws=draws[:row],
        accept_rate=rate_post,
        accept_rate_burn_in=rate_burn,
        seed=config.seed,
        config=replace(config, ratio_mode=mode),
        burn_in_rows=burn_rows,
        final_step_sizes=walk_sds,
        notes={"y": y, "n": n, "log_w": lw, "ratio_mode": mode},
    )
