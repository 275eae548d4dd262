"""Approximate Bayesian computation inside a Gibbs scan over group sizes.

Instead of evaluating the FNCH likelihood, each coordinate update draws a
candidate group size from its prior, simulates a capture count for that
group from the pair-conditional distribution against the anchor group, and
accepts the candidate when the simulated summary lands within epsilon of
the observed one.  The summary is the observed fraction y_c / n_pair of the
pair total and the distance is absolute difference, so epsilon = 0 keeps
exactly the candidates that reproduce the observed count (the comparison is
rho <= epsilon, hence zero tolerance still accepts exact matches).

Per-group tolerances can be supplied directly or calibrated as an empirical
quantile of prior-predictive distances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fnch import NEG_INF, sample_univariate
from .mcmc import ChainDraws, McmcConfig, _anchor, _init_integer
from .priors import PriorSpec


@dataclass(frozen=True)
class AbcConfig:
    iterations: int = 20000
    burn_in: int = 0
    thin: int = 1
    seed: int = 0
    epsilon: Sequence[float] | float | None = None
    calibration_draws: int = 10**4
    calibration_quantile: float = 0.02
    max_attempts_per_step: int = 10**6

    def __post_init__(self):
        if self.iterations <= 0:
            raise ValueError(f"iterations must be positive, got {self.iterations}")
        if not (0 <= self.burn_in < self.iterations):
            raise ValueError(
                f"burn_in must lie in [0, iterations), got {self.burn_in} vs {self.iterations}"
            )
        if self.thin < 1:
            raise ValueError(f"thin must be >= 1, got {self.thin}")
        if self.epsilon is not None:
            eps = self.epsilon if isinstance(self.epsilon, (int, float)) else list(self.epsilon)
            vals = [eps] if isinstance(eps, (int, float)) else eps
            for e in vals:
                if not (e >= 0 and math.isfinite(e)):
                    raise ValueError(f"epsilon must be finite and >= 0, got {e}")
        if not (0 < self.calibration_quantile <= 1):
            raise ValueError(
                f"calibration_quantile must lie in (0, 1], got {self.calibration_quantile}"
            )
        if self.calibration_draws < 1:
            raise ValueError(f"calibration_draws must be >= 1, got {self.calibration_draws}")
        if self.max_attempts_per_step < 1:
            raise ValueError(
                f"max_attempts_per_step must be >= 1, got {self.max_attempts_per_step}"
            )


class AbcAttemptsExceeded(RuntimeError):
    """Raised when one coordinate update burns through its attempt budget."""

    def __init__(self, group: int, attempts: int, partial: ChainDraws):
        super().__init__(
            f"group {group + 1} exhausted {attempts} proposal attempts without an "
            "acceptance; epsilon is likely too tight for the prior"
        )
        self.group = group
        self.attempts = attempts
        self.partial = partial


def summary_stat(y_c: int, n_pair: int) -> float:
    """Observed fraction of the pair total captured in the group."""
    if n_pair <= 0:
        raise ValueError(f"pair total must be positive, got {n_pair}")
    return y_c / n_pair


def distance(s_obs: float, s_sim: float) -> float:
    return abs(s_obs - s_sim)


def calibrate_epsilon(
    y: Sequence[int],
    priors: Sequence[PriorSpec],
    log_w: Sequence[float],
    anchor_sizes: Sequence[int],
    config: AbcConfig,
    rng: np.random.Generator | None = None,
) -> list[float]:
    """Per-group tolerances from prior-predictive distance quantiles.

    For each group, repeatedly draw a size from its prior, simulate the
    pair-conditional capture count against the fixed anchor size, and take
    the requested quantile of the resulting distances to the observed
    summary.
    """
    y = [int(v) for v in y]
    C = len(y)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    out = []
    for c in range(C):
        a = _anchor(c)
        n_pair = y[c] + y[a]
        s_obs = summary_stat(y[c], n_pair)
        dw = log_w[c] - log_w[a]
        dists = np.empty(config.calibration_draws)
        for i in range(config.calibration_draws):
            m_c = int(priors[c].sample(rng))
            x = sample_univariate(rng, max(m_c, y[c] + 1), int(anchor_sizes[a]), n_pair, dw)
            dists[i] = distance(s_obs, summary_stat(x, n_pair))
        out.append(float(np.quantile(dists, config.calibration_quantile)))
    return out


def run_gibbs_abc(
    y: Sequence[int],
    priors: Sequence[PriorSpec],
    log_w: Sequence[float],
    config: AbcConfig,
    rng: np.random.Generator | None = None,
) -> ChainDraws:
    """Likelihood-free Gibbs sampler for the group sizes M.

    Each sweep visits every group.  The update for group c repeats
    (draw M_c* from the prior; simulate x ~ pair-conditional capture model
    with sizes (M_c*, M_anchor) and pair total y_c + y_anchor; accept when
    the summary distance is <= epsilon_c) until an acceptance or the
    attempt budget runs out, in which case AbcAttemptsExceeded carries the
    draws collected so far.
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
    if rng is None:
        rng = np.random.default_rng(config.seed)

    if config.epsilon is None:
        state0 = [_init_integer(priors[c], y[c] + 1, None) for c in range(C)]
        eps = calibrate_epsilon(y, priors, lw, state0, config, rng)
    elif isinstance(config.epsilon, (int, float)):
        eps = [float(config.epsilon)] * C
    else:
        eps = [float(e) for e in config.epsilon]
        if len(eps) != C:
            raise ValueError(f"got {len(eps)} epsilons for {C} groups")

    state = np.array([_init_integer(priors[c], y[c] + 1, None) for c in range(C)], dtype=np.int64)
    for c in range(C):
        if priors[c].log_density(int(state[c])) == NEG_INF:
            raise ValueError(
                f"initialization failed: group {c} start {state[c]} has zero prior mass"
            )

    names = tuple(f"M{c + 1}" for c in range(C))
    rows = (config.iterations + config.thin - 1) // config.thin
    draws = np.empty((rows, C))
    attempts_total = {k: 0 for k in names}
    updates_done = {k: 0 for k in names}
    row = 0
    burn_rows = 0

    def partial_result(rows_done: int) -> ChainDraws:
        post_done = max(rows_done - burn_rows, 0)
        return ChainDraws(
            params=names,
            draws=draws[:rows_done],
            accept_rate={
                k: (updates_done[k] / attempts_total[k]) if attempts_total[k] else 0.0
                for k in names
            },
            accept_rate_burn_in={k: 0.0 for k in names},
            seed=config.seed,
            config=McmcConfig(
                iterations=config.iterations,
                burn_in=config.burn_in,
                thin=config.thin,
                seed=config.seed,
            ),
            burn_in_rows=min(burn_rows, rows_done),
            notes={
                "sampler": "gibbs_abc",
                "epsilon": eps,
                "attempts": dict(attempts_total),
                "complete_rows": rows_done,
                "post_rows": post_done,
            },
        )

    for it in range(config.iterations):
        for c in range(C):
            a = _anchor(c)
            n_pair = y[c] + y[a]
            s_obs = summary_stat(y[c], n_pair)
            dw = lw[c] - lw[a]
            anchor_v = int(state[a])
            attempts = 0
            while True:
                attempts += 1
                if attempts > config.max_attempts_per_step:
                    attempts_total[names[c]] += attempts - 1
                    raise AbcAttemptsExceeded(c, attempts - 1, partial_result(row))
                m_c = int(priors[c].sample(rng))
                if m_c < y[c] + 1:
                    continue
                x = sample_univariate(rng, m_c, anchor_v, n_pair, dw)
                if distance(s_obs, summary_stat(x, n_pair)) <= eps[c]:
                    state[c] = m_c
                    break
            attempts_total[names[c]] += attempts
            updates_done[names[c]] += 1
        if it % config.thin == 0:
            draws[row] = state
            if it < config.burn_in:
                burn_rows += 1
            row += 1

    result = partial_result(row)
    result.notes["complete"] = True
    return result
