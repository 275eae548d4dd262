"""Frequentist coverage study comparing the exact-likelihood and ABC samplers.

Each replicate draws a population split from a Dirichlet, rounds it to
integer group sizes that sum to the true total, draws per-group capture
probabilities from a Beta, and samples observed counts as independent
binomials.  Both samplers then run with the true weights held fixed and
the study records whether each group's 95% HPD interval (and the one for
the implied total) covers the truth.

The first group's prior is a Poisson centred at its true size, proposed by
independence draws, which anchors the scale that the odds ratios alone
cannot fix; the remaining groups get flat priors up to a common ceiling.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .gibbs_abc import AbcConfig, run_gibbs_abc
from .mcmc import (
    IndependentFromPrior,
    McmcConfig,
    RoundedGaussianWalk,
    run_multivariate_posterior,
)
from .priors import DiscreteUniform, TruncatedPoisson
from .summaries import fmt_float, summarize


@dataclass(frozen=True)
class SimStudyConfig:
    n_true: int = 10**4
    groups: int = 5
    replicates: int = 20
    dirichlet_alpha: float = 1.0
    beta_params: tuple[float, float] = (1.0, 1.0)
    m_upper: int = 2 * 10**4
    seed: int = 0
    mcmc_iterations: int = 20000
    mcmc_burn_in: int = 5000
    abc_iterations: int = 2000
    abc_burn_in: int = 500
    calibration_draws: int = 10**4
    hpd_level: float = 0.95
    jobs: int = 1

    def __post_init__(self):
        if self.n_true < 1 or self.groups < 2 or self.replicates < 1:
            raise ValueError(
                f"need positive sizes: n_true={self.n_true}, groups={self.groups}, "
                f"replicates={self.replicates}"
            )
        if self.dirichlet_alpha <= 0:
            raise ValueError(f"dirichlet_alpha must be positive, got {self.dirichlet_alpha}")
        if any(b <= 0 for b in self.beta_params):
            raise ValueError(f"beta_params must be positive, got {self.beta_params}")
        if self.m_upper < self.n_true // self.groups:
            raise ValueError(f"m_upper {self.m_upper} too small for n_true {self.n_true}")
        if not (0 < self.hpd_level < 1):
            raise ValueError(f"hpd_level must lie in (0,1), got {self.hpd_level}")
        if self.jobs < 1:
            raise ValueError(f"jobs must be >= 1, got {self.jobs}")


def largest_remainder_round(total: int, shares: np.ndarray) -> np.ndarray:
    """Integer sizes summing exactly to total, proportional to shares."""
    raw = shares * total
    base = np.floor(raw).astype(np.int64)
    short = total - int(base.sum())
    if short > 0:
        order = np.argsort(-(raw - base), kind="stable")
        base[order[:short]] += 1
    return base


@dataclass
class ReplicateResult:
    replicate: int
    m_true: list[int]
    zeta: list[float]
    y: list[int]
    redraws: int
    mcmc_mean: dict[str, float]
    abc_mean: dict[str, float]
    mcmc_cover: dict[str, bool]
    abc_cover: dict[str, bool]


@dataclass
class SimStudyReport:
    config: SimStudyConfig
    replicates: list[ReplicateResult]
    notes: list[str] = field(default_factory=list)

    def coverage(self, method: str, param: str) -> float:
        hits = [getattr(r, f"{method}_cover")[param] for r in self.replicates]
        return sum(hits) / len(hits)

    def params(self) -> list[str]:
        return [f"M{c + 1}" for c in range(self.config.groups)] + ["N"]


def _draw_truth(rng: np.random.Generator, config: SimStudyConfig):
    alpha = np.full(config.groups, config.dirichlet_alpha)
    p_star = rng.dirichlet(alpha)
    m_star = largest_remainder_round(config.n_true, p_star)
    zeta = rng.beta(config.beta_params[0], config.beta_params[1], size=config.groups)
    y = rng.binomial(m_star, zeta)
    return m_star, zeta, y


def _truth_ok(m_star, zeta, y, config) -> bool:
    if np.any(m_star < 1):
        return False
    if np.any((zeta <= 0.0) | (zeta >= 1.0)):
        return False
    if y.sum() < 2 or np.all(y == 0):
        return False
    if np.any(y + 1 > config.m_upper):
        return False
    return True


def run_replicate(config: SimStudyConfig, replicate: int) -> tuple[ReplicateResult, list[str]]:
    notes = []
    m_star = zeta = y = None
    for attempt in range(100):
        rng = np.random.default_rng(np.random.SeedSequence((config.seed, replicate, attempt)))
        m_star, zeta, y = _draw_truth(rng, config)
        if _truth_ok(m_star, zeta, y, config):
            if attempt:
                notes.append(f"replicate {replicate}: redrawn {attempt} time(s)")
            break
    else:
        raise RuntimeError(f"replicate {replicate}: no viable truth draw in 100 attempts")

    log_w = np.log(zeta / (1.0 - zeta)).tolist()
    priors = [TruncatedPoisson(float(m_star[0]), int(y[0]) + 1)]
    proposals = [IndependentFromPrior()]
    for c in range(1, config.groups):
        priors.append(DiscreteUniform(int(y[c]) + 1, config.m_upper))
        proposals.append(RoundedGaussianWalk(50.0))

    mcmc_cfg = McmcConfig(
        iterations=config.mcmc_iterations,
        burn_in=config.mcmc_burn_in,
        seed=int(
            np.random.SeedSequence((config.seed, replicate, 1001)).generate_state(1, np.uint64)[0]
        ),
    )
    chain = run_multivariate_posterior(y.tolist(), priors, log_w, mcmc_cfg, proposals)

    abc_cfg = AbcConfig(
        iterations=config.abc_iterations,
        burn_in=config.abc_burn_in,
        seed=int(
            np.random.SeedSequence((config.seed, replicate, 2002)).generate_state(1, np.uint64)[0]
        ),
        calibration_draws=config.calibration_draws,
        calibration_quantile=0.02,
    )
    abc_chain = run_gibbs_abc(y.tolist(), priors, log_w, abc_cfg)

    truth = {f"M{c + 1}": int(m_star[c]) for c in range(config.groups)}
    truth["N"] = int(m_star.sum())
    result = {}
    for method, ch in (("mcmc", chain), ("abc", abc_chain)):
        draws = {name: ch.post(name) for name in ch.params}
        draws["N"] = sum(draws[name] for name in ch.params)
        means, cover = {}, {}
        for name, v in draws.items():
            s = summarize(v, config.hpd_level)
            means[name] = s.mean
            cover[name] = bool(s.hpd_lo <= truth[name] <= s.hpd_hi)
        result[method] = (means, cover)
    return (
        ReplicateResult(
            replicate,
            m_star.tolist(),
            zeta.tolist(),
            y.tolist(),
            attempt,
            result["mcmc"][0],
            result["abc"][0],
            result["mcmc"][1],
            result["abc"][1],
        ),
        notes,
    )


def _replicate_worker(args) -> tuple[ReplicateResult, list[str]]:
    return run_replicate(*args)


def simulation_study(config: SimStudyConfig) -> SimStudyReport:
    work = [(config, r) for r in range(config.replicates)]
    if config.jobs > 1 and config.replicates > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as ex:
            results = list(ex.map(_replicate_worker, work))
    else:
        results = [_replicate_worker(w) for w in work]
    report = SimStudyReport(config, [r for r, _ in results])
    for _, notes in results:
        report.notes.extend(notes)
    return report


def write_simstudy(report: SimStudyReport, outdir) -> Path:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "coverage.csv", "w", newline="") as f:
        f.write("method,parameter,coverage,replicates\n")
        for method in ("mcmc", "abc"):
            for param in report.params():
                f.write(
                    f"{method},{param},{fmt_float(report.coverage(method, param))},"
                    f"{len(report.replicates)}\n"
                )
    with open(outdir / "replicate_means.csv", "w", newline="") as f:
        f.write("replicate,method,parameter,post_mean,truth\n")
        for r in report.replicates:
            truth = {f"M{c + 1}": r.m_true[c] for c in range(len(r.m_true))}
            truth["N"] = sum(r.m_true)
            for method in ("mcmc", "abc"):
                means = getattr(r, f"{method}_mean")
                for param in report.params():
                    f.write(
                        f"{r.replicate},{method},{param},{fmt_float(means[param])},"
                        f"{truth[param]}\n"
                    )
    run = {
        "config": asdict(report.config),
        "version": __version__,
        "notes": report.notes,
    }
    with open(outdir / "run.json", "w") as f:
        json.dump(run, f, indent=1, sort_keys=True)
        f.write("\n")
    return outdir
