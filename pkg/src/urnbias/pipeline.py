"""Three-step case study on the bundled cohort tables, plus sensitivity runs.

Step 1 fits each (program, gender) cell of the 2011 reference survey with
unit odds (the capture model reduces to a hypergeometric), giving posteriors
for the employed population M and cohort size N anchored at the register
total.  Step 2 carries those posteriors forward as elicited priors and fits
the 2012 graduate survey with a free log odds ratio, producing the response
bias estimates.  Step 3 freezes the register totals for the later cohort
years, reuses the step-2 log-odds posterior as a prior, and turns the
posterior of M into a corrected employment-rate series per cell.

Sensitivity reruns step 3 with the log-odds prior recentred at a chosen
quantile of the step-2 posterior.

Per-cell fits are independent work items with seeds derived from the master
seed and the cell's stable index; results are identical whether cells run
serially or in a worker pool.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .casedata import (
    GENDERS,
    PROGRAMS,
    CohortDataError,
    cells_by_key,
    load_cohort_tables,
    survey_years,
)
from .mcmc import ChainDraws, McmcConfig, run_univariate_posterior
from .priors import (
    Degenerate,
    DiscreteUniform,
    ElicitedMoments,
    LogNormalOdds,
    TruncatedPoisson,
    elicit_from_moments,
)
from .summaries import PosteriorSummary, fmt_float, summarize


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 20124
    hpd_level: float = 0.95
    step1_iterations: int = 30000
    step1_burn_in: int = 6000
    step1_chains: int = 1
    step2_iterations: int = 20000
    step2_burn_in: int = 4000
    step2_chains: int = 4
    step3_iterations: int = 12000
    step3_burn_in: int = 3000
    step3_chains: int = 4
    fix_n: bool = False
    jobs: int = 1

    def __post_init__(self):
        if not (0 < self.hpd_level < 1):
            raise ValueError(f"hpd_level must lie in (0,1), got {self.hpd_level}")
        for s in (1, 2, 3):
            it = getattr(self, f"step{s}_iterations")
            bi = getattr(self, f"step{s}_burn_in")
            ch = getattr(self, f"step{s}_chains")
            if it <= 0 or not (0 <= bi < it) or ch < 1:
                raise ValueError(f"invalid step {s} chain settings: {it}/{bi}/{ch}")
        if self.jobs < 1:
            raise ValueError(f"jobs must be >= 1, got {self.jobs}")


@dataclass
class CellFit:
    program: str
    gender: str
    year: int
    data: dict
    post: dict[str, np.ndarray]
    summaries: dict[str, PosteriorSummary]
    diagnostics: dict
    chains: list[ChainDraws] = field(default_factory=list)
    elicited: dict = field(default_factory=dict)

    @property
    def cell(self) -> str:
        return f"{self.program}_{self.gender}"


@dataclass
class StepResult:
    step: str
    year: int | None
    cells: dict[tuple[str, str], CellFit]
    skipped: list[dict]
    config: PipelineConfig

    def cell(self, program: str, gender: str) -> CellFit:
        return self.cells[(program, gender)]


def _cell_index(program: str, gender: str) -> int:
    return PROGRAMS.index(program) * len(GENDERS) + GENDERS.index(gender)


def derive_seed(master: int, *key: int) -> int:
    """Stable per-work-item seed from the master seed and an integer key path."""
    ss = np.random.SeedSequence((int(master),) + tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


def _shape_diagnostics(x: np.ndarray) -> dict:
    mu = float(x.mean())
    s = float(x.std())
    if s == 0.0:
        return {"skewness": 0.0, "excess_kurtosis": 0.0}
    z = (x - mu) / s
    return {
        "skewness": float(np.mean(z**3)),
        "excess_kurtosis": float(np.mean(z**4) - 3.0),
    }


def _fit_cell(args: tuple) -> CellFit:
    (program, gender, year, y_e, y_u, priors, chain_configs, level, derived, extra) = args
    chains = [run_univariate_posterior(y_e, y_u, priors, cfg) for cfg in chain_configs]
    post = {
        name: np.concatenate([ch.post(name) for ch in chains])
        for name in chains[0].params
        if not isinstance(priors[name], Degenerate)
    }
    if derived == "w":
        post["w"] = np.exp(post["logw"])
    elif derived == "rate":
        post["rate"] = post["M"] / float(extra["register_total"])
    summaries = {name: summarize(v, level) for name, v in post.items()}
    diagnostics = {
        "accept_rate": [ch.accept_rate for ch in chains],
        "final_step_sizes": [ch.final_step_sizes for ch in chains],
        "chain_seeds": [ch.seed for ch in chains],
    }
    for name, v in post.items():
        diagnostics[name] = _shape_diagnostics(v)
    if derived == "w":
        diagnostics["p_w_gt_1"] = float(np.mean(post["w"] > 1.0))
    data = {"y_e": y_e, "y_u": y_u, **extra}
    return CellFit(program, gender, year, data, post, summaries, diagnostics, chains)


def _run_cells(work: list[tuple], jobs: int) -> list[CellFit]:
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_fit_cell, work))
    return [_fit_cell(w) for w in work]


def _chain_configs(iterations, burn_in, chains, master, step_no, cell_idx, year, salt=None):
    out = []
    for k in range(chains):
        key = (step_no, cell_idx, year, k) if salt is None else (step_no, cell_idx, year, k, salt)
        out.append(
            McmcConfig(iterations=iterations, burn_in=burn_in, seed=derive_seed(master, *key))
        )
    return out


def step1_istat(tables: dict, config: PipelineConfig) -> StepResult:
    """Reference-survey fit: posterior of (M, N) per cell with unit odds."""
    ans = cells_by_key(tables["ANS"])
    ist = cells_by_key(tables["Istat"])
    work, keys, skipped = [], [], []
    for program in PROGRAMS:
        for gender in GENDERS:
            ka = ("ANS", gender, program, 2011)
            ki = ("Istat", gender, program, 2011)
            if ka not in ans or ki not in ist:
                raise CohortDataError(f"cell {program}/{gender} missing from 2011 tables")
            na = ans[ka].total
            ye, yu = ist[ki].employed, ist[ki].unemployed
            a, b = ye + 1, na - yu - 1
            if a > b:
                skipped.append(
                    {
                        "cell": f"{program}_{gender}",
                        "reason": "bound inversion",
                        "a": a,
                        "b": b,
                    }
                )
                continue
            priors = {
                "M": DiscreteUniform(a, b),
                "N": TruncatedPoisson(float(na), ye + yu + 2),
                "logw": Degenerate(0.0),
            }
            cfgs = _chain_configs(
                config.step1_iterations,
                config.step1_burn_in,
                config.step1_chains,
                config.seed,
                1,
                _cell_index(program, gender),
                2011,
            )
            work.append(
                (
                    program,
                    gender,
                    2011,
                    ye,
                    yu,
                    priors,
                    cfgs,
                    config.hpd_level,
                    None,
                    {"register_total": na},
                )
            )
            keys.append((program, gender))
    fits = _run_cells(work, config.jobs)
    cells = {}
    for key, fit in zip(keys, fits):
        fit.elicited = {
            "M": ElicitedMoments(float(fit.post["M"].mean()), float(fit.post["M"].std(ddof=1))),
            "N": ElicitedMoments(float(fit.post["N"].mean()), float(fit.post["N"].std(ddof=1))),
        }
        cells[key] = fit
    return StepResult("step1", 2011, cells, skipped, config)


def _elicited_upper(moments: ElicitedMoments, lower: int) -> int:
    return max(lower + 1, int(round(moments.mean + 12.0 * moments.sd)))


def step2_almalaurea(step1: StepResult, tables: dict, config: PipelineConfig) -> StepResult:
    """Graduate-survey fit with elicited size priors and a free log odds ratio."""
    alma = cells_by_key(tables["Almalaurea"])
    work, keys, skipped = [], [], []
    for program in PROGRAMS:
        for gender in GENDERS:
            if (program, gender) not in step1.cells:
                raise CohortDataError(
                    f"cell {program}/{gender} has no step-1 result to elicit from"
                )
            kal = ("Almalaurea", gender, program, 2012)
            if kal not in alma:
                raise CohortDataError(f"cell {program}/{gender} missing from 2012 survey")
            ae, au = alma[kal].employed, alma[kal].unemployed
            el = step1.cells[(program, gender)].elicited
            m_lower = ae + 1
            n_lower = ae + au + 2
            priors = {
                "M": elicit_from_moments(el["M"], m_lower, _elicited_upper(el["M"], m_lower)),
                "N": (
                    Degenerate(float(round(el["N"].mean)))
                    if config.fix_n
                    else elicit_from_moments(el["N"], n_lower, _elicited_upper(el["N"], n_lower))
                ),
                "logw": LogNormalOdds(0.0, 1.0),
            }
            cfgs = _chain_configs(
                config.step2_iterations,
                config.step2_burn_in,
                config.step2_chains,
                config.seed,
                2,
                _cell_index(program, gender),
                2012,
            )
            work.append(
                (
                    program,
                    gender,
                    2012,
                    ae,
                    au,
                    priors,
                    cfgs,
                    config.hpd_level,
                    "w",
                    {"register_total": None},
                )
            )
            keys.append((program, gender))
    fits = _run_cells(work, config.jobs)
    cells = {}
    for key, fit in zip(keys, fits):
        lw = fit.post["logw"]
        fit.elicited = {
            "logw": ElicitedMoments(float(lw.mean()), float(lw.std(ddof=1))),
        }
        cells[key] = fit
    return StepResult("step2", 2012, cells, skipped, config)


def _logw_prior_baseline(fit: CellFit) -> LogNormalOdds:
    el = fit.elicited["logw"]
    return LogNormalOdds(el.mean, el.sd**2)


def _logw_prior_quantile(fit: CellFit, alpha: float) -> LogNormalOdds:
    lw = fit.post["logw"]
    center = float(np.quantile(lw, alpha))
    return LogNormalOdds(center, float(lw.var(ddof=1)))


def _timeseries_pass(
    step2: StepResult,
    tables: dict,
    config: PipelineConfig,
    years,
    alpha: float | None,
) -> list[StepResult]:
    alma = cells_by_key(tables["Almalaurea"])
    ans = cells_by_key(tables["ANS"])
    if years is None:
        years = survey_years(tables)
    salt = None if alpha is None else int(round(alpha * 10000))
    results = []
    for t in years:
        work, keys, skipped = [], [], []
        for program in PROGRAMS:
            for gender in GENDERS:
                fit2 = step2.cells.get((program, gender))
                if fit2 is None:
                    raise CohortDataError(
                        f"cell {program}/{gender} has no step-2 result to elicit from"
                    )
                kal = ("Almalaurea", gender, program, t)
                kan = ("ANS", gender, program, t - 1)
                if kal not in alma or kan not in ans:
                    skipped.append(
                        {
                            "cell": f"{program}_{gender}",
                            "year": t,
                            "reason": "missing survey or register row",
                        }
                    )
                    continue
                ae, au = alma[kal].employed, alma[kal].unemployed
                na = ans[kan].total
                a, b = ae + 1, na - au - 1
                if a > b:
                    skipped.append(
                        {
                            "cell": f"{program}_{gender}",
                            "year": t,
                            "reason": "bound inversion",
                            "a": a,
                            "b": b,
                        }
                    )
                    continue
                logw_prior = (
                    _logw_prior_baseline(fit2)
                    if alpha is None
                    else _logw_prior_quantile(fit2, alpha)
                )
                priors = {
                    "M": DiscreteUniform(a, b),
                    "N": Degenerate(float(na)),
                    "logw": logw_prior,
                }
                cfgs = _chain_configs(
                    config.step3_iterations,
                    config.step3_burn_in,
                    config.step3_chains,
                    config.seed,
                    3,
                    _cell_index(program, gender),
                    t,
                    salt,
                )
                work.append(
                    (
                        program,
                        gender,
                        t,
                        ae,
                        au,
                        priors,
                        cfgs,
                        config.hpd_level,
                        "rate",
                        {
                            "register_total": na,
                            "raw_rate": ae / (ae + au),
                            "logw_prior_mean": logw_prior.mu,
                            "logw_prior_sd": math.sqrt(logw_prior.tau2),
                        },
                    )
                )
                keys.append((program, gender))
        fits = _run_cells(work, config.jobs)
        cells = dict(zip(keys, fits))
        if not cells and not skipped:
            skipped.append({"year": t, "reason": "no data rows for year"})
        name = "step3" if alpha is None else f"sensitivity_{alpha:g}"
        results.append(StepResult(name, t, cells, skipped, config))
    return results


def step3_timeseries(
    step2: StepResult, tables: dict, config: PipelineConfig, years=None
) -> list[StepResult]:
    """Corrected employment-rate posteriors for the later survey years."""
    return _timeseries_pass(step2, tables, config, years, None)


def sensitivity(
    step2: StepResult, tables: dict, config: PipelineConfig, alpha: float, years=None
) -> list[StepResult]:
    """Step-3 rerun with the log-odds prior recentred at the alpha-quantile."""
    if not (0 < alpha < 1):
        raise ValueError(f"alpha must lie in (0,1), got {alpha}")
    return _timeseries_pass(step2, tables, config, years, alpha)


# ---------------------------------------------------------------------------
# output writers


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_cell_str(v) for v in row) + "\n")


def _cell_str(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return fmt_float(float(v))


def _draws_rows(fit: CellFit) -> tuple[list[str], list[list]]:
    names = list(fit.post)
    header = ["draw", "chain"] + names
    rows = []
    idx = 0
    n_chains = len(fit.chains) if fit.chains else 1
    per_chain = len(next(iter(fit.post.values()))) // n_chains
    for j in range(n_chains):
        for i in range(per_chain):
            k = j * per_chain + i
            rows.append([idx, j] + [fit.post[name][k] for name in names])
            idx += 1
    return header, rows


def write_step_result(result: StepResult, outdir) -> Path:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    summary_rows = []
    for key in sorted(result.cells):
        fit = result.cells[key]
        suffix = f"_{result.year}" if result.step != "step1" and result.year else ""
        header, rows = _draws_rows(fit)
        _write_csv(outdir / f"draws_{fit.cell}{suffix}.csv", header, rows)
        for name in sorted(fit.summaries):
            s = fit.summaries[name]
            summary_rows.append(
                [fit.cell, name, s.mean, s.sd, s.median, s.hpd_lo, s.hpd_hi]
            )
    _write_csv(
        outdir / "summary.csv",
        ["cell", "parameter", "mean", "sd", "median", "hpd_lo", "hpd_hi"],
        summary_rows,
    )
    if any("raw_rate" in fit.data for fit in result.cells.values()):
        rate_rows = []
        for key in sorted(result.cells):
            fit = result.cells[key]
            s = fit.summaries["rate"]
            rate_rows.append([fit.cell, fit.data["raw_rate"], s.mean, s.hpd_lo, s.hpd_hi])
        _write_csv(
            outdir / f"rates_{result.year}.csv",
            ["cell", "raw_rate", "post_mean", "hpd_lo", "hpd_hi"],
            rate_rows,
        )
    run = {
        "step": result.step,
        "year": result.year,
        "seed": result.config.seed,
        "version": __version__,
        "config": asdict(result.config),
        "skipped": result.skipped,
        "cells": [f"{k[0]}_{k[1]}" for k in sorted(result.cells)],
    }
    with open(outdir / "run.json", "w") as f:
        json.dump(run, f, indent=1, sort_keys=True)
        f.write("\n")
    return outdir


def read_step_result(step_dir) -> StepResult:
    """Rebuild a StepResult from a directory written by write_step_result.

    Summaries and diagnostics are recomputed from the stored draws, so a
    reloaded result feeds emit_plot_data exactly like the in-memory one.
    Chain objects and elicitation records are not persisted and come back
    empty.
    """
    step_dir = Path(step_dir)
    run_path = step_dir / "run.json"
    if not run_path.exists():
        raise FileNotFoundError(f"{run_path} not found; not a step output directory")
    with open(run_path) as f:
        run = json.load(f)
    config = PipelineConfig(**run["config"])
    year = run["year"]
    suffix = f"_{year}" if run["step"] != "step1" and year else ""
    raw_rates: dict[str, float] = {}
    rates_path = step_dir / f"rates_{year}.csv"
    if rates_path.exists():
        with open(rates_path, newline="") as f:
            for row in csv.DictReader(f):
                raw_rates[row["cell"]] = float(row["raw_rate"])
    cells: dict[tuple[str, str], CellFit] = {}
    for cell in run["cells"]:
        program, gender = cell.rsplit("_", 1)
        with open(step_dir / f"draws_{cell}{suffix}.csv", newline="") as f:
            reader = csv.reader(f)
            header = next(reader)
            cols = [[] for _ in header]
            for row in reader:
                for j, v in enumerate(row):
                    cols[j].append(float(v))
        post = {
            name: np.asarray(cols[j])
            for j, name in enumerate(header)
            if name not in ("draw", "chain")
        }
        summaries = {name: summarize(v, config.hpd_level) for name, v in post.items()}
        diagnostics = {}
        if "w" in post:
            diagnostics["p_w_gt_1"] = float(np.mean(post["w"] > 1.0))
        data = {}
        if cell in raw_rates:
            data["raw_rate"] = raw_rates[cell]
        cells[(program, gender)] = CellFit(
            program=program,
            gender=gender,
            year=year,
            data=data,
            post=post,
            summaries=summaries,
            diagnostics=diagnostics,
        )
    return StepResult(
        step=run["step"], year=year, cells=cells, skipped=run["skipped"], config=config
    )


PLOT_KINDS = ("size-posteriors", "odds-posteriors", "rate-timeseries", "sensitivity-overlay")


def emit_plot_data(results, kind: str, out_path) -> Path:
    """Write tidy (cell, year, series, value) rows for downstream plotting.

    ``results`` is a StepResult for size-/odds-posteriors, a list of
    StepResult for rate-timeseries, and a list of (label, results-list)
    pairs for sensitivity-overlay.
    """
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; expected one of {PLOT_KINDS}")
    rows = []
    if kind == "size-posteriors":
        for key in sorted(results.cells):
            fit = results.cells[key]
            m, n = fit.summaries["M"], fit.summaries["N"]
            for series, value in (
                ("m_mean", m.mean),
                ("m_hpd_lo", m.hpd_lo),
                ("m_hpd_hi", m.hpd_hi),
                ("n_mean", n.mean),
                ("m_share_of_n", m.mean / n.mean),
            ):
                rows.append([fit.cell, fit.year, series, value])
    elif kind == "odds-posteriors":
        for key in sorted(results.cells):
            fit = results.cells[key]
            w = fit.summaries["w"]
            for series, value in (
                ("w_mean", w.mean),
                ("w_sd", w.sd),
                ("w_median", w.median),
                ("w_hpd_lo", w.hpd_lo),
                ("w_hpd_hi", w.hpd_hi),
                ("p_w_gt_1", fit.diagnostics["p_w_gt_1"]),
            ):
                rows.append([fit.cell, fit.year, series, value])
    elif kind == "rate-timeseries":
        for result in results:
            for key in sorted(result.cells):
                fit = result.cells[key]
                s = fit.summaries["rate"]
                for series, value in (
                    ("raw", fit.data["raw_rate"]),
                    ("post_mean", s.mean),
                    ("hpd_lo", s.hpd_lo),
                    ("hpd_hi", s.hpd_hi),
                ):
                    rows.append([fit.cell, fit.year, series, value])
    else:
        for label, results_list in results:
            for result in results_list:
                for key in sorted(result.cells):
                    fit = result.cells[key]
                    s = fit.summaries["rate"]
                    for series, value in (
                        (f"{label}_post_mean", s.mean),
                        (f"{label}_hpd_lo", s.hpd_lo),
                        (f"{label}_hpd_hi", s.hpd_hi),
                    ):
                        rows.append([fit.cell, fit.year, series, value])
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(out_path, ["cell", "year", "series", "value"], rows)
    return out_path


def run_all(config: PipelineConfig, outdir, data_dir=None, years=None) -> dict:
    """Steps 1-3 end to end, writing one directory per step."""
    tables = load_cohort_tables(data_dir)
    outdir = Path(outdir)
    s1 = step1_istat(tables, config)
    write_step_result(s1, outdir / "step1")
    s2 = step2_almalaurea(s1, tables, config)
    write_step_result(s2, outdir / "step2")
    s3 = step3_timeseries(s2, tables, config, years)
    for result in s3:
        write_step_result(result, outdir / f"step3_{result.year}")
    emit_plot_data(s1, "size-posteriors", outdir / "plots" / "size_posteriors.csv")
    emit_plot_data(s2, "odds-posteriors", outdir / "plots" / "odds_posteriors.csv")
    emit_plot_data(s3, "rate-timeseries", outdir / "plots" / "rate_timeseries.csv")
    return {"step1": s1, "step2": s2, "step3": s3}
