"""Command-line entry point.

Every file-writing subcommand records its fully resolved configuration in a
``run.json`` (no timestamps, sorted keys) so a run can be reproduced from
its output directory alone.  Configuration comes from an optional JSON file
plus flags; flags win.  Errors go to stderr as single-line JSON; exit code
1 means the inputs were invalid, 2 means the run itself failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .casedata import CohortDataError, load_cohort_tables
from .fnch import FnchParams, log_pmf_multivariate_chain, log_pmf_univariate, sample_univariate
from .gibbs_abc import AbcConfig, run_gibbs_abc
from .mcmc import (
    IndependentFromPrior,
    McmcConfig,
    RoundedGaussianWalk,
    run_multivariate_posterior,
    run_univariate_posterior,
)
from .pipeline import (
    PLOT_KINDS,
    PipelineConfig,
    emit_plot_data,
    read_step_result,
    run_all,
    sensitivity,
    step1_istat,
    step2_almalaurea,
    step3_timeseries,
    write_step_result,
)
from .priors import prior_from_json
from .simstudy import SimStudyConfig, simulation_study, write_simstudy
from .summaries import summarize


class _Parser(argparse.ArgumentParser):
    """argparse that reports bad usage as exit 1 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise _CliError(message)


class _CliError(Exception):
    pass


def _json_error(message: str, kind: str) -> None:
    print(json.dumps({"error": kind, "message": str(message)}), file=sys.stderr)


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as f:
        obj = json.load(f)
    if not isinstance(obj, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    return obj


def _merge_flags(config: dict, args: argparse.Namespace, names: dict[str, str]) -> dict:
    """Overlay non-None flag values onto a config dict; flags win."""
    out = dict(config)
    for flag, key in names.items():
        v = getattr(args, flag, None)
        if v is not None:
            out[key] = v
    return out


def _dataclass_from(config_cls, obj: dict):
    known = {f.name for f in fields(config_cls)}
    unknown = sorted(set(obj) - known)
    if unknown:
        raise ValueError(f"unknown {config_cls.__name__} fields: {unknown}")
    return config_cls(**obj)


def _write_run_json(outdir: Path, payload: dict) -> None:
    payload = dict(payload)
    payload["version"] = __version__
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "run.json", "w") as f:
        json.dump(payload, f, indent=1, sort_keys=True)
        f.write("\n")


def _parse_floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v != ""]


def _parse_ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v != ""]


def _resolve_log_w(w: str | None, log_w: str | None, length: int | None = None):
    if (w is None) == (log_w is None):
        raise ValueError("exactly one of --w and --log-w is required")
    vals = _parse_floats(w) if w is not None else _parse_floats(log_w)
    if w is not None:
        if any(x <= 0 for x in vals):
            raise ValueError(f"odds must be positive, got {vals}")
        vals = [math.log(x) for x in vals]
    if length is not None and len(vals) == 1:
        vals = vals * length
    if length is not None and len(vals) != length:
        raise ValueError(f"need {length} odds values, got {len(vals)}")
    return vals


def _cmd_pmf(args) -> int:
    if args.m1 is not None:
        if args.m2 is None or args.y is None:
            raise ValueError("--m1 requires --m2 and a single --y")
        (lw,) = _resolve_log_w(args.w, args.log_w, 1)
        ys = _parse_ints(args.y)
        if len(ys) != 1:
            raise ValueError(f"univariate pmf takes one --y value, got {len(ys)}")
        logp = log_pmf_univariate(args.m1, args.m2, args.n, lw, ys[0])
    else:
        if args.m is None or args.y is None:
            raise ValueError("multivariate pmf needs --m and --y lists")
        m = _parse_ints(args.m)
        ys = _parse_ints(args.y)
        lw = _resolve_log_w(args.w, args.log_w, len(m))
        logp = log_pmf_multivariate_chain(FnchParams(m, args.n, lw), ys)
    print(logp if args.log else math.exp(logp))
    return 0


def _cmd_sample(args) -> int:
    (lw,) = _resolve_log_w(args.w, args.log_w, 1)
    rng = np.random.default_rng(args.seed)
    for _ in range(args.draws):
        print(sample_univariate(rng, args.m1, args.m2, args.n, lw))
    return 0


def _chain_outputs(chain, outdir: Path, run: dict) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    chain.to_csv(outdir / "draws.csv")
    rows = []
    for name in chain.params:
        s = summarize(chain.post(name))
        rows.append([name, s.mean, s.sd, s.median, s.hpd_lo, s.hpd_hi])
    with open(outdir / "summary.csv", "w", newline="") as f:
        f.write("parameter,mean,sd,median,hpd_lo,hpd_hi\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")
    run = dict(run)
    run["chain"] = chain.metadata()
    _write_run_json(outdir, run)


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    return f"{float(v):.17g}"


def _cmd_fit_mcmc(args) -> int:
    config = _load_config_file(args.config)
    config = _merge_flags(config, args, {"seed": "seed"})
    mcmc_obj = dict(config.get("mcmc", {}))
    for flag, key in (("iterations", "iterations"), ("burn_in", "burn_in"), ("thin", "thin")):
        v = getattr(args, flag)
        if v is not None:
            mcmc_obj[key] = v
    if "seed" in config:
        mcmc_obj["seed"] = config["seed"]
    mc = _dataclass_from(McmcConfig, mcmc_obj)
    model = config.get("model", "univariate")
    if model == "univariate":
        priors = {k: prior_from_json(v) for k, v in config["priors"].items()}
        chain = run_univariate_posterior(config["y_employed"], config["y_unemployed"], priors, mc)
    elif model == "multivariate":
        priors = [prior_from_json(v) for v in config["priors"]]
        proposals = None
        if "proposals" in config:
            proposals = [_proposal_from_json(p) for p in config["proposals"]]
        chain = run_multivariate_posterior(
            config["y"], priors, config["log_w"], mc, proposals=proposals
        )
    else:
        raise ValueError(f"model must be univariate or multivariate, got {model!r}")
    _chain_outputs(chain, Path(args.out), {"subcommand": "fit-mcmc", "config": _restate(config, mc)})
    return 0


def _restate(config: dict, resolved) -> dict:
    out = dict(config)
    out[type(resolved).__name__.replace("Config", "").lower()] = asdict(resolved)
    return out


def _proposal_from_json(obj: dict):
    kind = obj.get("kind")
    if kind == "prior":
        return IndependentFromPrior()
    if kind == "walk":
        return RoundedGaussianWalk(sd=float(obj.get("sd", 10.0)))
    raise ValueError(f"proposal kind must be prior or walk, got {kind!r}")


def _cmd_fit_abc(args) -> int:
    config = _load_config_file(args.config)
    config = _merge_flags(config, args, {"seed": "seed"})
    abc_obj = dict(config.get("abc", {}))
    if args.iterations is not None:
        abc_obj["iterations"] = args.iterations
    if args.burn_in is not None:
        abc_obj["burn_in"] = args.burn_in
    if "seed" in config:
        abc_obj["seed"] = config["seed"]
    if "epsilon" in abc_obj and isinstance(abc_obj["epsilon"], list):
        abc_obj["epsilon"] = tuple(abc_obj["epsilon"])
    ac = _dataclass_from(AbcConfig, abc_obj)
    priors = [prior_from_json(v) for v in config["priors"]]
    chain = run_gibbs_abc(config["y"], priors, config["log_w"], ac)
    _chain_outputs(chain, Path(args.out), {"subcommand": "fit-abc", "config": _restate(config, ac)})
    return 0


def _pipeline_config(args) -> PipelineConfig:
    config = _load_config_file(args.config)
    config = _merge_flags(config, args, {"seed": "seed", "jobs": "jobs"})
    return _dataclass_from(PipelineConfig, config)


def _cmd_pipeline(args) -> int:
    pc = _pipeline_config(args)
    outdir = Path(args.out)
    years = _parse_ints(args.years) if args.years else None
    if args.step == "all":
        run_all(pc, outdir, data_dir=args.data, years=years)
        return 0
    tables = load_cohort_tables(args.data)
    if args.step == "step1":
        write_step_result(step1_istat(tables, pc), outdir)
        return 0
    if args.upstream is None:
        raise ValueError(f"pipeline {args.step} needs --from (the upstream step directory)")
    upstream = read_step_result(args.upstream)
    if args.step == "step2":
        write_step_result(step2_almalaurea(upstream, tables, pc), outdir)
        return 0
    if args.step == "step3":
        for result in step3_timeseries(upstream, tables, pc, years):
            write_step_result(result, outdir / f"step3_{result.year}")
        return 0
    if args.alpha is None:
        raise ValueError("pipeline sensitivity needs --alpha (prior recentering quantile)")
    for result in sensitivity(upstream, tables, pc, args.alpha, years):
        write_step_result(result, outdir / f"sensitivity_{result.year}")
    return 0


def _cmd_simulate(args) -> int:
    config = _load_config_file(args.config)
    flags = {
        "replicates": "replicates",
        "groups": "groups",
        "n_true": "n_true",
        "m_upper": "m_upper",
        "seed": "seed",
        "jobs": "jobs",
        "mcmc_iterations": "mcmc_iterations",
        "mcmc_burn_in": "mcmc_burn_in",
        "abc_iterations": "abc_iterations",
        "abc_burn_in": "abc_burn_in",
    }
    config = _merge_flags(config, args, flags)
    sc = _dataclass_from(SimStudyConfig, config)
    report = simulation_study(sc)
    write_simstudy(report, Path(args.out))
    for param in report.params():
        print(
            f"{param}: mcmc={report.coverage('mcmc', param):.3f} "
            f"abc={report.coverage('abc', param):.3f}"
        )
    return 0


def _cmd_summarize(args) -> int:
    with open(args.draws, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        cols: list[list[float]] = [[] for _ in header]
        for row in reader:
            for j, v in enumerate(row):
                cols[j].append(float(v))
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "summary.csv", "w", newline="") as f:
        f.write("parameter,mean,sd,median,hpd_lo,hpd_hi\n")
        for j, name in enumerate(header):
            if name in ("draw", "chain"):
                continue
            s = summarize(np.asarray(cols[j]), args.level)
            f.write(
                ",".join([name] + [_fmt(v) for v in (s.mean, s.sd, s.median, s.hpd_lo, s.hpd_hi)])
                + "\n"
            )
    _write_run_json(
        outdir,
        {"subcommand": "summarize", "draws": str(args.draws), "level": args.level},
    )
    return 0


def _cmd_emit_plots(args) -> int:
    outdir = Path(args.out)
    if args.kind in ("size-posteriors", "odds-posteriors"):
        if len(args.steps) != 1:
            raise ValueError(f"{args.kind} takes exactly one step directory")
        results = read_step_result(args.steps[0])
    elif args.kind == "rate-timeseries":
        results = [read_step_result(d) for d in args.steps]
    else:
        results_list = [read_step_result(d) for d in args.steps]
        by_label: dict[str, list] = {}
        for d, r in zip(args.steps, results_list):
            by_label.setdefault(Path(d).name.rsplit("_", 1)[0], []).append(r)
        results = list(by_label.items())
    out_file = outdir / (args.kind.replace("-", "_") + ".csv")
    emit_plot_data(results, args.kind, out_file)
    _write_run_json(
        outdir,
        {"subcommand": "emit-plots", "kind": args.kind, "steps": [str(s) for s in args.steps]},
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="urnbias", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"urnbias {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("pmf", help="evaluate the FNCH pmf at a point")
    p.add_argument("--m1", type=int)
    p.add_argument("--m2", type=int)
    p.add_argument("--m", help="comma-separated group sizes (multivariate)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--w")
    p.add_argument("--log-w", dest="log_w")
    p.add_argument("--y", help="count (univariate) or comma-separated counts")
    p.add_argument("--log", action="store_true", help="print the log-pmf instead")
    p.set_defaults(func=_cmd_pmf)

    p = sub.add_parser("sample", help="draw from the univariate FNCH")
    p.add_argument("--m1", type=int, required=True)
    p.add_argument("--m2", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--w")
    p.add_argument("--log-w", dest="log_w")
    p.add_argument("--draws", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("fit-mcmc", help="sample a posterior with the exact-likelihood chain")
    p.add_argument("--config", required=True, help="JSON model/prior/chain description")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--thin", type=int)
    p.set_defaults(func=_cmd_fit_mcmc)

    p = sub.add_parser("fit-abc", help="sample group sizes with the likelihood-free chain")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.set_defaults(func=_cmd_fit_abc)

    p = sub.add_parser("pipeline", help="run the cohort case-study steps")
    p.add_argument("step", choices=["step1", "step2", "step3", "sensitivity", "all"])
    p.add_argument("--data", help="cohort table directory (default: bundled)")
    p.add_argument("--out", required=True)
    p.add_argument("--from", dest="upstream", help="upstream step output directory")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--years", help="comma-separated survey years")
    p.add_argument("--alpha", type=float, help="prior recentering quantile (sensitivity)")
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("simulate", help="run the coverage simulation study")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--replicates", type=int)
    p.add_argument("--groups", type=int)
    p.add_argument("--n-true", dest="n_true", type=int)
    p.add_argument("--m-upper", dest="m_upper", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--mcmc-iterations", dest="mcmc_iterations", type=int)
    p.add_argument("--mcmc-burn-in", dest="mcmc_burn_in", type=int)
    p.add_argument("--abc-iterations", dest="abc_iterations", type=int)
    p.add_argument("--abc-burn-in", dest="abc_burn_in", type=int)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("summarize", help="summarize a draws CSV into posterior statistics")
    p.add_argument("--draws", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--level", type=float, default=0.95)
    p.set_defaults(func=_cmd_summarize)

    p = sub.add_parser("emit-plots", help="write tidy plot series from step outputs")
    p.add_argument("--kind", choices=PLOT_KINDS, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("steps", nargs="+", help="step output directories")
    p.set_defaults(func=_cmd_emit_plots)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _CliError as e:
        _json_error(str(e), "usage")
        return 1
    try:
        return args.func(args)
    except (
        ValueError,
        KeyError,
        TypeError,
        CohortDataError,
        FileNotFoundError,
        json.JSONDecodeError,
        _CliError,
    ) as e:
        _json_error(str(e), type(e).__name__)
        return 1
    except Exception as e:  # noqa: BLE001 - boundary: anything else is a runtime failure
        _json_error(str(e), type(e).__name__)
        return 2


if __name__ == "__main__":
    sys.exit(main())
