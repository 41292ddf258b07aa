"""Command line interface for the benchmark pipeline.

Exit codes: 0 success, 1 bad input or generation failure, 2 numerical
failure, 3 one or more result checks failed.

Subcommands mirror the pipeline stages: gen-world, sample, fit, eval,
sweep, plot, report.
"""

from __future__ import annotations

import argparse
import glob
import os
import sys

from ..errors import GenerationError, NumericalError, ParameterError
from ..tasks import load_dataset, save_dataset
from ..worlds import diagnostics, load_world, sample_datasets, save_world
from .config import ESTIMATOR_NAMES, METRIC_NAMES, EstimatorSpec, load_config
from . import runner as runner_mod
from .runner import (
    _dispatch,
    build_world,
    load_results,
    run_experiment,
    results_path,
)
from .report import evaluate_checks, write_summary

__all__ = ["main"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_CHECK_FAILED = 3


class _Parser(argparse.ArgumentParser):
    """argparse parser that reports usage problems via ParameterError.

    The default implementation exits with status 2, which this CLI
    reserves for numerical failures.
    """

    def error(self, message):
        raise ParameterError(message)


def _split_csv(text):
    return [tok for tok in text.split(",") if tok] if text else None


def _cmd_gen_world(args) -> int:
    config = load_config(args.config)
    point = tuple((a, vals[0]) for a, vals in sorted(config.sweep.items()))
    world = build_world(config, point, args.seed)
    save_world(args.out, world)
    diag = diagnostics(world)
    print(f"wrote world to {args.out} "
          f"(d={world.d} n={world.n} r={world.r} kind={world.kind})")
    print(f"nu2={diag.nu2!r} lam={diag.lam!r} condition={diag.condition!r}")
    return EXIT_OK


def _cmd_sample(args) -> int:
    world = load_world(args.world)
    data = sample_datasets(world, args.m, args.seed)
    os.makedirs(args.out, exist_ok=True)
    for i, ds in enumerate(data):
        save_dataset(os.path.join(args.out, f"task_{i:05d}.csv"), ds, i)
    print(f"wrote {len(data)} task files (m={args.m}) to {args.out}")
    return EXIT_OK


def _load_task_dir(dirpath):
    paths = sorted(glob.glob(os.path.join(dirpath, "task_*.csv")))
    if not paths:
        raise ParameterError(f"no task_*.csv files under {dirpath}")
    pairs = [load_dataset(p) for p in paths]
    pairs.sort(key=lambda t: t[0])
    return [ds for _, ds in pairs]


def _parse_params(items):
    params = {}
    for item in items or []:
        if "=" not in item:
            raise ParameterError(f"--param expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        try:
            value = int(raw)
        except ValueError:
            try:
                value = float(raw)
            except ValueError:
                raise ParameterError(f"--param {key}: non-numeric value {raw!r}")
        params[key] = value
    return params


def _cmd_fit(args) -> int:
    if args.estimator not in ESTIMATOR_NAMES:
        raise ParameterError(f"unknown estimator {args.estimator!r}; "
                             f"choose from {ESTIMATOR_NAMES}")
    world = load_world(args.world)
    data = _load_task_dir(args.data)
    spec = EstimatorSpec.make(args.estimator, _parse_params(args.param))
    report = _dispatch(spec, data, world, args.seed)
    from ..estimators import save_report

    save_report(args.out, report)
    trace = report.objective_trace
    final = trace[-1] if len(trace) else float("nan")
    print(f"fit {args.estimator}: converged={report.converged} "
          f"iters={max(len(trace) - 1, 0)} objective={final!r} "
          f"wall_time={report.wall_time:.3f}s")
    return EXIT_OK


def _cmd_eval(args) -> int:
    from ..estimators import load_report

    report = load_report(args.report)
    world = load_world(args.world)
    names = _split_csv(args.metrics) or list(METRIC_NAMES)
    for name in names:
        if name not in METRIC_NAMES:
            raise ParameterError(f"unknown metric {name!r}; "
                                 f"choose from {METRIC_NAMES}")
    lines = ["metric,value,std_error"]
    for name in names:
        if not runner_mod._applicable(name, report.estimator, world.kind):
            continue
        value, se = runner_mod._compute_metric(name, report, world,
                                               args.mc_samples, args.seed)
        lines.append(f"{name},{value!r},{'' if se is None else repr(se)}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="ascii") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK


def _apply_overrides(config, args):
    changes = {}
    if getattr(args, "out", None):
        changes["out"] = args.out
    if getattr(args, "workers", None):
        changes["workers"] = args.workers
    if changes:
        import dataclasses

        config = dataclasses.replace(config, **changes)
    return config


def _cmd_sweep(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    rows = run_experiment(config)
    n_ok = sum(1 for r in rows if r.status == "ok")
    n_fail = len(rows) - n_ok
    print(f"sweep complete: {n_ok} rows ok, {n_fail} failed "
          f"-> {results_path(config)}")
    return EXIT_OK


def _cmd_plot(args) -> int:
    from .plots import emit_plots

    config = load_config(args.config)
    path = args.results or results_path(config)
    rows = load_results(path, sorted(config.sweep.keys()))
    if not rows:
        raise ParameterError(f"no result rows in {path}")
    axes = sorted(config.sweep.keys())
    x_axis = args.x or (axes[0] if len(axes) == 1 else None)
    if x_axis is None:
        raise ParameterError(f"results carry axes {axes}; pass --x")
    out_dir = args.out or os.path.join(config.out, "plots")
    written = emit_plots(rows, out_dir, x_axis,
                         metrics=_split_csv(args.metrics),
                         estimators=_split_csv(args.estimators))
    for p in written:
        print(f"wrote {p}")
    return EXIT_OK


def _cmd_report(args) -> int:
    config = load_config(args.config)
    path = args.results or results_path(config)
    rows = load_results(path, sorted(config.sweep.keys()))
    if not rows:
        raise ParameterError(f"no result rows in {path}")
    out_dir = args.out or config.out
    summary_path = write_summary(rows, config, out_dir)
    print(f"wrote {summary_path}")
    axes = sorted(config.sweep.keys())
    present = sorted({r.metric for r in rows
                      if r.status == "ok" and r.value is not None})
    if len(axes) == 1 and present:
        from .plots import emit_plots

        for p in emit_plots(rows, out_dir, axes[0], metrics=present):
            print(f"wrote {p}")
    elif len(axes) > 1:
        print(f"skipping figures: results carry axes {axes}, "
              "use the plot command with --x")
    if not args.check:
        return EXIT_OK
    if not config.checks:
        print("no checks configured")
        return EXIT_OK
    outcomes = evaluate_checks(rows, config.checks)
    for outcome in outcomes:
        print(outcome.line())
    return EXIT_OK if all(o.passed for o in outcomes) else EXIT_CHECK_FAILED


def _build_parser() -> _Parser:
    parser = _Parser(prog="structmtl",
                     description="benchmark structured multi-task estimators")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-world", help="generate and save a planted world")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gen_world)

    p = sub.add_parser("sample", help="sample per-task datasets from a world")
    p.add_argument("--world", required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("fit", help="fit one estimator on saved datasets")
    p.add_argument("--estimator", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--world", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--param", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("eval", help="evaluate a saved report against a world")
    p.add_argument("--report", required=True)
    p.add_argument("--world", required=True)
    p.add_argument("--metrics", default="")
    p.add_argument("--mc-samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="run a config's full experiment grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="")
    p.add_argument("--workers", type=int, default=0)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("plot", help="render SVG figures from results.csv")
    p.add_argument("--config", required=True)
    p.add_argument("--results", default="")
    p.add_argument("--out", default="")
    p.add_argument("--x", default="")
    p.add_argument("--metrics", default="")
    p.add_argument("--estimators", default="")
    p.set_defaults(func=_cmd_plot)

    p = sub.add_parser("report",
                       help="write summary.csv, render figures, run checks")
    p.add_argument("--config", required=True)
    p.add_argument("--results", default="")
    p.add_argument("--out", default="")
    p.add_argument("--check", action="store_true")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (ParameterError, GenerationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
