"""Sweep runner: deterministic, resumable experiment grids.

Each cell of the grid is one (sweep point, seed) pair.  A cell is a pure
function of the config, so reruns and parallel runs produce byte-identical
``results.csv`` files: rows are rewritten in one fixed sort order with
shortest round-trip float formatting.  Wall-clock timings go to a separate
``timings.csv`` so the result file stays reproducible.
"""

from __future__ import annotations

import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from itertools import product
from typing import Optional, Sequence

import numpy as np

from ..errors import GenerationError, NumericalError, ParameterError
from ..estimators import (
    EstimatorReport,
    SolverOptions,
    fit_clustered,
    fit_local,
    fit_lowrank_bm,
    fit_lowrank_iht,
    fit_nuclear,
    fit_subspace_m1,
)
from ..worlds import PlantedWorld, gen_clustered_world, gen_lowrank_world, sample_datasets
from . import metrics as metrics_mod
from .config import ExperimentConfig, EstimatorSpec

__all__ = [
    "MetricRow",
    "run_experiment",
    "run_cell",
    "fit_scaling_exponent",
    "compare_baselines",
    "summarize",
    "load_results",
    "results_path",
    "build_world",
]

_OPTION_KEYS = ("max_iters", "tol_grad", "step_init", "restarts")


@dataclass(frozen=True)
class MetricRow:
    point: tuple            # ((axis, value), ...) in sorted axis order
    seed: int
    estimator: str
    metric: str
    value: Optional[float]
    std_error: Optional[float]
    status: str = "ok"

    def key(self):
        return (tuple(v for _, v in self.point), self.seed, self.estimator,
                self.metric)

    def axis(self, name):
        return dict(self.point)[name]


def results_path(config: ExperimentConfig) -> str:
    return os.path.join(config.out, "results.csv")


def _axes(config: ExperimentConfig) -> list[str]:
    return sorted(config.sweep.keys())


def sweep_points(config: ExperimentConfig) -> list[tuple]:
    axes = _axes(config)
    grids = [config.sweep[a] for a in axes]
    return [tuple(zip(axes, combo)) for combo in product(*grids)]


def build_world(config: ExperimentConfig, point: tuple, seed: int) -> PlantedWorld:
    ws = config.world
    pt = dict(point)
    n = int(pt.get("n", ws.n))
    eps = float(pt.get("eps", ws.eps))
    if ws.kind == "clustered":
        return gen_clustered_world(ws.d, n, ws.r, ws.B, ws.separation,
                                   ws.family, eps, seed)
    return gen_lowrank_world(ws.d, n, ws.r, ws.B, ws.family, eps, seed,
                             ws.head_style)


def _planted_kappa(world: PlantedWorld, r: int) -> float:
    sig = np.linalg.svd(world.W_star, compute_uv=False)
    if sig[r - 1] <= 0:
        raise NumericalError("planted matrix is rank deficient; pass kappa explicitly")
    return max(1.0, float(sig[0] / sig[r - 1]))


def _dispatch(spec: EstimatorSpec, data, world: PlantedWorld,
              seed: int) -> EstimatorReport:
    params = spec.param_dict()
    opt_kwargs = {k: params.pop(k) for k in list(params) if k in _OPTION_KEYS}
    opts = SolverOptions(seed=seed, **opt_kwargs)
    name = spec.name
    B = world.B
    if name == "local":
        report = fit_local(data, B, opts)
    elif name == "lowrank_bm":
        report = fit_lowrank_bm(data, int(params.pop("r", world.r)), B, opts)
    elif name == "lowrank_iht":
        report = fit_lowrank_iht(data, int(params.pop("r", world.r)), B, opts)
    elif name == "clustered":
        report = fit_clustered(data, int(params.pop("r", world.r)), B, opts)
    elif name == "nuclear":
        r = int(params.pop("r", world.r))
        kappa = params.pop("kappa", None)
        kappa = _planted_kappa(world, r) if kappa is None else float(kappa)
        s = params.pop("s", None)
        s = int(s) if s is not None else None
        report = fit_nuclear(data, r, kappa, B, s=s, opts=opts)
    elif name == "subspace_m1":
        r = int(params.pop("r", world.r))
        if "delta" not in params:
            raise ParameterError("estimator subspace_m1 needs a 'delta' parameter")
        delta = float(params.pop("delta"))
        res = fit_subspace_m1(data, r, B, delta, opts)
        report = EstimatorReport(
            estimator=name, W_hat=None,
            objective_trace=np.array([res.surrogate]), converged=res.admissible,
            wall_time=res.wall_time, U_hat=res.basis, options=opts,
            notes=[f"admissible={res.admissible}",
                   f"restarts_used={res.restarts_used}"],
        )
    else:  # pragma: no cover - config validation rejects earlier
        raise ParameterError(f"unknown estimator {name!r}")
    if params:
        raise ParameterError(
            f"unknown parameters {sorted(params)} for estimator {name}")
    return report


def _applicable(metric: str, estimator: str, world_kind: str) -> bool:
    if metric in ("param_error", "excess_risk"):
        return estimator != "subspace_m1"
    if metric in ("subspace_error_F", "subspace_error_op"):
        return estimator != "local"
    if metric == "cluster_accuracy":
        return estimator == "clustered" and world_kind == "clustered"
    return False


def _expected_keys(config: ExperimentConfig, point: tuple, seed: int) -> list[tuple]:
    keys = []
    for spec in config.estimators:
        for metric in config.metrics:
            if _applicable(metric, spec.name, config.world.kind):
                keys.append((tuple(v for _, v in point), seed, spec.name, metric))
    return keys


def _compute_metric(metric: str, report: EstimatorReport, world: PlantedWorld,
                    mc_samples: int, seed: int) -> tuple[float, Optional[float]]:
    if metric in ("param_error", "excess_risk"):
        # The nuclear path reports its truncated estimate; that is the
        # quantity the rate guarantees speak about.
        W = report.W_svd if report.W_svd is not None else report.W_hat
        if metric == "param_error":
            return metrics_mod.param_error(W, world), None
        value, se = metrics_mod.excess_risk(W, world, n_mc=mc_samples, seed=seed)
        return value, se
    if metric == "subspace_error_F":
        return metrics_mod.subspace_error_F(report.U_hat, world), None
    if metric == "subspace_error_op":
        return metrics_mod.subspace_error_op(report.U_hat, world), None
    if metric == "cluster_accuracy":
        return metrics_mod.cluster_accuracy(report.assignment, world), None
    raise ParameterError(f"unknown metric {metric!r}")  # pragma: no cover


def run_cell(config: ExperimentConfig, point: tuple,
             seed: int) -> tuple[list[MetricRow], list[tuple]]:
    """Fit every configured estimator at one sweep point and seed.

    Estimator failures are recorded as rows with status=failed; the cell
    still completes.
    """
    world = build_world(config, point, seed)
    m = int(dict(point)["m"])
    data = sample_datasets(world, m, seed)
    rows: list[MetricRow] = []
    timings: list[tuple] = []
    for spec in config.estimators:
        metric_list = [mt for mt in config.metrics
                       if _applicable(mt, spec.name, config.world.kind)]
        if not metric_list:
            continue
        try:
            report = _dispatch(spec, data, world, seed)
            timings.append((point, seed, spec.name, float(report.wall_time)))
            for metric in metric_list:
                value, se = _compute_metric(metric, report, world,
                                            config.mc_samples, seed)
                rows.append(MetricRow(point, seed, spec.name, metric,
                                      float(value), se, "ok"))
        except (ParameterError, NumericalError, GenerationError,
                np.linalg.LinAlgError, FloatingPointError):
            for metric in metric_list:
                rows.append(MetricRow(point, seed, spec.name, metric,
                                      None, None, "failed"))
    return rows, timings


def _fmt_axis(axis: str, value) -> str:
    return repr(float(value)) if axis == "eps" else str(int(value))


def _fmt_opt(value: Optional[float]) -> str:
    return "" if value is None else repr(float(value))


def _write_results(config: ExperimentConfig, rows: Sequence[MetricRow]) -> None:
    axes = _axes(config)
    path = results_path(config)
    lines = [",".join(axes + ["seed", "estimator", "metric", "value",
                              "std_error", "status"])]
    for row in sorted(rows, key=MetricRow.key):
        pt = dict(row.point)
        fields = [_fmt_axis(a, pt[a]) for a in axes]
        fields += [str(row.seed), row.estimator, row.metric,
                   _fmt_opt(row.value), _fmt_opt(row.std_error), row.status]
        lines.append(",".join(fields))
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def _write_timings(config: ExperimentConfig, timings: Sequence[tuple]) -> None:
    axes = _axes(config)
    path = os.path.join(config.out, "timings.csv")
    lines = [",".join(axes + ["seed", "estimator", "wall_time"])]
    for point, seed, name, wall in sorted(
            timings, key=lambda t: (tuple(v for _, v in t[0]), t[1], t[2])):
        pt = dict(point)
        fields = [_fmt_axis(a, pt[a]) for a in axes]
        fields += [str(seed), name, repr(float(wall))]
        lines.append(",".join(fields))
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def load_results(path, axes: Sequence[str]) -> list[MetricRow]:
    """Read a results.csv written by run_experiment back into rows."""
    if not os.path.exists(path):
        return []
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip().split(",")
        expected = list(axes) + ["seed", "estimator", "metric", "value",
                                 "std_error", "status"]
        if header != expected:
            raise ParameterError(
                f"{path}: header {header} does not match axes {list(axes)}")
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            pt = tuple(
                (a, float(tok) if a == "eps" else int(tok))
                for a, tok in zip(axes, parts[: len(axes)])
            )
            seed, estimator, metric, value, se, status = parts[len(axes):]
            rows.append(MetricRow(
                pt, int(seed), estimator, metric,
                float(value) if value else None,
                float(se) if se else None, status))
    return rows


def _load_timings(config: ExperimentConfig) -> list[tuple]:
    axes = _axes(config)
    path = os.path.join(config.out, "timings.csv")
    if not os.path.exists(path):
        return []
    out = []
    with open(path, "r", encoding="ascii") as fh:
        fh.readline()
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            pt = tuple(
                (a, float(tok) if a == "eps" else int(tok))
                for a, tok in zip(axes, parts[: len(axes)])
            )
            out.append((pt, int(parts[len(axes)]), parts[len(axes) + 1],
                        float(parts[len(axes) + 2])))
    return out


def _cell_worker(args):
    config, point, seed = args
    return point, seed, run_cell(config, point, seed)


def run_experiment(config: ExperimentConfig) -> list[MetricRow]:
    """Run the configured sweep, skipping cells already present on disk.

    Returns all rows (existing plus new) in file order and rewrites
    results.csv and timings.csv deterministically.
    """
    os.makedirs(config.out, exist_ok=True)
    axes = _axes(config)
    existing = {row.key(): row for row in load_results(results_path(config), axes)}
    timing_keys = set()
    timings = []
    for t in _load_timings(config):
        k = (tuple(v for _, v in t[0]), t[1], t[2])
        if k not in timing_keys:
            timing_keys.add(k)
            timings.append(t)
    cells = [(point, seed) for point in sweep_points(config)
             for seed in config.seeds]
    todo = [cell for cell in cells
            if any(k not in existing
                   for k in _expected_keys(config, cell[0], cell[1]))]

    def merge(point, seed, result):
        rows, cell_timings = result
        for row in rows:
            existing[row.key()] = row
        for t in cell_timings:
            k = (tuple(v for _, v in t[0]), t[1], t[2])
            if k in timing_keys:
                timings[:] = [old for old in timings
                              if (tuple(v for _, v in old[0]), old[1], old[2]) != k]
            timing_keys.add(k)
            timings.append(t)

    if config.workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = {pool.submit(_cell_worker, (config, point, seed)): (point, seed)
                       for point, seed in todo}
            for fut in as_completed(futures):
                point, seed, result = fut.result()
                merge(point, seed, result)
                _write_results(config, list(existing.values()))
                _write_timings(config, timings)
    else:
        for point, seed in todo:
            merge(point, seed, run_cell(config, point, seed))
            _write_results(config, list(existing.values()))
            _write_timings(config, timings)
    _write_results(config, list(existing.values()))
    _write_timings(config, timings)
    return sorted(existing.values(), key=MetricRow.key)


def fit_scaling_exponent(rows: Sequence[MetricRow], x_axis: str, metric: str,
                         estimator: Optional[str] = None) -> tuple[float, float]:
    """Least-squares slope of log(mean metric) against log(x), with R^2.

    Rows with status failed are excluded; non-positive metric values are
    excluded with a warning.  Needs at least three distinct x support points.
    """
    groups: dict[float, list[float]] = {}
    names = set()
    dropped = 0
    for row in rows:
        if row.status != "ok" or row.metric != metric or row.value is None:
            continue
        if estimator is not None and row.estimator != estimator:
            continue
        pt = dict(row.point)
        if x_axis not in pt:
            raise ParameterError(f"rows carry no sweep axis {x_axis!r}")
        names.add(row.estimator)
        if row.value <= 0.0:
            dropped += 1
            continue
        groups.setdefault(float(pt[x_axis]), []).append(row.value)
    if estimator is None and len(names) > 1:
        raise ParameterError(
            f"rows mix estimators {sorted(names)}; pass estimator=...")
    if dropped:
        warnings.warn(f"excluded {dropped} non-positive {metric} values from the "
                      "scaling fit", stacklevel=2)
    xs = sorted(groups)
    if len(xs) < 3:
        raise ParameterError(
            f"need >= 3 support points on axis {x_axis!r}, got {len(xs)}")
    logx = np.log([x for x in xs])
    logy = np.log([float(np.mean(groups[x])) for x in xs])
    slope, intercept = np.polyfit(logx, logy, 1)
    fitted = slope * logx + intercept
    ss_res = float(np.sum((logy - fitted) ** 2))
    ss_tot = float(np.sum((logy - logy.mean()) ** 2))
    r2 = 1.0 if ss_tot <= 1e-30 else 1.0 - ss_res / ss_tot
    return float(slope), float(r2)


def compare_baselines(config: ExperimentConfig) -> tuple[list[dict], dict]:
    """Paired per-seed comparison across the configured estimators.

    Returns (pairs, win_rates).  Each pair entry carries the per-estimator
    values for one (point, seed, metric) group; win_rates maps metric ->
    estimator -> fraction of groups where it strictly achieves the minimum.
    Groups where every value is below 1e-8 are ties and not counted.
    """
    if len(config.estimators) < 2:
        raise ParameterError("compare_baselines needs at least two estimators")
    rows = run_experiment(config)
    grouped: dict[tuple, dict[str, float]] = {}
    for row in rows:
        if row.status != "ok" or row.value is None:
            continue
        grouped.setdefault((row.point, row.seed, row.metric), {})[row.estimator] = row.value
    names = [spec.name for spec in config.estimators]
    pairs = []
    counts: dict[str, dict[str, int]] = {}
    totals: dict[str, int] = {}
    for (point, seed, metric), values in sorted(
            grouped.items(), key=lambda kv: (tuple(v for _, v in kv[0][0]),
                                             kv[0][1], kv[0][2])):
        entry = {"point": point, "seed": seed, "metric": metric,
                 "values": dict(values)}
        pairs.append(entry)
        present = [nm for nm in names if nm in values]
        if len(present) < 2:
            continue
        vals = [values[nm] for nm in present]
        if max(vals) <= 1e-8:
            continue
        best = min(vals)
        winners = [nm for nm in present if values[nm] == best]
        totals[metric] = totals.get(metric, 0) + 1
        if len(winners) == 1:
            counts.setdefault(metric, {}).setdefault(winners[0], 0)
            counts[metric][winners[0]] += 1
    win_rates = {
        metric: {nm: counts.get(metric, {}).get(nm, 0) / total
                 for nm in names}
        for metric, total in totals.items()
    }
    return pairs, win_rates


def summarize(rows: Sequence[MetricRow]) -> list[dict]:
    """Mean / standard error / count per (point, estimator, metric)."""
    grouped: dict[tuple, list[float]] = {}
    failed: dict[tuple, int] = {}
    for row in rows:
        key = (row.point, row.estimator, row.metric)
        if row.status == "ok" and row.value is not None:
            grouped.setdefault(key, []).append(row.value)
        else:
            failed[key] = failed.get(key, 0) + 1
    out = []
    for key in sorted(set(grouped) | set(failed),
                      key=lambda k: (tuple(v for _, v in k[0]), k[1], k[2])):
        vals = grouped.get(key, [])
        point, estimator, metric = key
        entry = {
            "point": point, "estimator": estimator, "metric": metric,
            "count": len(vals), "failed": failed.get(key, 0),
            "mean": float(np.mean(vals)) if vals else None,
            "std_error": (float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
                          if len(vals) > 1 else None),
        }
        out.append(entry)
    return out
