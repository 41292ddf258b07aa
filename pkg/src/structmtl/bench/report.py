"""Report stage: summary tables and declarative result checks.

Checks let a config assert properties of a finished sweep (scaling slopes,
value thresholds, paired ratios against a baseline, ratios between two
support points).  Each check evaluates to pass or fail with a one-line
explanation; the CLI maps any failure to exit code 3.
"""

from __future__ import annotations

import os
from typing import Optional, Sequence

from ..errors import ParameterError
from .config import CheckSpec, ExperimentConfig
from .runner import MetricRow, fit_scaling_exponent, summarize

__all__ = ["CheckOutcome", "evaluate_checks", "write_summary"]

_TIE_FLOOR = 1e-8


class CheckOutcome:
    def __init__(self, description: str, passed: bool, detail: str):
        self.description = description
        self.passed = passed
        self.detail = detail

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.description}: {self.detail}"


def _filter(rows, metric, estimator):
    out = [r for r in rows if r.status == "ok" and r.metric == metric
           and r.value is not None
           and (estimator is None or r.estimator == estimator)]
    return out


def _check_slope_range(rows, spec) -> CheckOutcome:
    p = spec.param_dict()
    slope, r2 = fit_scaling_exponent(rows, p["x"], p["metric"],
                                     estimator=p.get("estimator"))
    lo, hi = float(p["min"]), float(p["max"])
    ok = lo <= slope <= hi
    if ok and "min_r2" in p:
        ok = r2 >= float(p["min_r2"])
    desc = (f"slope of {p['metric']} vs {p['x']}"
            + (f" for {p['estimator']}" if p.get("estimator") else ""))
    return CheckOutcome(desc, ok,
                        f"slope={slope:.4f} r2={r2:.4f} expected [{lo}, {hi}]")


def _check_threshold(rows, spec) -> CheckOutcome:
    p = spec.param_dict()
    sel = _filter(rows, p["metric"], p.get("estimator"))
    if not sel:
        return CheckOutcome(f"threshold on {p['metric']}", False,
                            "no matching rows")
    frac_needed = float(p.get("fraction", 1.0))
    if "max" in p:
        bound = float(p["max"])
        hits = sum(1 for r in sel if r.value <= bound)
        rel = "<="
    elif "min" in p:
        bound = float(p["min"])
        hits = sum(1 for r in sel if r.value >= bound)
        rel = ">="
    else:
        raise ParameterError("threshold check needs 'max' or 'min'")
    frac = hits / len(sel)
    desc = (f"{p['metric']} {rel} {bound}"
            + (f" for {p['estimator']}" if p.get("estimator") else ""))
    return CheckOutcome(desc, frac >= frac_needed,
                        f"{hits}/{len(sel)} rows ({frac:.3f} vs {frac_needed})")


def _check_pair_ratio(rows, spec) -> CheckOutcome:
    p = spec.param_dict()
    est, base = p["estimator"], p["baseline"]
    grouped: dict[tuple, dict[str, float]] = {}
    for r in rows:
        if r.status != "ok" or r.metric != p["metric"] or r.value is None:
            continue
        if r.estimator in (est, base):
            grouped.setdefault((r.point, r.seed), {})[r.estimator] = r.value
    hits = total = 0
    for values in grouped.values():
        if est not in values or base not in values:
            continue
        a, b = values[est], values[base]
        if max(a, b) <= _TIE_FLOOR:
            continue
        total += 1
        ok = True
        if "max_ratio" in p:
            ok = ok and a <= float(p["max_ratio"]) * b
        if "min_ratio" in p:
            ok = ok and a >= float(p["min_ratio"]) * b
        hits += ok
    frac_needed = float(p.get("fraction", 1.0))
    desc = f"paired {p['metric']}: {est} vs {base}"
    if total == 0:
        return CheckOutcome(desc, False, "no comparable pairs")
    frac = hits / total
    return CheckOutcome(desc, frac >= frac_needed,
                        f"{hits}/{total} pairs ({frac:.3f} vs {frac_needed})")


def _check_point_ratio_range(rows, spec) -> CheckOutcome:
    p = spec.param_dict()
    sel = _filter(rows, p["metric"], p.get("estimator"))
    x_axis = p["x"]
    x_num, x_den = float(p["x_num"]), float(p["x_den"])
    num = [r.value for r in sel if float(dict(r.point)[x_axis]) == x_num]
    den = [r.value for r in sel if float(dict(r.point)[x_axis]) == x_den]
    desc = (f"mean {p['metric']} ratio at {x_axis}={p['x_num']} over "
            f"{x_axis}={p['x_den']}")
    if not num or not den:
        return CheckOutcome(desc, False, "missing support point rows")
    ratio = (sum(num) / len(num)) / (sum(den) / len(den))
    lo, hi = float(p["min"]), float(p["max"])
    return CheckOutcome(desc, lo <= ratio <= hi,
                        f"ratio={ratio:.4f} expected [{lo}, {hi}]")


_CHECKS = {
    "slope_range": _check_slope_range,
    "threshold": _check_threshold,
    "pair_ratio": _check_pair_ratio,
    "point_ratio_range": _check_point_ratio_range,
}


def evaluate_checks(rows: Sequence[MetricRow],
                    checks: Sequence[CheckSpec]) -> list[CheckOutcome]:
    outcomes = []
    for spec in checks:
        try:
            outcomes.append(_CHECKS[spec.kind](rows, spec))
        except ParameterError as exc:
            outcomes.append(CheckOutcome(f"{spec.kind} check", False, str(exc)))
    return outcomes


def write_summary(rows: Sequence[MetricRow], config: ExperimentConfig,
                  out_dir: Optional[str] = None) -> str:
    """Write per-(point, estimator, metric) aggregates to summary.csv."""
    out_dir = config.out if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    axes = sorted(config.sweep.keys())
    path = os.path.join(out_dir, "summary.csv")
    lines = [",".join(axes + ["estimator", "metric", "count", "failed",
                              "mean", "std_error"])]
    for entry in summarize(rows):
        pt = dict(entry["point"])
        fields = [repr(float(pt[a])) if a == "eps" else str(int(pt[a]))
                  for a in axes]
        fields += [entry["estimator"], entry["metric"], str(entry["count"]),
                   str(entry["failed"]),
                   "" if entry["mean"] is None else repr(entry["mean"]),
                   "" if entry["std_error"] is None else repr(entry["std_error"])]
        lines.append(",".join(fields))
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)
    return path
