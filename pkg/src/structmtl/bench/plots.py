"""Figure rendering for sweep results.

All figures are written as SVG with fixed hash salt and no embedded
timestamps, so repeated runs of the same experiment produce byte-identical
files.
"""

from __future__ import annotations

import os
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

import numpy as np

from ..errors import ParameterError
from .runner import MetricRow

__all__ = ["emit_plots"]

_HASH_SALT = "structmtl"

_METRIC_LABELS = {
    "excess_risk": "excess risk",
    "param_error": "parameter error",
    "subspace_error_F": "subspace error (Frobenius)",
    "subspace_error_op": "subspace error (operator)",
    "cluster_accuracy": "cluster accuracy",
}


def _collect(rows, x_axis, metric, estimators):
    series = {}
    for row in rows:
        if row.status != "ok" or row.metric != metric or row.value is None:
            continue
        if estimators is not None and row.estimator not in estimators:
            continue
        pt = dict(row.point)
        if x_axis not in pt:
            raise ParameterError(f"rows carry no sweep axis {x_axis!r}")
        series.setdefault(row.estimator, {}).setdefault(
            float(pt[x_axis]), []).append(row.value)
    return series


def emit_plots(rows: Sequence[MetricRow], out_dir: str, x_axis: str,
               metrics: Optional[Sequence[str]] = None,
               estimators: Optional[Sequence[str]] = None,
               title_prefix: str = "") -> list[str]:
    """Render one figure per metric: per-seed scatter plus mean curve.

    Axes are log-log when every plotted value is positive, otherwise the
    offending axis falls back to linear.  Returns the written file paths.
    Raises ParameterError when the row selection is empty.
    """
    os.makedirs(out_dir, exist_ok=True)
    if metrics is None:
        metrics = sorted({row.metric for row in rows})
    if not metrics:
        raise ParameterError("no metrics selected for plotting")
    plt.rcParams["svg.hashsalt"] = _HASH_SALT
    written = []
    for metric in metrics:
        series = _collect(rows, x_axis, metric, estimators)
        if not series:
            raise ParameterError(
                f"no rows match metric {metric!r}"
                + (f" and estimators {sorted(estimators)}" if estimators else ""))
        fig, ax = plt.subplots(figsize=(6.0, 4.5))
        all_vals = [v for by_x in series.values() for vs in by_x.values()
                    for v in vs]
        all_xs = [x for by_x in series.values() for x in by_x]
        log_y = min(all_vals) > 0.0
        log_x = min(all_xs) > 0.0
        for idx, name in enumerate(sorted(series)):
            by_x = series[name]
            color = f"C{idx % 10}"
            xs = sorted(by_x)
            for x in xs:
                ax.plot([x] * len(by_x[x]), by_x[x], marker="o", linestyle="",
                        markersize=3, alpha=0.35, color=color)
            means = [float(np.mean(by_x[x])) for x in xs]
            ax.plot(xs, means, marker="s", color=color, label=name)
        if log_x:
            ax.set_xscale("log")
        if log_y:
            ax.set_yscale("log")
        ax.set_xlabel(x_axis)
        ax.set_ylabel(_METRIC_LABELS.get(metric, metric))
        title = f"{metric} vs {x_axis}"
        if title_prefix:
            title = f"{title_prefix}: {title}"
        ax.set_title(title)
        ax.legend(loc="best", fontsize=8)
        ax.grid(True, which="both", alpha=0.25)
        fig.tight_layout()
        path = os.path.join(out_dir, f"{metric}_vs_{x_axis}.svg")
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written
