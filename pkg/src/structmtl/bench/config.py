"""Experiment configuration: a YAML mapping parsed into typed specs.

Top-level keys:
  world       kind/d/n/r/B/family/eps plus head_style (lowrank) or
              separation (clustered)
  m           samples per task (unless swept)
  sweep       mapping of axis name (m, n, eps) to a list of values
  seeds       list of ints, or an int meaning range(seeds)
  estimators  list of {name, ...options}; names: local, lowrank_bm,
              lowrank_iht, clustered, nuclear, subspace_m1
  metrics     list of metric names
  out         output directory
  workers     parallel cell count (default 1)
  mc_samples  Monte-Carlo budget for logistic risk metrics
  checks      list of acceptance checks evaluated by `report --check`
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import yaml

from ..errors import ParameterError

ESTIMATOR_NAMES = ("local", "lowrank_bm", "lowrank_iht", "clustered",
                   "nuclear", "subspace_m1")
METRIC_NAMES = ("excess_risk", "param_error", "subspace_error_F",
                "subspace_error_op", "cluster_accuracy")
SWEEP_AXES = ("m", "n", "eps")
CHECK_TYPES = ("slope_range", "threshold", "pair_ratio", "point_ratio_range")


@dataclass(frozen=True)
class WorldSpec:
    kind: str
    d: int
    n: int
    r: int
    B: float
    family: str
    eps: float
    head_style: str = "gaussian"
    separation: Optional[float] = None


@dataclass(frozen=True)
class EstimatorSpec:
    name: str
    params: tuple = ()   # sorted (key, value) pairs so instances stay hashable

    def param_dict(self) -> dict:
        return dict(self.params)

    @classmethod
    def make(cls, name: str, params: Optional[dict] = None) -> "EstimatorSpec":
        return cls(name=name, params=tuple(sorted((params or {}).items())))


@dataclass(frozen=True)
class CheckSpec:
    kind: str
    params: tuple = ()

    def param_dict(self) -> dict:
        return dict(self.params)


@dataclass
class ExperimentConfig:
    world: WorldSpec
    estimators: list[EstimatorSpec]
    seeds: list[int]
    metrics: list[str]
    sweep: dict[str, list]
    m: Optional[int] = None
    out: str = "runs/experiment"
    workers: int = 1
    mc_samples: int = 100_000
    checks: list[CheckSpec] = field(default_factory=list)


def _require(mapping: dict, key: str, where: str) -> Any:
    if key not in mapping:
        raise ParameterError(f"missing key {key!r} in {where}")
    return mapping[key]


def _world_from_dict(raw: dict) -> WorldSpec:
    if not isinstance(raw, dict):
        raise ParameterError("'world' must be a mapping")
    kind = raw.get("kind", "lowrank")
    if kind not in ("lowrank", "clustered"):
        raise ParameterError(f"unknown world kind {kind!r}")
    spec = WorldSpec(
        kind=kind,
        d=int(_require(raw, "d", "world")),
        n=int(_require(raw, "n", "world")),
        r=int(_require(raw, "r", "world")),
        B=float(raw.get("B", 1.0)),
        family=str(raw.get("family", "quadratic")),
        eps=float(raw.get("eps", 0.0)),
        head_style=str(raw.get("head_style", "gaussian")),
        separation=(float(raw["separation"]) if raw.get("separation") is not None
                    else None),
    )
    if kind == "clustered" and spec.separation is None:
        raise ParameterError("clustered worlds need a 'separation' value")
    return spec


def _estimators_from_list(raw) -> list[EstimatorSpec]:
    if not isinstance(raw, list) or not raw:
        raise ParameterError("'estimators' must be a non-empty list")
    specs = []
    for item in raw:
        if isinstance(item, str):
            item = {"name": item}
        if not isinstance(item, dict):
            raise ParameterError(f"estimator entry {item!r} must be a name or mapping")
        name = _require(item, "name", "estimator entry")
        if name not in ESTIMATOR_NAMES:
            raise ParameterError(
                f"unknown estimator {name!r}; expected one of {ESTIMATOR_NAMES}")
        params = tuple(sorted((k, v) for k, v in item.items() if k != "name"))
        specs.append(EstimatorSpec(name=name, params=params))
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ParameterError("estimator names must be unique within a config")
    return specs


def _seeds_from(raw) -> list[int]:
    if raw is None:
        return list(range(20))
    if isinstance(raw, int):
        if raw < 1:
            raise ParameterError(f"'seeds' count must be >= 1, got {raw}")
        return list(range(raw))
    if isinstance(raw, list):
        return [int(s) for s in raw]
    raise ParameterError("'seeds' must be an int count or a list of ints")


def _sweep_from(raw, default_m) -> dict[str, list]:
    if raw is None:
        if default_m is None:
            raise ParameterError("config needs either 'm' or a sweep over m")
        return {"m": [int(default_m)]}
    if not isinstance(raw, dict) or not raw:
        raise ParameterError("'sweep' must be a non-empty mapping of axis -> values")
    sweep = {}
    for axis, values in raw.items():
        if axis not in SWEEP_AXES:
            raise ParameterError(f"unknown sweep axis {axis!r}; expected {SWEEP_AXES}")
        if not isinstance(values, list) or not values:
            raise ParameterError(f"sweep axis {axis!r} needs a non-empty list")
        caster = float if axis == "eps" else int
        sweep[axis] = [caster(v) for v in values]
    if "m" not in sweep:
        if default_m is None:
            raise ParameterError("config needs 'm' when the sweep does not cover m")
        sweep["m"] = [int(default_m)]
    return sweep


def _checks_from(raw) -> list[CheckSpec]:
    if raw is None:
        return []
    if not isinstance(raw, list):
        raise ParameterError("'checks' must be a list")
    out = []
    for item in raw:
        if not isinstance(item, dict):
            raise ParameterError(f"check entry {item!r} must be a mapping")
        kind = _require(item, "type", "check entry")
        if kind not in CHECK_TYPES:
            raise ParameterError(f"unknown check type {kind!r}; expected {CHECK_TYPES}")
        params = tuple(sorted((k, v) for k, v in item.items() if k != "type"))
        out.append(CheckSpec(kind=kind, params=params))
    return out


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ParameterError("config root must be a mapping")
    known = {"world", "m", "sweep", "seeds", "estimators", "metrics", "out",
             "workers", "mc_samples", "checks"}
    unknown = set(raw) - known
    if unknown:
        raise ParameterError(f"unknown config keys: {sorted(unknown)}")
    world = _world_from_dict(_require(raw, "world", "config"))
    m = raw.get("m")
    metrics = raw.get("metrics") or ["param_error"]
    for metric in metrics:
        if metric not in METRIC_NAMES:
            raise ParameterError(
                f"unknown metric {metric!r}; expected one of {METRIC_NAMES}")
    cfg = ExperimentConfig(
        world=world,
        estimators=_estimators_from_list(_require(raw, "estimators", "config")),
        seeds=_seeds_from(raw.get("seeds")),
        metrics=list(metrics),
        sweep=_sweep_from(raw.get("sweep"), m),
        m=(int(m) if m is not None else None),
        out=str(raw.get("out", "runs/experiment")),
        workers=int(raw.get("workers", 1)),
        mc_samples=int(raw.get("mc_samples", 100_000)),
        checks=_checks_from(raw.get("checks")),
    )
    if cfg.workers < 1:
        raise ParameterError(f"'workers' must be >= 1, got {cfg.workers}")
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ParameterError(f"{path}: invalid YAML ({exc})") from exc
    if raw is None:
        raise ParameterError(f"{path}: empty config")
    return config_from_dict(raw)
