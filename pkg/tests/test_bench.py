"""Benchmark pipeline tests: config parsing, the sweep runner, checks,
figures, and the command line interface.

Determinism matters most here.  results.csv is asserted byte-identical
across reruns, across fresh output directories, across worker counts, and
across resumed partial runs.  SVG output is compared against a golden file
rendered from fixed rows.
"""

import dataclasses
import math
import os
import shutil

import numpy as np
import pytest
import yaml

from structmtl.bench.cli import main
from structmtl.bench.config import (
    CheckSpec,
    EstimatorSpec,
    config_from_dict,
    load_config,
)
from structmtl.bench.metrics import (
    cluster_accuracy,
    excess_risk,
    param_error,
    subspace_error_F,
    subspace_error_op,
)
from structmtl.bench.plots import emit_plots
from structmtl.bench.report import evaluate_checks, write_summary
from structmtl.bench.runner import (
    MetricRow,
    compare_baselines,
    fit_scaling_exponent,
    load_results,
    results_path,
    run_experiment,
    summarize,
    sweep_points,
)
from structmtl.errors import ParameterError
from structmtl.worlds import gen_clustered_world, gen_lowrank_world, load_world, save_world

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


def base_dict(out):
    return {
        "world": {"d": 4, "n": 4, "r": 1, "B": 1.0, "family": "quadratic",
                  "eps": 0.1},
        "sweep": {"m": [4, 8]},
        "seeds": [0, 1],
        "estimators": ["local", "lowrank_bm"],
        "metrics": ["param_error", "subspace_error_F"],
        "out": str(out),
    }


def read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


class TestConfig:
    def test_defaults(self, tmp_path):
        raw = {"world": {"d": 3, "n": 2, "r": 1}, "m": 8,
               "estimators": ["local"]}
        cfg = config_from_dict(raw)
        assert cfg.seeds == list(range(20))
        assert cfg.metrics == ["param_error"]
        assert cfg.sweep == {"m": [8]}
        assert cfg.workers == 1
        assert cfg.mc_samples == 100_000
        assert cfg.world.kind == "lowrank"
        assert cfg.world.B == 1.0
        assert cfg.world.family == "quadratic"

    def test_sweep_casting_and_m_injection(self):
        raw = {"world": {"d": 3, "n": 2, "r": 1}, "m": 6,
               "sweep": {"eps": ["0.1", 0.2]}, "estimators": ["local"]}
        cfg = config_from_dict(raw)
        assert cfg.sweep["eps"] == [0.1, 0.2]
        assert all(isinstance(v, float) for v in cfg.sweep["eps"])
        # m is injected as a one-point axis so every cell knows its sample count
        assert cfg.sweep["m"] == [6]

    def test_seed_forms(self):
        raw = {"world": {"d": 3, "n": 2, "r": 1}, "m": 4,
               "estimators": ["local"]}
        assert config_from_dict({**raw, "seeds": 3}).seeds == [0, 1, 2]
        assert config_from_dict({**raw, "seeds": [5, 9]}).seeds == [5, 9]
        with pytest.raises(ParameterError):
            config_from_dict({**raw, "seeds": 0})
        with pytest.raises(ParameterError):
            config_from_dict({**raw, "seeds": "all"})

    def test_estimator_entries(self):
        raw = {"world": {"d": 3, "n": 2, "r": 1}, "m": 4,
               "estimators": [{"name": "nuclear", "kappa": 2.0, "r": 1}]}
        cfg = config_from_dict(raw)
        assert cfg.estimators[0].name == "nuclear"
        assert cfg.estimators[0].param_dict() == {"kappa": 2.0, "r": 1}

    @pytest.mark.parametrize("bad", [
        {"estimators": ["frobnicate"]},
        {"estimators": []},
        {"estimators": ["local", "local"]},
        {"estimators": [42]},
        {"metrics": ["accuracy"], "estimators": ["local"]},
        {"sweep": {"d": [3]}, "estimators": ["local"]},
        {"sweep": {"m": []}, "estimators": ["local"]},
        {"workers": 0, "estimators": ["local"]},
        {"extra_key": 1, "estimators": ["local"]},
    ])
    def test_rejects_bad_entries(self, bad):
        raw = {"world": {"d": 3, "n": 2, "r": 1}, "m": 4}
        raw.update(bad)
        with pytest.raises(ParameterError):
            config_from_dict(raw)

    def test_needs_m_somewhere(self):
        raw = {"world": {"d": 3, "n": 2, "r": 1}, "estimators": ["local"]}
        with pytest.raises(ParameterError, match="'m'"):
            config_from_dict(raw)
        raw["sweep"] = {"eps": [0.1]}
        with pytest.raises(ParameterError):
            config_from_dict(raw)

    def test_clustered_needs_separation(self):
        raw = {"world": {"kind": "clustered", "d": 3, "n": 4, "r": 2},
               "m": 4, "estimators": ["clustered"]}
        with pytest.raises(ParameterError, match="separation"):
            config_from_dict(raw)
        raw["world"]["separation"] = 0.5
        assert config_from_dict(raw).world.separation == 0.5

    def test_unknown_world_kind(self):
        raw = {"world": {"kind": "tree", "d": 3, "n": 2, "r": 1}, "m": 4,
               "estimators": ["local"]}
        with pytest.raises(ParameterError, match="kind"):
            config_from_dict(raw)

    def test_check_parsing(self):
        raw = {"world": {"d": 3, "n": 2, "r": 1}, "m": 4,
               "estimators": ["local"],
               "checks": [{"type": "threshold", "metric": "param_error",
                           "max": 1.0}]}
        cfg = config_from_dict(raw)
        assert cfg.checks[0].kind == "threshold"
        assert cfg.checks[0].param_dict()["max"] == 1.0
        raw["checks"] = [{"type": "vibes"}]
        with pytest.raises(ParameterError):
            config_from_dict(raw)

    def test_load_config_roundtrip(self, tmp_path):
        raw = base_dict(tmp_path / "run")
        path = tmp_path / "cfg.yaml"
        path.write_text(yaml.safe_dump(raw))
        cfg = load_config(path)
        assert cfg == config_from_dict(raw)

    def test_load_config_bad_files(self, tmp_path):
        empty = tmp_path / "empty.yaml"
        empty.write_text("")
        with pytest.raises(ParameterError, match="empty"):
            load_config(empty)
        broken = tmp_path / "broken.yaml"
        broken.write_text("world: {d: 3\n")
        with pytest.raises(ParameterError, match="YAML"):
            load_config(broken)


class TestMetrics:
    def test_param_error_by_hand(self):
        world = gen_lowrank_world(3, 2, 1, 1.0, "quadratic", 0.0, seed=0)
        W_hat = world.W_star + 0.5
        expected = np.sum((0.5 * np.ones((3, 2))) ** 2) / 2
        assert param_error(W_hat, world) == pytest.approx(expected, rel=1e-12)
        with pytest.raises(ParameterError):
            param_error(np.zeros((3, 3)), world)

    def test_subspace_errors(self):
        world = gen_lowrank_world(4, 3, 1, 1.0, "quadratic", 0.0, seed=1)
        assert subspace_error_F(world.U_star, world) == pytest.approx(0.0, abs=1e-12)
        # any unit vector orthogonal to the planted direction is maximally wrong
        q, _ = np.linalg.qr(np.hstack([world.U_star,
                                       np.random.default_rng(0).standard_normal((4, 1))]))
        perp = q[:, 1:2]
        assert subspace_error_F(perp, world) == pytest.approx(1.0, abs=1e-10)
        assert subspace_error_op(perp, world) == pytest.approx(1.0, abs=1e-10)

    def test_excess_risk_quadratic_closed_form(self):
        world = gen_lowrank_world(3, 4, 2, 1.0, "quadratic", 0.3, seed=2)
        W_hat = world.W_star + 0.1
        value, se = excess_risk(W_hat, world)
        assert se == 0.0
        assert value == pytest.approx(0.5 * param_error(W_hat, world), rel=1e-12)

    def test_excess_risk_logistic(self):
        world = gen_lowrank_world(3, 2, 1, 1.0, "logistic", 0.5, seed=3)
        zero, se0 = excess_risk(world.W_star, world, n_mc=2000, seed=7)
        assert zero == 0.0 and se0 == 0.0
        v1, se1 = excess_risk(world.W_star * 0.2, world, n_mc=2000, seed=7)
        v2, _ = excess_risk(world.W_star * 0.2, world, n_mc=2000, seed=7)
        assert v1 == v2
        assert se1 > 0.0
        assert v1 > 0.0
        with pytest.raises(ParameterError):
            excess_risk(world.W_star, world, n_mc=50)

    def test_cluster_accuracy_relabeling(self):
        world = gen_clustered_world(4, 6, 2, 1.0, 0.5, "quadratic", 0.0, seed=4)
        truth = np.asarray(world.cluster_map)
        assert cluster_accuracy(truth, world) == 1.0
        assert cluster_accuracy(1 - truth, world) == 1.0
        flipped = truth.copy()
        flipped[0] = 1 - flipped[0]
        assert cluster_accuracy(flipped, world) == pytest.approx(5 / 6)
        lowrank = gen_lowrank_world(3, 2, 1, 1.0, "quadratic", 0.0, seed=0)
        with pytest.raises(ParameterError):
            cluster_accuracy(truth, lowrank)
        with pytest.raises(ParameterError):
            cluster_accuracy(truth[:3], world)


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    """One small sweep executed once; several tests compare against it."""
    out = tmp_path_factory.mktemp("bench") / "run0"
    cfg = config_from_dict(base_dict(out))
    rows = run_experiment(cfg)
    return cfg, rows, read_bytes(results_path(cfg))


class TestRunner:
    def test_row_inventory(self, tiny_run):
        cfg, rows, _ = tiny_run
        assert len(sweep_points(cfg)) == 2
        # local skips subspace error, so 2 points x 2 seeds x 3 rows
        assert len(rows) == 12
        assert all(row.status == "ok" for row in rows)
        combos = {(row.estimator, row.metric) for row in rows}
        assert ("local", "subspace_error_F") not in combos
        assert ("lowrank_bm", "subspace_error_F") in combos
        assert rows == sorted(rows, key=MetricRow.key)
        assert os.path.exists(os.path.join(cfg.out, "timings.csv"))

    def test_rerun_skips_and_preserves_bytes(self, tiny_run):
        cfg, _, blob = tiny_run
        before = os.path.getmtime(results_path(cfg))
        rows = run_experiment(cfg)
        assert read_bytes(results_path(cfg)) == blob
        assert len(rows) == 12
        assert os.path.getmtime(results_path(cfg)) >= before

    def test_fresh_directory_reproduces_bytes(self, tiny_run, tmp_path):
        cfg, _, blob = tiny_run
        cfg2 = dataclasses.replace(cfg, out=str(tmp_path / "run1"))
        run_experiment(cfg2)
        assert read_bytes(results_path(cfg2)) == blob

    def test_worker_count_does_not_change_bytes(self, tiny_run, tmp_path):
        cfg, _, blob = tiny_run
        cfg2 = dataclasses.replace(cfg, out=str(tmp_path / "run2"), workers=2)
        run_experiment(cfg2)
        assert read_bytes(results_path(cfg2)) == blob

    def test_resume_completes_partial_results(self, tiny_run, tmp_path):
        cfg, _, blob = tiny_run
        out3 = tmp_path / "run3"
        out3.mkdir()
        cfg2 = dataclasses.replace(cfg, out=str(out3))
        # drop every row of one cell (m=8, seed=1) and resume
        lines = blob.decode("ascii").splitlines()
        kept = [lines[0]] + [ln for ln in lines[1:]
                             if not ln.startswith("8,1,")]
        assert len(kept) == len(lines) - 3
        (out3 / "results.csv").write_text("\n".join(kept) + "\n")
        run_experiment(cfg2)
        assert read_bytes(results_path(cfg2)) == blob

    def test_load_results_roundtrip(self, tiny_run):
        cfg, rows, _ = tiny_run
        loaded = load_results(results_path(cfg), sorted(cfg.sweep.keys()))
        assert loaded == rows

    def test_load_results_header_mismatch(self, tiny_run, tmp_path):
        cfg, _, blob = tiny_run
        bad = tmp_path / "results.csv"
        bad.write_bytes(blob)
        with pytest.raises(ParameterError, match="header"):
            load_results(bad, ["m", "n"])
        assert load_results(tmp_path / "missing.csv", ["m"]) == []

    def test_failed_cells_are_recorded_and_cached(self, tmp_path):
        raw = base_dict(tmp_path / "fail")
        # subspace_m1 without a delta parameter cannot be dispatched
        raw["estimators"] = [{"name": "subspace_m1"}]
        raw["metrics"] = ["subspace_error_F"]
        raw["sweep"] = {"m": [1]}
        raw["seeds"] = [0]
        cfg = config_from_dict(raw)
        rows = run_experiment(cfg)
        assert [row.status for row in rows] == ["failed"]
        assert rows[0].value is None and rows[0].std_error is None
        blob = read_bytes(results_path(cfg))
        assert run_experiment(cfg) == rows
        assert read_bytes(results_path(cfg)) == blob

    def test_eps_axis_changes_world(self, tmp_path):
        raw = base_dict(tmp_path / "eps")
        raw["sweep"] = {"eps": [0.0, 0.5]}
        raw["m"] = 12
        raw["seeds"] = [0]
        raw["estimators"] = ["local"]
        raw["metrics"] = ["param_error"]
        cfg = config_from_dict(raw)
        rows = run_experiment(cfg)
        by_eps = {row.axis("eps"): row.value for row in rows}
        assert by_eps[0.0] < 1e-10 < by_eps[0.5]


class TestScalingExponent:
    @staticmethod
    def power_rows(estimator="local", coeff=3.0, exponent=-1.0):
        rows = []
        for m in (2, 4, 8, 16):
            for seed in (0, 1):
                rows.append(MetricRow((("m", m),), seed, estimator,
                                      "param_error",
                                      coeff * m ** exponent, None, "ok"))
        return rows

    def test_exact_power_law(self):
        slope, r2 = fit_scaling_exponent(self.power_rows(), "m", "param_error")
        assert slope == pytest.approx(-1.0, abs=1e-12)
        assert r2 == pytest.approx(1.0, abs=1e-12)

    def test_mixed_estimators_need_selection(self):
        rows = self.power_rows("local") + self.power_rows("lowrank_bm", 5.0, -2.0)
        with pytest.raises(ParameterError, match="estimator"):
            fit_scaling_exponent(rows, "m", "param_error")
        slope, _ = fit_scaling_exponent(rows, "m", "param_error",
                                        estimator="lowrank_bm")
        assert slope == pytest.approx(-2.0, abs=1e-12)

    def test_failed_and_nonpositive_rows_excluded(self):
        rows = self.power_rows()
        rows.append(MetricRow((("m", 2),), 9, "local", "param_error",
                              None, None, "failed"))
        rows.append(MetricRow((("m", 2),), 8, "local", "param_error",
                              -1.0, None, "ok"))
        with pytest.warns(UserWarning, match="non-positive"):
            slope, _ = fit_scaling_exponent(rows, "m", "param_error")
        assert slope == pytest.approx(-1.0, abs=1e-12)

    def test_needs_three_support_points(self):
        rows = [row for row in self.power_rows() if row.axis("m") <= 4]
        with pytest.raises(ParameterError, match="support"):
            fit_scaling_exponent(rows, "m", "param_error")

    def test_unknown_axis(self):
        with pytest.raises(ParameterError, match="axis"):
            fit_scaling_exponent(self.power_rows(), "n", "param_error")


class TestSummarize:
    def test_aggregates_by_hand(self):
        pt = (("m", 4),)
        rows = [
            MetricRow(pt, 0, "local", "param_error", 1.0, None, "ok"),
            MetricRow(pt, 1, "local", "param_error", 3.0, None, "ok"),
            MetricRow(pt, 2, "local", "param_error", None, None, "failed"),
            MetricRow(pt, 0, "local", "excess_risk", 0.5, 0.01, "ok"),
        ]
        entries = {(e["estimator"], e["metric"]): e for e in summarize(rows)}
        pe = entries[("local", "param_error")]
        assert pe["count"] == 2 and pe["failed"] == 1
        assert pe["mean"] == pytest.approx(2.0)
        assert pe["std_error"] == pytest.approx(np.std([1.0, 3.0], ddof=1)
                                                / math.sqrt(2))
        er = entries[("local", "excess_risk")]
        assert er["count"] == 1 and er["std_error"] is None

    def test_all_failed_group(self):
        rows = [MetricRow((("m", 2),), 0, "local", "param_error",
                          None, None, "failed")]
        entry = summarize(rows)[0]
        assert entry["mean"] is None and entry["count"] == 0
        assert entry["failed"] == 1


class TestCompareBaselines:
    def test_win_rates_on_tiny_run(self, tiny_run):
        cfg, _, _ = tiny_run
        pairs, win_rates = compare_baselines(cfg)
        # one group per (point, seed, metric) with at least one estimator
        assert len(pairs) == 8
        rates = win_rates["param_error"]
        assert set(rates) == {"local", "lowrank_bm"}
        assert all(0.0 <= v <= 1.0 for v in rates.values())
        assert sum(rates.values()) <= 1.0 + 1e-12

    def test_needs_two_estimators(self, tiny_run, tmp_path):
        cfg, _, _ = tiny_run
        solo = dataclasses.replace(cfg, estimators=[EstimatorSpec.make("local")],
                                   out=str(tmp_path / "solo"))
        with pytest.raises(ParameterError):
            compare_baselines(solo)


def check(kind, **params):
    return CheckSpec(kind=kind, params=tuple(sorted(params.items())))


class TestChecks:
    rows = TestScalingExponent.power_rows()

    def test_slope_range(self):
        good = check("slope_range", x="m", metric="param_error",
                     min=-1.3, max=-0.7, min_r2=0.99)
        bad = check("slope_range", x="m", metric="param_error",
                    min=-0.5, max=-0.2)
        out = evaluate_checks(self.rows, [good, bad])
        assert [o.passed for o in out] == [True, False]
        assert out[0].line().startswith("[PASS] slope of param_error vs m")
        assert out[1].line().startswith("[FAIL]")
        assert "slope=-1.0000" in out[1].detail

    def test_threshold_max_and_min(self):
        sel = [check("threshold", metric="param_error", max=2.0, fraction=0.7),
               check("threshold", metric="param_error", max=0.2),
               check("threshold", metric="param_error", min=0.1)]
        out = evaluate_checks(self.rows, sel)
        # values 3/2, 3/4, 3/8, 3/16 twice each: all 8 are <= 2.0
        assert [o.passed for o in out] == [True, False, True]
        assert "8/8" in out[0].detail
        assert "2/8" in out[1].detail

    def test_threshold_needs_bound_and_rows(self):
        out = evaluate_checks(self.rows, [check("threshold",
                                                metric="param_error")])
        assert not out[0].passed and "max" in out[0].detail
        out = evaluate_checks([], [check("threshold", metric="param_error",
                                         max=1.0)])
        assert not out[0].passed and "no matching rows" in out[0].detail

    def test_pair_ratio(self):
        rows = (TestScalingExponent.power_rows("lowrank_bm", 1.0)
                + TestScalingExponent.power_rows("local", 2.0))
        good = check("pair_ratio", metric="param_error",
                     estimator="lowrank_bm", baseline="local", max_ratio=0.6)
        bad = check("pair_ratio", metric="param_error",
                    estimator="lowrank_bm", baseline="local", min_ratio=0.9)
        empty = check("pair_ratio", metric="param_error",
                      estimator="nuclear", baseline="local", max_ratio=1.0)
        out = evaluate_checks(rows, [good, bad, empty])
        assert [o.passed for o in out] == [True, False, False]
        assert "no comparable pairs" in out[2].detail

    def test_pair_ratio_ignores_ties_at_zero(self):
        pt = (("m", 2),)
        rows = [MetricRow(pt, 0, "lowrank_bm", "param_error", 1e-12, None, "ok"),
                MetricRow(pt, 0, "local", "param_error", 1e-10, None, "ok")]
        out = evaluate_checks(rows, [check("pair_ratio", metric="param_error",
                                           estimator="lowrank_bm",
                                           baseline="local", max_ratio=1.0)])
        assert not out[0].passed and "no comparable pairs" in out[0].detail

    def test_point_ratio_range(self):
        good = check("point_ratio_range", metric="param_error", x="m",
                     x_num=8, x_den=2, min=0.2, max=0.3)
        bad = check("point_ratio_range", metric="param_error", x="m",
                    x_num=8, x_den=2, min=0.3, max=0.4)
        missing = check("point_ratio_range", metric="param_error", x="m",
                        x_num=32, x_den=2, min=0.0, max=1.0)
        out = evaluate_checks(self.rows, [good, bad, missing])
        assert [o.passed for o in out] == [True, False, False]
        assert "ratio=0.2500" in out[0].detail

    def test_bad_parameters_become_failed_outcomes(self):
        out = evaluate_checks(self.rows, [check("slope_range", x="n",
                                                metric="param_error",
                                                min=-2, max=0)])
        assert not out[0].passed


class TestWriteSummary:
    def test_summary_file(self, tiny_run, tmp_path):
        cfg, rows, _ = tiny_run
        path = write_summary(rows, cfg, str(tmp_path))
        lines = read_bytes(path).decode("ascii").splitlines()
        assert lines[0] == "m,estimator,metric,count,failed,mean,std_error"
        # 2 points x 3 (estimator, metric) combinations
        assert len(lines) == 1 + 6
        wanted = [row.value for row in rows
                  if row.point == (("m", 4),) and row.estimator == "local"]
        mean = float(lines[1].split(",")[5])
        assert lines[1].startswith("4,local,param_error,2,0,")
        assert mean == pytest.approx(np.mean(wanted), rel=1e-15)


GOLDEN_ROWS = [
    MetricRow((("m", m),), seed, est, "param_error", scale * base / m,
              None, "ok")
    for est, base in (("local", 1.0), ("lowrank_bm", 0.25))
    for m in (2, 4, 8)
    for seed, scale in ((0, 1.0), (1, 2.0))
]


class TestPlots:
    def test_files_and_determinism(self, tiny_run, tmp_path):
        _, rows, _ = tiny_run
        first = emit_plots(rows, str(tmp_path / "a"), "m")
        second = emit_plots(rows, str(tmp_path / "b"), "m")
        names = sorted(os.path.basename(p) for p in first)
        assert names == ["param_error_vs_m.svg", "subspace_error_F_vs_m.svg"]
        for p1, p2 in zip(sorted(first), sorted(second)):
            blob = read_bytes(p1)
            assert blob == read_bytes(p2)
            assert blob.startswith(b"<?xml")
            assert b"<svg" in blob

    def test_matches_golden_file(self, tmp_path):
        paths = emit_plots(GOLDEN_ROWS, str(tmp_path), "m")
        golden = os.path.join(DATA_DIR, "golden_param_error_vs_m.svg")
        assert read_bytes(paths[0]) == read_bytes(golden)

    def test_estimator_filter(self, tmp_path):
        paths = emit_plots(GOLDEN_ROWS, str(tmp_path), "m",
                           estimators=["local"])
        assert len(paths) == 1
        with pytest.raises(ParameterError, match="no rows"):
            emit_plots(GOLDEN_ROWS, str(tmp_path), "m",
                       estimators=["nuclear"])

    def test_empty_selection(self, tmp_path):
        with pytest.raises(ParameterError, match="no metrics"):
            emit_plots([], str(tmp_path), "m")
        with pytest.raises(ParameterError, match="axis"):
            emit_plots(GOLDEN_ROWS, str(tmp_path), "n")


class TestCli:
    @pytest.fixture()
    def cfg_path(self, tmp_path):
        raw = base_dict(tmp_path / "sweep_out")
        raw["seeds"] = [0]
        raw["sweep"] = {"m": [4, 8, 16]}
        raw["checks"] = [{"type": "threshold", "metric": "param_error",
                          "max": 100.0}]
        path = tmp_path / "cfg.yaml"
        path.write_text(yaml.safe_dump(raw))
        return path

    def test_pipeline_stages(self, cfg_path, tmp_path, capsys):
        world_dir = tmp_path / "world"
        data_dir = tmp_path / "data"
        report_dir = tmp_path / "report"
        assert main(["gen-world", "--config", str(cfg_path),
                     "--out", str(world_dir), "--seed", "0"]) == 0
        world = load_world(world_dir)
        assert world.d == 4 and world.n == 4

        assert main(["sample", "--world", str(world_dir), "--m", "8",
                     "--seed", "0", "--out", str(data_dir)]) == 0
        assert len(sorted(data_dir.glob("task_*.csv"))) == 4

        assert main(["fit", "--estimator", "lowrank_bm",
                     "--data", str(data_dir), "--world", str(world_dir),
                     "--out", str(report_dir), "--seed", "0",
                     "--param", "r=1"]) == 0
        capsys.readouterr()

        eval_csv = tmp_path / "metrics.csv"
        assert main(["eval", "--report", str(report_dir),
                     "--world", str(world_dir), "--metrics",
                     "param_error,subspace_error_F",
                     "--out", str(eval_csv)]) == 0
        out = capsys.readouterr().out
        assert out.startswith("metric,value,std_error")
        text = eval_csv.read_text()
        assert "param_error," in text and "subspace_error_F," in text
        value = float(text.splitlines()[1].split(",")[1])
        assert value < 0.1

    def test_sweep_plot_report(self, cfg_path, tmp_path, capsys):
        assert main(["sweep", "--config", str(cfg_path)]) == 0
        cfg = load_config(cfg_path)
        assert os.path.exists(results_path(cfg))

        # the CLI sweep and the library runner must agree byte for byte
        alt = dataclasses.replace(cfg, out=str(tmp_path / "alt"))
        run_experiment(alt)
        assert read_bytes(results_path(alt)) == read_bytes(results_path(cfg))

        plot_dir = tmp_path / "figs"
        assert main(["plot", "--config", str(cfg_path),
                     "--out", str(plot_dir)]) == 0
        assert (plot_dir / "param_error_vs_m.svg").exists()
        assert (plot_dir / "subspace_error_F_vs_m.svg").exists()

        assert main(["report", "--config", str(cfg_path), "--check"]) == 0
        out = capsys.readouterr().out
        assert "[PASS]" in out
        # the report stage leaves figures next to the summary table
        assert os.path.exists(os.path.join(cfg.out, "summary.csv"))
        assert os.path.exists(os.path.join(cfg.out, "param_error_vs_m.svg"))
        assert os.path.exists(
            os.path.join(cfg.out, "subspace_error_F_vs_m.svg"))

    def test_failing_check_exits_three(self, cfg_path, tmp_path, capsys):
        assert main(["sweep", "--config", str(cfg_path)]) == 0
        raw = yaml.safe_load(cfg_path.read_text())
        raw["checks"] = [{"type": "threshold", "metric": "param_error",
                          "max": 1e-30}]
        strict = tmp_path / "strict.yaml"
        strict.write_text(yaml.safe_dump(raw))
        assert main(["report", "--config", str(strict), "--check"]) == 3
        assert "[FAIL]" in capsys.readouterr().out

    def test_usage_errors_exit_one(self, cfg_path, tmp_path, capsys):
        cases = [
            ["frobnicate"],
            ["fit", "--estimator", "magic", "--data", "x", "--world", "y",
             "--out", "z"],
            ["sample", "--world", str(tmp_path / "nowhere")],
            ["plot", "--config", str(cfg_path)],          # no results yet
            ["fit", "--estimator", "local", "--data", str(tmp_path),
             "--world", str(tmp_path / "none"), "--out", str(tmp_path / "r")],
        ]
        for argv in cases:
            assert main(argv) == 1, argv
        capsys.readouterr()

    def test_bad_param_syntax_exits_one(self, cfg_path, tmp_path, capsys):
        world_dir = tmp_path / "world"
        data_dir = tmp_path / "data"
        assert main(["gen-world", "--config", str(cfg_path),
                     "--out", str(world_dir)]) == 0
        assert main(["sample", "--world", str(world_dir), "--m", "4",
                     "--out", str(data_dir)]) == 0
        assert main(["fit", "--estimator", "nuclear", "--data", str(data_dir),
                     "--world", str(world_dir), "--out", str(tmp_path / "rep"),
                     "--param", "kappa"]) == 1
        assert main(["fit", "--estimator", "nuclear", "--data", str(data_dir),
                     "--world", str(world_dir), "--out", str(tmp_path / "rep"),
                     "--param", "kappa=hot"]) == 1
        capsys.readouterr()

    def test_numerical_failure_exits_two(self, cfg_path, tmp_path, capsys):
        # a world whose planted matrix is identically zero has no usable
        # condition number, so the nuclear default kappa cannot be derived
        world = gen_lowrank_world(4, 4, 1, 1.0, "quadratic", 0.1, seed=0)
        degenerate = dataclasses.replace(
            world, V_star=np.zeros_like(world.V_star),
            W_star=np.zeros_like(world.W_star))
        world_dir = tmp_path / "zero_world"
        save_world(world_dir, degenerate)
        data_dir = tmp_path / "zero_data"
        assert main(["sample", "--world", str(world_dir), "--m", "6",
                     "--out", str(data_dir)]) == 0
        code = main(["fit", "--estimator", "nuclear", "--data", str(data_dir),
                     "--world", str(world_dir), "--out", str(tmp_path / "rep")])
        assert code == 2
        assert "numerical failure" in capsys.readouterr().err
