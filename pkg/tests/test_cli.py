import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from ingarch_bayes.cli import (
    aggregate_replications,
    load_count_csv,
    main,
    write_count_csv,
)
from ingarch_bayes.errors import DataError
from ingarch_bayes.model import CountSeries


def run_cli(*argv):
    return main(list(argv))


@pytest.fixture
def sim_dir(tmp_path):
    out = tmp_path / "sim"
    assert run_cli("simulate", "--scenario", "A1", "--n", "120",
                   "--seed", "7", "--out", str(out)) == 0
    return out


class TestSimulate:
    def test_row_count_and_header(self, sim_dir):
        with open(sim_dir / "series.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["count"]
        assert len(rows) == 122   # header + x_0..x_120

    def test_same_seed_same_bytes(self, sim_dir, tmp_path):
        other = tmp_path / "sim2"
        run_cli("simulate", "--scenario", "A1", "--n", "120", "--seed", "7",
                "--out", str(other))
        assert (sim_dir / "series.csv").read_bytes() \
            == (other / "series.csv").read_bytes()

    def test_unknown_scenario_exit_code(self, tmp_path, capsys):
        code = run_cli("simulate", "--scenario", "B9",
                       "--out", str(tmp_path / "z"))
        assert code == 2
        assert "A1" in capsys.readouterr().err

    def test_meta_matches_schema_roundtrip(self, sim_dir):
        meta = json.loads((sim_dir / "meta.json").read_text())
        assert meta["scenario"] == "A1"
        assert meta["params"]["lambda0"] == 3.0
        manifest = json.loads((sim_dir / "manifest.json").read_text())
        from ingarch_bayes.cli import _validate_config
        _validate_config("simulate", manifest["config"])


class TestDataLoading:
    def test_negative_count_names_line(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("count\n3\n-1\n2\n")
        with pytest.raises(DataError, match="line 3"):
            load_count_csv(p)

    def test_non_numeric_names_line(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("count\n3\nfoo\n")
        with pytest.raises(DataError, match="line 3"):
            load_count_csv(p)

    def test_bad_header(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("value\n3\n")
        with pytest.raises(DataError, match="line 1"):
            load_count_csv(p)

    def test_roundtrip(self, tmp_path):
        p = tmp_path / "x.csv"
        series = CountSeries([3, 0, 5, 2])
        write_count_csv(p, series)
        assert load_count_csv(p) == series

    def test_missing_file_exit_code(self, tmp_path):
        code = run_cli("fit-mle", "--data", str(tmp_path / "none.csv"),
                       "--out", str(tmp_path / "o"))
        assert code == 3


class TestFitCommands:
    def test_fit_mh_outputs(self, sim_dir, tmp_path):
        out = tmp_path / "mh"
        cfg = tmp_path / "mh.json"
        cfg.write_text(json.dumps({
            "data": str(sim_dir / "series.csv"),
            "link": "loglinear",
            "iterations": 400, "burn_in": 200, "seed": 5,
        }))
        assert run_cli("fit-mh", "--config", str(cfg), "--out", str(out)) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert set(summary["posterior"]) >= {"alpha0", "alpha1", "beta1",
                                             "lambda0", "acceptance_rate"}
        with open(out / "chain.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["iter", "alpha0", "alpha1", "beta1", "lambda0",
                           "acc_theta", "acc_l0"]
        assert len(rows) == 401
        for name in ("trace", "running_mean", "density", "acf"):
            assert (out / "plots" / f"{name}_alpha0.csv").exists()

    def test_fit_mh_deterministic_summary_bytes(self, sim_dir, tmp_path):
        outs = []
        for tag in ("r1", "r2"):
            out = tmp_path / tag
            cfg = tmp_path / f"{tag}.json"
            cfg.write_text(json.dumps({
                "data": str(sim_dir / "series.csv"),
                "iterations": 300, "burn_in": 100, "seed": 9,
            }))
            run_cli("fit-mh", "--config", str(cfg), "--out", str(out))
            outs.append((out / "summary.json").read_bytes())
        assert outs[0] == outs[1]

    def test_fit_psais_outputs(self, sim_dir, tmp_path):
        out = tmp_path / "ps"
        cfg = tmp_path / "ps.json"
        cfg.write_text(json.dumps({
            "data": str(sim_dir / "series.csv"),
            "draws": 200, "seed": 2,
            "center_init": [0.3, 0.2, 0.6], "lambda0": 3.0,
        }))
        assert run_cli("fit-psais", "--config", str(cfg), "--out",
                       str(out)) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert {"k_hat", "khat_threshold", "khat_flag", "estimate",
                "ess"} <= set(summary)
        with open(out / "weights.csv") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 201

    def test_fit_mle_outputs(self, sim_dir, tmp_path):
        out = tmp_path / "mle"
        assert run_cli("fit-mle", "--data", str(sim_dir / "series.csv"),
                       "--out", str(out)) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert {"estimate", "log_likelihood"} <= set(summary)

    def test_unknown_config_key_rejected(self, sim_dir, tmp_path):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({
            "data": str(sim_dir / "series.csv"), "bogus_key": 1,
        }))
        assert run_cli("fit-mle", "--config", str(cfg),
                       "--out", str(tmp_path / "o")) == 2


class TestDiagnose:
    def test_outputs(self, sim_dir, tmp_path):
        mh_out = tmp_path / "mh"
        cfg = tmp_path / "mh.json"
        cfg.write_text(json.dumps({
            "data": str(sim_dir / "series.csv"),
            "iterations": 400, "burn_in": 200, "seed": 5,
        }))
        run_cli("fit-mh", "--config", str(cfg), "--out", str(mh_out))
        diag = tmp_path / "diag"
        dcfg = tmp_path / "d.json"
        dcfg.write_text(json.dumps({"run_dir": str(mh_out), "max_lag": 15}))
        assert run_cli("diagnose", "--config", str(dcfg),
                       "--out", str(diag)) == 0
        with open(diag / "residuals.csv") as fh:
            assert len(list(csv.reader(fh))) == 121   # header + n rows
        with open(diag / "residual_acf.csv") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 17   # header + lags 0..15
        assert float(rows[1][1]) == pytest.approx(1.0)
        metrics = json.loads((diag / "metrics.json").read_text())
        assert set(metrics) == {"mae", "rmse", "lpd"}
        assert metrics["mae"] <= metrics["rmse"]

    def test_missing_inputs_named(self, tmp_path, capsys):
        cfg = tmp_path / "d.json"
        cfg.write_text(json.dumps({"run_dir": str(tmp_path / "nope")}))
        assert run_cli("diagnose", "--config", str(cfg),
                       "--out", str(tmp_path / "o")) == 3
        assert "chain.csv" in capsys.readouterr().err


class TestReplicate:
    def test_single_rep_rmse_identity(self, tmp_path):
        out = tmp_path / "rep"
        cfg = tmp_path / "rep.json"
        cfg.write_text(json.dumps({
            "scenario": "A1", "n": 100, "replications": 1,
            "methods": ["mle"], "seed": 4, "workers": 1,
        }))
        assert run_cli("replicate", "--config", str(cfg),
                       "--out", str(out)) == 0
        table = json.loads((out / "table.json").read_text())
        est = np.array(table["methods"]["mle"]["estimate"])
        rmse = np.array(table["methods"]["mle"]["rmse"])
        mad = np.array(table["methods"]["mle"]["mad"])
        truth = np.array(table["truth"])
        assert np.allclose(rmse, np.abs(est - truth))
        assert np.allclose(mad, rmse)

    def test_aggregation_matches_independent_recomputation(self, tmp_path):
        out = tmp_path / "rep"
        cfg = tmp_path / "rep.json"
        cfg.write_text(json.dumps({
            "scenario": "A1", "n": 80, "replications": 3,
            "methods": ["mle", "mh"], "seed": 11, "workers": 2,
            "iterations": 300, "burn_in": 100,
        }))
        assert run_cli("replicate", "--config", str(cfg),
                       "--out", str(out)) == 0
        table = json.loads((out / "table.json").read_text())
        truth = np.array(table["truth"])
        per_method = {}
        with open(out / "replications.csv") as fh:
            for row in csv.DictReader(fh):
                per_method.setdefault(row["method"], []).append(
                    [float(row[k]) for k in ("alpha0", "alpha1", "beta1")])
        for method, rows in per_method.items():
            arr = np.asarray(rows)
            assert np.allclose(table["methods"][method]["estimate"],
                               arr.mean(axis=0))
            assert np.allclose(table["methods"][method]["rmse"],
                               np.sqrt(((arr - truth) ** 2).mean(axis=0)))
            assert np.allclose(table["methods"][method]["mad"],
                               np.abs(arr - truth).mean(axis=0))

    def test_worker_count_does_not_change_results(self, tmp_path):
        tables = []
        for workers, tag in ((1, "w1"), (2, "w2")):
            out = tmp_path / tag
            cfg = tmp_path / f"{tag}.json"
            cfg.write_text(json.dumps({
                "scenario": "B1", "n": 60, "replications": 2,
                "methods": ["mle"], "seed": 3, "workers": workers,
            }))
            run_cli("replicate", "--config", str(cfg), "--out", str(out))
            tables.append((out / "table.csv").read_bytes())
        assert tables[0] == tables[1]

    def test_failed_replication_is_isolated(self, tmp_path, monkeypatch):
        # a failing method must be reported, not fatal (workers=1 so the
        # monkeypatch survives)
        import ingarch_bayes.cli as cli_mod
        from ingarch_bayes.errors import OptimizerError

        def explode(*a, **k):
            raise OptimizerError("forced failure")

        monkeypatch.setattr(cli_mod, "mle_fit", explode)
        out = tmp_path / "rep"
        cfg = tmp_path / "rep.json"
        cfg.write_text(json.dumps({
            "scenario": "A1", "n": 60, "replications": 2,
            "methods": ["mle", "mh"], "seed": 6, "workers": 1,
            "iterations": 200, "burn_in": 100,
        }))
        assert run_cli("replicate", "--config", str(cfg),
                       "--out", str(out)) == 0
        table = json.loads((out / "table.json").read_text())
        assert set(table["failures"]) == {"0", "1"}
        assert "mle" not in table["methods"]
        assert table["methods"]["mh"]["replications"] == 2


class TestAggregateHelper:
    def test_formulas(self):
        truth = np.array([0.3, 0.2, 0.6])
        rows = [[0.35, 0.15, 0.65, 1.0], [0.25, 0.25, 0.55, 2.0]]
        table = aggregate_replications({"mh": rows}, truth)
        assert table["mh"]["estimate"] == pytest.approx([0.3, 0.2, 0.6])
        assert table["mh"]["rmse"] == pytest.approx([0.05, 0.05, 0.05])
        assert table["mh"]["mad"] == pytest.approx([0.05, 0.05, 0.05])


class TestEntryPoint:
    def test_console_script_help(self):
        proc = subprocess.run([sys.executable, "-m", "ingarch_bayes.cli"],
                              capture_output=True, text=True)
        assert proc.returncode != 0   # no command given
