import json

import numpy as np
import pytest

from conftest import feeder
from oracles import two_bus_closed_form
from hybridlpf import defaults
from hybridlpf.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestSolvePf:
    def test_two_bus_matches_closed_form(self, capsys):
        code, out, _ = run(capsys, "solve-pf", "--feeder", "two_bus")
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0] == "node,phase,v_re,v_im,v_mag,v_deg"
        _, _, re, im, *_ = lines[1].split(",")
        net = feeder("two_bus")
        ref = two_bus_closed_form(complex(net.system.yll[0, 0]), complex(net.s_nom[0]))
        assert abs(complex(float(re), float(im)) - ref) <= 1e-10

    def test_non_convergence_exit_code(self, capsys):
        code, _, err = run(capsys, "solve-pf", "--feeder", "two_bus", "--lam", "50")
        assert code == 2
        assert json.loads(err)["error"] == "numerical"

    def test_wrong_lambda_count(self, capsys):
        code, _, err = run(capsys, "solve-pf", "--feeder", "chain3", "--lam", "1", "1", "1")
        assert code == 1 and json.loads(err)["error"] == "usage"

    def test_file_output(self, capsys, tmp_path):
        out = tmp_path / "v.csv"
        code, _, _ = run(capsys, "solve-pf", "--feeder", "chain3", "--out", str(out))
        assert code == 0 and len(out.read_text().splitlines()) == 3


class TestPipeline:
    def test_train_eval_range(self, capsys, tmp_path):
        tr, te, model = tmp_path / "tr.csv", tmp_path / "te.csv", tmp_path / "m.json"
        assert run(capsys, "gen-data", "--feeder", "qrange5", "--count", "60", "--seed", "1",
                   "--out", str(tr))[0] == 0
        assert run(capsys, "gen-data", "--feeder", "qrange5", "--count", "30", "--seed", "2",
                   "--out", str(te))[0] == 0
        code, out, _ = run(capsys, "train", "--feeder", "qrange5", "--samples", str(tr),
                           "--out", str(model))
        assert code == 0 and json.loads(out)["penalty"] == "squared"

        code, out, _ = run(capsys, "eval", "--model", str(model), "--samples", str(te))
        first = json.loads(out)
        assert code == 0 and first["count"] == 30 and first["mean"] < 1e-3
        # same inputs, same report
        assert json.loads(run(capsys, "eval", "--model", str(model), "--samples", str(te))[1]) \
            == first

        code, out, _ = run(capsys, "range", "--feeder", "qrange5", "--model", str(model),
                           "--fme")
        doc = json.loads(out)
        assert code == 0 and doc["q_lo"] <= doc["q_hi"]
        assert doc["q_hi_mvar"] == pytest.approx(doc["q_hi"] * 10.0)
        assert doc["fme"]["max_abs_diff"] <= 1e-9
        for side in ("lo", "hi"):
            assert doc["certificates"][side]["worst_violation"] <= 0.02

    def test_train_is_idempotent(self, capsys, tmp_path):
        tr = tmp_path / "tr.csv"
        run(capsys, "gen-data", "--feeder", "chain3", "--count", "20", "--seed", "4",
            "--out", str(tr))
        for name in ("a.json", "b.json"):
            assert run(capsys, "train", "--feeder", "chain3", "--samples", str(tr),
                       "--penalty", "huber", "--rho", "0.9", "--out", str(tmp_path / name))[0] == 0
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_eval_writes_tables(self, capsys, tmp_path):
        tr, m = tmp_path / "tr.csv", tmp_path / "m.json"
        run(capsys, "gen-data", "--feeder", "chain3", "--count", "10", "--out", str(tr))
        run(capsys, "train", "--feeder", "chain3", "--samples", str(tr), "--out", str(m))
        out = tmp_path / "err.csv"
        assert run(capsys, "eval", "--model", str(m), "--samples", str(tr), "--out", str(out))[0] == 0
        assert out.read_text().startswith("sample_id,rel_err\n")
        assert (tmp_path / "err_stats.csv").read_text().startswith("stat,value\n")

    def test_printed_power_form_reports_infeasible(self, capsys, tmp_path):
        tr, m = tmp_path / "tr.csv", tmp_path / "m.json"
        run(capsys, "gen-data", "--feeder", "qrange5", "--count", "20", "--out", str(tr))
        run(capsys, "train", "--feeder", "qrange5", "--samples", str(tr), "--out", str(m))
        code, _, err = run(capsys, "range", "--feeder", "qrange5", "--model", str(m),
                           "--power-form", "printed")
        assert code == 2 and json.loads(err)["type"] == "InfeasibleError"

    def test_experiment(self, capsys, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"name": "e", "feeder": "two_bus", "train_counts": [10],
                                   "test_count": 5}))
        code, out, _ = run(capsys, "experiment", str(cfg), "--out", str(tmp_path / "r"))
        assert code == 0 and set(json.loads(out)) == {"flat", "n10_squared"}
        assert (tmp_path / "r" / "e_n10_squared_errors.csv").exists()


class TestUsage:
    @pytest.mark.parametrize("argv", [
        ["bogus"],
        [],
        ["train", "--feeder", "chain3"],
        ["train", "--feeder", "nofeeder.json", "--samples", "x.csv", "--out", "m.json"],
        ["eval", "--model", "missing.json", "--samples", "missing.csv"],
        ["gen-data", "--feeder", "chain3", "--count", "0", "--out", "x.csv"],
        ["gen-data", "--feeder", "chain3", "--out", "/no/such/dir/x.csv"],
        ["experiment", "no_such_config", "--out", "r"],
    ])
    def test_usage_errors(self, capsys, argv, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        code, _, _ = run(capsys, *argv)
        assert code == 1
        assert list(tmp_path.iterdir()) == []

    def test_bad_delta(self, capsys, tmp_path):
        tr = tmp_path / "tr.csv"
        run(capsys, "gen-data", "--feeder", "chain3", "--count", "5", "--out", str(tr))
        code, _, err = run(capsys, "train", "--feeder", "chain3", "--samples", str(tr),
                           "--penalty", "huber", "--delta", "-1", "--out", str(tmp_path / "m"))
        assert code == 1 and "delta" in json.loads(err)["message"]

    def test_range_needs_limits_for_other_feeders(self, capsys, tmp_path):
        tr, m = tmp_path / "tr.csv", tmp_path / "m.json"
        run(capsys, "gen-data", "--feeder", "chain3", "--count", "5", "--out", str(tr))
        run(capsys, "train", "--feeder", "chain3", "--samples", str(tr), "--out", str(m))
        code, _, err = run(capsys, "range", "--feeder", "chain3", "--model", str(m))
        assert code == 1 and "--limits" in json.loads(err)["message"]

    def test_defaults_table(self, capsys):
        code, out, _ = run(capsys, "defaults")
        assert code == 0
        names = [line.split(" = ")[0] for line in out.splitlines()]
        assert names == [k for k, _ in defaults.table()]
        assert "VOLTAGE_FORM = 'tangent'" in out

    def test_help(self, capsys):
        assert run(capsys, "--help")[0] == 0
