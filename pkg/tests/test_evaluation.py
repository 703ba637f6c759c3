import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import anchors_of, feeder, samples_of
from oracles import two_bus_closed_form
from hybridlpf.data import OperatingSample
from hybridlpf.evaluation import (ExperimentConfig, compare_hybrid_vs_pure, evaluate,
                                  flat_model, load_config, normalized_errors,
                                  read_stats_table, relative_errors, run_experiment,
                                  train_model)
from hybridlpf.oracle import solve_fixed_point
from hybridlpf.trainer import fit_mu


class TestRelativeErrors:
    def test_identical_is_zero(self):
        v = np.array([[1 + 1j, 2.0], [0.5, 1j]])
        rep = relative_errors(v, v)
        np.testing.assert_array_equal(rep.rel_err, 0.0)
        assert rep.mean == 0.0 and rep.max == 0.0

    @settings(max_examples=30, deadline=None)
    @given(alpha=st.floats(-0.5, 0.5))
    def test_scaling(self, alpha):
        v = np.array([[1 + 1j, 2.0, -0.3j], [0.5, 1j, 3.0]])
        rep = relative_errors((1 + alpha) * v, v)
        np.testing.assert_allclose(rep.rel_err, abs(alpha), atol=1e-15)
        np.testing.assert_allclose(rep.per_element, abs(alpha), atol=1e-15)

    def test_aggregate_form(self):
        truth = np.array([[1.0, 2.0]])
        pred = np.array([[1.1, 2.0]])
        assert relative_errors(pred, truth).rel_err[0] == pytest.approx(0.1 / 3.0)

    def test_quartiles(self):
        truth = np.ones((5, 1))
        pred = truth + np.array([[0.1], [0.2], [0.3], [0.4], [0.5]])
        q = relative_errors(pred, truth).quantiles()
        assert q == pytest.approx({"min": 0.1, "q1": 0.2, "median": 0.3, "q3": 0.4, "max": 0.5})

    def test_errors(self):
        with pytest.raises(ValueError, match="shape"):
            relative_errors(np.ones((2, 3)), np.ones((2, 2)))
        with pytest.raises(ValueError, match="zero"):
            relative_errors(np.ones((2, 2)), np.array([[1.0, 1.0], [0.0, 0.0]]))


class TestNormalized:
    def test_values(self):
        np.testing.assert_allclose(normalized_errors([1.0, 2.0, 3.0]), [0.0, 0.5, 1.0])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=40).filter(
        lambda s: max(s) - min(s) > 1e-6))
    def test_range_and_order(self, series):
        out = normalized_errors(series)
        assert out.min() == 0.0 and out.max() == 1.0
        # order preserving; values closer than round-off may merge
        ranked = out[np.argsort(series, kind="stable")]
        assert np.all(np.diff(ranked) >= 0)
        wide = np.diff(np.sort(series)) > 1e-9 * (max(series) - min(series))
        assert np.all(np.diff(ranked)[wide] > 0)

    @pytest.mark.parametrize("bad", [[1.0], [2.0, 2.0, 2.0], []])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            normalized_errors(bad)


class TestHybridVsPure:
    def setup_method(self):
        self.net = feeder("two_bus")
        self.anchors = anchors_of("two_bus")
        self.mu, _ = fit_mu(list(samples_of("two_bus", 100, 1)), self.anchors)

    def point(self, s):
        sol = solve_fixed_point(self.net.system, self.net.w, np.array([s]))
        return OperatingSample(0, 1, sol.v_l, sol.s_l)

    def test_ratio_equals_bound(self):
        for s in (-0.5 - 0.2j, -0.9 - 0.3j, 0.6 + 0.2j):
            c = compare_hybrid_vs_pure(self.net, self.anchors, self.mu, [self.point(s)])
            assert abs(c.ratio[0] - c.bound[0]) <= 1e-9
            assert c.hybrid_err[0] < c.pure_err[0]

    def test_closed_form_truth(self):
        s = -0.5 - 0.2j
        p = self.point(s)
        y = complex(self.net.system.yll[0, 0])
        assert abs(p.v_l[0] - two_bus_closed_form(y, s)) <= 1e-10

    def test_vanishing_load(self):
        c = compare_hybrid_vs_pure(self.net, self.anchors, self.mu, [self.point(1e-6 + 0j)])
        assert c.hybrid_err[0] <= 1e-6 * c.pure_err[0] + 1e-12

    def test_bound_is_nan_for_larger_systems(self):
        net = feeder("chain3")
        anchors = anchors_of("chain3")
        mu, _ = fit_mu(list(samples_of("chain3", 20, 1)), anchors)
        c = compare_hybrid_vs_pure(net, anchors, mu, list(samples_of("chain3", 3, 2)))
        assert np.all(np.isnan(c.bound))
        assert np.all(c.hybrid_err < c.pure_err)


class TestModelHelpers:
    def test_trained_beats_flat_on_zip_feeder(self):
        net = feeder("ieee13_zip")
        model, _ = train_model(net, list(samples_of("ieee13_zip", 50, 1)), anchors_of("ieee13_zip"))
        test = list(samples_of("ieee13_zip", 50, 1001))
        assert evaluate(model, test).mean < evaluate(flat_model(net), test).mean

    def test_zip_needs_lambda(self):
        from dataclasses import replace
        net = feeder("ieee13_zip")
        test = [replace(s, lam=None) for s in samples_of("ieee13_zip", 2, 1)]
        with pytest.raises(ValueError, match="lambda"):
            evaluate(flat_model(net), test)


class TestExperiment:
    def small(self, **kw):
        doc = {"name": "tiny", "feeder": "chain3", "seed": 3, "train_counts": [20, 40],
               "test_count": 30}
        doc.update(kw)
        return ExperimentConfig.from_document(doc)

    def test_files_and_headers(self, tmp_path):
        reports = run_experiment(self.small(), tmp_path)
        assert set(reports) == {"flat", "n20_squared", "n40_squared"}
        err = (tmp_path / "tiny_n20_squared_errors.csv").read_text().splitlines()
        assert err[0] == "sample_id,rel_err" and len(err) == 31
        stats = read_stats_table(tmp_path / "tiny_n20_squared_stats.csv")
        assert set(stats) == {"count", "mean", "min", "q1", "median", "q3", "max", "flat_mean"}
        assert float(stats["mean"]) < float(stats["flat_mean"])

    def test_byte_identical_rerun(self, tmp_path):
        run_experiment(self.small(), tmp_path / "a")
        run_experiment(self.small(), tmp_path / "b")
        for f in sorted((tmp_path / "a").iterdir()):
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()

    def test_penalties_and_bad_data(self, tmp_path):
        cfg = self.small(penalties=["huber", "squared"], train_counts=[40], baseline=False,
                         bad_data=[{"mode": "over_three", "count": 2}])
        reports = run_experiment(cfg, tmp_path)
        assert set(reports) == {"n40_huber", "n40_squared"}
        assert reports["n40_huber"].mean < reports["n40_squared"].mean

    def test_shipped_configs(self):
        t1 = load_config("table1_22bus")
        assert t1.train_counts == (100, 300, 600) and t1.test_count == 900
        f4 = load_config("fig4_baddata")
        assert set(f4.penalties) == {"huber", "squared"}
        assert sum(n for _, n in f4.bad_data) == 5

    def test_shipped_table1_runs(self, tmp_path):
        reports = run_experiment(load_config("table1_22bus"), tmp_path)
        for tag in ("n100_squared", "n300_squared", "n600_squared"):
            assert 1e-6 <= reports[tag].mean <= 1e-3
        assert (tmp_path / "table1_22bus_n600_squared_stats.csv").exists()

    @pytest.mark.parametrize("doc, exc", [
        ({"feeder": "chain3"}, ValueError),
        ({"name": "x", "feeder": "chain3", "colour": 1}, ValueError),
    ])
    def test_config_validation(self, doc, exc):
        with pytest.raises(exc):
            ExperimentConfig.from_document(doc)

    def test_config_from_path(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"name": "p", "feeder": "two_bus"}))
        assert load_config(path).feeder == "two_bus"
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "missing.json")
