import math

import numpy as np
import pytest
import scipy.optimize
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import feeder, feeder_doc, trained_model
from oracles import branch_current_magnitudes, dense_admittance, pcc_reactive
from hybridlpf import qrange
from hybridlpf.linear import effective_anchor_voltage, real_coefficients
from hybridlpf.qrange import (NodeLimits, OperationalLimits, accurate_interval,
                              branch_currents, build_constraints, check_certificate,
                              limit_violations, limits_from_document, load_limits,
                              polyhedron_for_model, project_interval_fme,
                              project_interval_lp, shipped_limits_path)

NAME = "qrange5"


def net():
    return feeder(NAME)


def limits():
    return load_limits(shipped_limits_path(NAME), net())


def v_hat():
    model = trained_model(NAME)
    return effective_anchor_voltage(model.mu, model.anchors)


def poly(voltage_form="tangent", power_form="model", lim=None):
    vh = v_hat()
    coeffs = real_coefficients(net().system, net().v0, vh)
    return build_constraints(net(), coeffs, vh, lim or limits(), voltage_form, power_form)


def random_v(seed):
    rng = np.random.default_rng(seed)
    n = net().system.size
    return rng.uniform(0.9, 1.1, n) * np.exp(1j * rng.uniform(-0.1, 0.1, n))


def to_x(v):
    x = np.empty(2 * v.size)
    x[0::2], x[1::2] = v.real, v.imag
    return x


def row(p, label):
    k = p.labels.index(label)
    return p.a_sys[k], p.b_sys[k]


class TestLimits:
    def test_shipped_file(self):
        lim = limits()
        assert lim.nodes["2"].p_min == lim.nodes["2"].p_max == -0.1
        assert lim.nodes["4"].v_max == 1.03
        assert lim.branches["1-2"] == 1.2

    def test_null_means_unbounded(self):
        doc = {"node_defaults": dict.fromkeys(qrange.NODE_KEYS),
               "branch_defaults": {"i_max": None}}
        lim = limits_from_document(doc, net())
        assert lim.nodes["3"].v_max == math.inf and lim.nodes["3"].q_min == -math.inf
        assert lim.branches["2-3"] == math.inf

    def test_missing_key(self):
        doc = {"node_defaults": {"v_min": 0.9}, "branch_defaults": {"i_max": 1.0}}
        with pytest.raises(ValueError, match="missing limit"):
            limits_from_document(doc, net())

    @pytest.mark.parametrize("doc, match", [
        ({"nodes": {"1": {}}}, "unknown or slack"),
        ({"branches": {"9-9": {}}}, "unknown branch"),
        ({"extras": {}}, "unknown limits keys"),
    ])
    def test_bad_documents(self, doc, match):
        with pytest.raises(ValueError, match=match):
            limits_from_document(doc, net())

    @pytest.mark.parametrize("kw", [{"v_min": 1.1, "v_max": 1.0}, {"v_min": 0.0},
                                    {"q_min": 1.0, "q_max": -1.0}])
    def test_node_limit_validation(self, kw):
        with pytest.raises(ValueError):
            NodeLimits(**kw)

    def test_negative_current_limit(self):
        with pytest.raises(ValueError):
            OperationalLimits({}, {"1-2": -1.0})


class TestRows:
    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_objective_is_exact_pcc_reactive_power(self, seed):
        p = poly()
        y_full, _ = dense_admittance(feeder_doc(NAME))
        v = random_v(seed)
        assert p.q1(to_x(v)) == pytest.approx(pcc_reactive(y_full, net().v0, v), abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_model_power_form(self, seed):
        p = poly()
        y_full, _ = dense_admittance(feeder_doc(NAME))
        v = random_v(seed)
        i = y_full[1:, :1] @ net().v0 + y_full[1:, 1:] @ v
        np.testing.assert_allclose(p.injections(to_x(v)), v_hat() * np.conj(i), atol=1e-12)

    def test_printed_power_form(self):
        p = poly(power_form="printed")
        vh = v_hat()
        i_tilde = net().system.yl0 @ net().v0 + net().system.yll @ vh
        v = random_v(3)
        np.testing.assert_allclose(p.injections(to_x(v)), v * np.conj(i_tilde), atol=1e-12)

    @pytest.mark.parametrize("form", ["tangent", "printed"])
    def test_voltage_rows(self, form):
        p = poly(voltage_form=form)
        vh = v_hat()
        v = random_v(5)
        x = to_x(v)
        for nid in ("2", "3", "4", "5"):
            k = net().system.position(nid, "a")
            a, b = row(p, ("v", nid, "max"))
            proxy = 1.03 ** 2 - (b - a @ x)
            if form == "tangent":
                ref = 2 * (v[k] * np.conj(vh[k])).real - abs(vh[k]) ** 2
            else:
                ref = (v[k] * np.conj(vh[k])).real
            assert proxy == pytest.approx(ref, abs=1e-12)
            a_lo, b_lo = row(p, ("v", nid, "min"))
            assert -(a_lo @ x) + b_lo + 0.975 ** 2 == pytest.approx(ref, abs=1e-12)

    def test_tangent_current_rows(self):
        p = poly()
        vh = v_hat()
        v = random_v(7)
        x = to_x(v)
        v0 = net().v0[0]
        full = dict(zip([("1", "a")] + list(net().system.index), np.r_[v0, vh]))
        fullv = dict(zip([("1", "a")] + list(net().system.index), np.r_[v0, v]))
        for br in net().branches:
            y2 = abs(br.y_series[0, 0]) ** 2
            dh = full[(br.from_node, "a")] - full[(br.to_node, "a")]
            d = fullv[(br.from_node, "a")] - fullv[(br.to_node, "a")]
            a, b = row(p, ("i", br.id, "max"))
            proxy = 1.2 ** 2 - (b - a @ x)
            assert proxy == pytest.approx(y2 * (2 * (d * np.conj(dh)).real - abs(dh) ** 2),
                                          abs=1e-10)

    def test_tangent_is_exact_at_expansion_point(self):
        p = poly()
        vh = v_hat()
        x = to_x(vh)
        exact_i = branch_currents(net(), vh)
        for nid in ("2", "5"):
            a, b = row(p, ("v", nid, "max"))
            k = net().system.position(nid, "a")
            assert 1.03 ** 2 - (b - a @ x) == pytest.approx(abs(vh[k]) ** 2, abs=1e-12)
        for bid, mag in exact_i.items():
            a, b = row(p, ("i", bid, "max"))
            assert 1.2 ** 2 - (b - a @ x) == pytest.approx(mag ** 2, abs=1e-10)

    def test_fixed_powers_become_two_rows(self):
        p = poly()
        assert ("p", "2", "max") in p.labels and ("p", "2", "min") in p.labels
        a1, b1 = row(p, ("p", "2", "max"))
        a2, b2 = row(p, ("p", "2", "min"))
        np.testing.assert_array_equal(a1, -a2)
        assert b1 == pytest.approx(-b2, abs=1e-15)

    def test_unbounded_limits_drop_rows(self):
        p = poly(lim=OperationalLimits.unbounded(net()))
        assert all(lab[0] == "i" and lab[2] == "min" for lab in p.labels)

    def test_requires_single_phase(self):
        other = feeder("ieee13_zip")
        lim = OperationalLimits.unbounded(other)
        vh = other.flat_voltage()
        with pytest.raises(ValueError, match="single-phase"):
            build_constraints(other, real_coefficients(other.system, other.v0, vh), vh, lim)

    def test_missing_node_limits(self):
        lim = limits()
        partial = OperationalLimits({k: v for k, v in lim.nodes.items() if k != "3"},
                                    lim.branches)
        with pytest.raises(ValueError, match="no limits"):
            poly(lim=partial)

    @pytest.mark.parametrize("kw", [{"voltage_form": "secant"}, {"power_form": "exact"}])
    def test_form_names(self, kw):
        vh = v_hat()
        coeffs = real_coefficients(net().system, net().v0, vh)
        with pytest.raises(ValueError):
            build_constraints(net(), coeffs, vh, limits(), **kw)


class TestProjection:
    def test_lp_matches_linprog(self):
        p = poly()
        res = project_interval_lp(p)
        ref_lo = scipy.optimize.linprog(p.objective, A_ub=p.a_sys, b_ub=p.b_sys,
                                        bounds=[(None, None)] * p.n_vars, method="highs")
        ref_hi = scipy.optimize.linprog(-p.objective, A_ub=p.a_sys, b_ub=p.b_sys,
                                        bounds=[(None, None)] * p.n_vars, method="highs")
        assert res.q_lo == pytest.approx(ref_lo.fun + p.offset, abs=1e-9)
        assert res.q_hi == pytest.approx(-ref_hi.fun + p.offset, abs=1e-9)

    @pytest.mark.parametrize("form", ["tangent", "printed"])
    def test_fme_matches_lp(self, form):
        p = poly(voltage_form=form)
        lp = project_interval_lp(p)
        fm = project_interval_fme(p)
        assert fm.status == lp.status == "bounded"
        assert abs(fm.q_lo - lp.q_lo) <= 1e-9 and abs(fm.q_hi - lp.q_hi) <= 1e-9
        # back-substitution round-off, relative to the row scale
        scale = np.max(np.abs(p.a_sys))
        assert p.max_violation(fm.x_lo) <= 1e-9 * scale
        assert p.max_violation(fm.x_hi) <= 1e-9 * scale

    def test_certificates_attain_the_interval(self):
        p = poly()
        res = project_interval_lp(p)
        assert res.q_lo < res.q_hi
        assert p.q1(res.x_lo) == pytest.approx(res.q_lo)
        assert p.max_violation(res.x_lo) <= 1e-9 and p.max_violation(res.x_hi) <= 1e-9

    def test_printed_power_form_is_infeasible_with_fixed_loads(self):
        assert project_interval_lp(poly(power_form="printed")).status == "infeasible"

    def test_without_limits_is_unbounded(self):
        res = project_interval_lp(poly(lim=OperationalLimits.unbounded(net())))
        assert res.status == "unbounded"
        assert res.ray is not None

    def test_helper_matches_manual_build(self):
        p1 = polyhedron_for_model(net(), trained_model(NAME), limits())
        p2 = poly()
        np.testing.assert_allclose(p1.a_sys, p2.a_sys)
        np.testing.assert_allclose(p1.b_sys, p2.b_sys)


class TestNonlinearChecks:
    def test_branch_currents_match_oracle(self):
        v = random_v(11)
        _, order = dense_admittance(feeder_doc(NAME))
        ref = branch_current_magnitudes(feeder_doc(NAME), net().v0, v, order)
        got = branch_currents(net(), v)
        for bid, mag in ref.items():
            assert got[bid] == pytest.approx(mag, rel=1e-13)

    def test_limit_violation_values(self):
        n = net()
        v = np.full(n.system.size, 1.05 + 0j)
        viol = limit_violations(n, limits(), v)
        assert viol[("v", "3", "max")] == pytest.approx(1.05 / 1.03 - 1)
        assert viol[("v", "3", "min")] == pytest.approx(1 - 1.05 / 0.975)
        s = np.full(n.system.size, -0.1 - 0.03j)
        viol = limit_violations(n, limits(), v, s)
        assert viol[("p", "2", "max")] == pytest.approx(0.0, abs=1e-15)
        assert viol[("q", "3", "max")] == pytest.approx((-0.03 + 0.1) / 0.1)

    def test_certificates_pass_nonlinear_check(self):
        p = poly()
        res = project_interval_lp(p)
        for x in (res.x_lo, res.x_hi):
            worst, viol, v = check_certificate(net(), limits(), p, x)
            assert worst <= 0.02

    def test_accurate_endpoints_are_feasible_operating_points(self):
        lim = limits()
        res = accurate_interval(net(), lim)
        y_full, _ = dense_admittance(feeder_doc(NAME))
        for x, q in ((res.x_lo, res.q_lo), (res.x_hi, res.q_hi)):
            v = x[0::2] + 1j * x[1::2]
            assert max(limit_violations(net(), lim, v).values()) <= 1e-9
            assert pcc_reactive(y_full, net().v0, v) == pytest.approx(q, abs=1e-10)
            # the implied injections respect the power box
            i = y_full[1:, :1] @ net().v0 + y_full[1:, 1:] @ v
            s = v * np.conj(i)
            viol = limit_violations(net(), lim, v, s)
            assert max(viol.values()) <= 1e-8
        assert res.method == "slp-bisection" and res.q_lo < res.q_hi
