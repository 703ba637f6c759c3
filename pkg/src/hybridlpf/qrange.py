"""Reactive-power support range at the point of common coupling (PCC).

The operational region of a single-phase modeled feeder is written as a
polyhedron ``A x <= b`` over ``x = (v_re, v_im)`` of the non-slack nodes.
Voltage-magnitude and branch-current limits are linearized around an
expansion voltage; nodal powers come from a linear power model. The PCC
reactive injection ``q1 = Im(v1 conj(y11 v1 + y1L vL))`` is exactly linear in
``x`` because the PCC voltage is fixed. The support range is the projection of
the polyhedron onto ``q1``.

Two power forms are available:

``"printed"``
    fixed approximate current: ``p + jq = v conj(i_tilde)`` with
    ``i_tilde = yl0 v0 + yll v_hat``.
``"model"``
    the trained linear model solved for the injection:
    ``p + jq = v_hat conj(yl0 v0 + yll v)``.

and two voltage forms, ``"printed"`` (``|v|^2 ~ Re(v) v_hat_re + Im(v) v_hat_im``)
and ``"tangent"`` (``|v|^2 ~ 2 Re(v conj(v_hat)) - |v_hat|^2``). Branch-current
magnitudes follow the voltage form.

The defaults are ``"tangent"`` and ``"model"``. With a fixed current every
fixed-power node has its voltage pinned to ``s / conj(i_tilde)`` and the
network coupling disappears, so the printed power form is usually infeasible
once loads are fixed; the printed voltage form is exact only at ``v_hat`` and
has half the true slope.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import defaults as D
from . import fme
from .errors import InfeasibleError, NonConvergence
from .linear import effective_anchor_voltage, real_coefficients
from .lp import solve_lp
from .oracle import SolveOptions, solve_fixed_point

NODE_KEYS = ("v_min", "v_max", "p_min", "p_max", "q_min", "q_max")
VOLTAGE_FORMS = ("printed", "tangent")
POWER_FORMS = ("printed", "model")


# --------------------------------------------------------------------------
# limits

@dataclass(frozen=True)
class NodeLimits:
    """Per-node bounds in p.u.; an infinite bound drops its row."""

    v_min: float = -math.inf
    v_max: float = math.inf
    p_min: float = -math.inf
    p_max: float = math.inf
    q_min: float = -math.inf
    q_max: float = math.inf

    def __post_init__(self):
        for lo, hi in (("v_min", "v_max"), ("p_min", "p_max"), ("q_min", "q_max")):
            if getattr(self, lo) > getattr(self, hi):
                raise ValueError(f"{lo} exceeds {hi}")
        if math.isfinite(self.v_min) and self.v_min <= 0:
            raise ValueError("v_min must be positive when given")


@dataclass(frozen=True)
class OperationalLimits:
    nodes: dict
    branches: dict = field(default_factory=dict)

    def __post_init__(self):
        for bid, i_max in self.branches.items():
            if not i_max >= 0:
                raise ValueError(f"branch {bid}: i_max must be non-negative")

    @classmethod
    def unbounded(cls, net):
        return cls({n.id: NodeLimits() for n in net.nodes if n.kind != "slack"},
                   {b.id: math.inf for b in net.branches})


def _bound(value, key, where):
    if value is None:
        return -math.inf if key.endswith("_min") else math.inf
    if isinstance(value, str):
        value = float(value)
    if not isinstance(value, (int, float)):
        raise ValueError(f"{where}: {key} must be a number or null")
    return float(value)


def limits_from_document(doc, net):
    """Build limits from a parsed limits document.

    ``null`` means unbounded. Entries missing from ``nodes``/``branches`` fall
    back to ``node_defaults``/``branch_defaults``; a key found in neither is
    an error.
    """
    allowed = {"nodes", "branches", "node_defaults", "branch_defaults"}
    extra = set(doc) - allowed
    if extra:
        raise ValueError(f"unknown limits keys: {sorted(extra)}")
    node_def = doc.get("node_defaults", {})
    branch_def = doc.get("branch_defaults", {})
    nodes_doc = doc.get("nodes", {})
    branches_doc = doc.get("branches", {})
    known_nodes = {n.id for n in net.nodes if n.kind != "slack"}
    known_branches = {b.id for b in net.branches}
    for nid in nodes_doc:
        if nid not in known_nodes:
            raise ValueError(f"limits name unknown or slack node {nid!r}")
    for bid in branches_doc:
        if bid not in known_branches:
            raise ValueError(f"limits name unknown branch {bid!r}")

    nodes = {}
    for nid in sorted(known_nodes):
        entry = nodes_doc.get(nid, {})
        bad = set(entry) - set(NODE_KEYS)
        if bad:
            raise ValueError(f"node {nid}: unknown limit keys {sorted(bad)}")
        vals = {}
        for key in NODE_KEYS:
            if key in entry:
                vals[key] = _bound(entry[key], key, f"node {nid}")
            elif key in node_def:
                vals[key] = _bound(node_def[key], key, "node_defaults")
            else:
                raise ValueError(f"node {nid}: missing limit {key}")
        nodes[nid] = NodeLimits(**vals)
    branches = {}
    for bid in sorted(known_branches):
        entry = branches_doc.get(bid, {})
        if set(entry) - {"i_max"}:
            raise ValueError(f"branch {bid}: only i_max is accepted")
        if "i_max" in entry:
            branches[bid] = _bound(entry["i_max"], "i_max", f"branch {bid}")
        elif "i_max" in branch_def:
            branches[bid] = _bound(branch_def["i_max"], "i_max", "branch_defaults")
        else:
            raise ValueError(f"branch {bid}: missing limit i_max")
    return OperationalLimits(nodes, branches)


def load_limits(path, net):
    return limits_from_document(json.loads(Path(path).read_text()), net)


def shipped_limits_path(name):
    return Path(__file__).with_name("feeders") / f"{name}.limits.json"


# --------------------------------------------------------------------------
# polyhedron

@dataclass(frozen=True, eq=False)
class Polyhedron:
    """``a_sys x <= b_sys`` with ``q1 = objective @ x + offset``.

    ``p_map``/``q_map`` give the nodal powers of the power form used,
    ``p = p_map[0] @ x + p_map[1]``.
    """

    a_sys: np.ndarray
    b_sys: np.ndarray
    var_index: dict
    objective: np.ndarray
    offset: float
    labels: tuple = ()
    p_map: tuple = ()
    q_map: tuple = ()

    @property
    def n_vars(self):
        return self.a_sys.shape[1]

    def q1(self, x):
        return float(self.objective @ x + self.offset)

    def max_violation(self, x):
        if len(self.b_sys) == 0:
            return 0.0
        return float(np.max(self.a_sys @ x - self.b_sys))

    def injections(self, x):
        p = self.p_map[0] @ x + self.p_map[1]
        q = self.q_map[0] @ x + self.q_map[1]
        return p + 1j * q


@dataclass(frozen=True, eq=False)
class RangeResult:
    q_lo: float
    q_hi: float
    x_lo: np.ndarray | None
    x_hi: np.ndarray | None
    status: str  # "bounded" | "infeasible" | "unbounded"
    method: str = "lp"
    ray: np.ndarray | None = None
    seconds: float = 0.0
    iterations: int = 0

    @property
    def width(self):
        return self.q_hi - self.q_lo


def _require_single_phase(net):
    if not net.is_single_phase:
        raise ValueError("support-range evaluation needs a single-phase network model")


def _to_x(v):
    x = np.empty(2 * v.size)
    x[0::2], x[1::2] = v.real, v.imag
    return x


def _to_v(x):
    return x[0::2] + 1j * x[1::2]


def _fixed_current(i):
    """``s = v conj(i)`` with ``i`` fixed: returns (P, Q) over x."""
    n = i.size
    P = np.zeros((n, 2 * n))
    Q = np.zeros((n, 2 * n))
    k = np.arange(n)
    P[k, 2 * k], P[k, 2 * k + 1] = i.real, i.imag
    Q[k, 2 * k], Q[k, 2 * k + 1] = -i.imag, i.real
    return P, Q


def _fixed_voltage(sys, v0, v):
    """``s = v conj(yl0 v0 + yll x)`` with ``v`` fixed: returns (P, Q, s_const)."""
    alpha = v[:, None] * np.conj(sys.yll)
    n = v.size
    P = np.zeros((n, 2 * n))
    Q = np.zeros((n, 2 * n))
    P[:, 0::2], P[:, 1::2] = alpha.real, alpha.imag
    Q[:, 0::2], Q[:, 1::2] = alpha.imag, -alpha.real
    s_const = v * np.conj(sys.yl0 @ v0)
    return P, Q, s_const


def _pcc_objective(net):
    sys = net.system
    v1 = net.v0[0]
    kappa = v1 * np.conj(sys.y0l[0])
    c = np.empty(2 * sys.size)
    c[0::2], c[1::2] = kappa.imag, -kappa.real
    offset = float(np.imag(v1 * np.conj(sys.y00[0, 0] * v1)))
    return c, offset


def _branch_terms(net):
    """(branch id, from position or None, to position or None, |y|^2) per branch."""
    sys = net.system
    out = []
    for br in net.branches:
        y = np.asarray(br.y_series, dtype=complex).reshape(-1)
        if y.size != 1:
            raise ValueError(f"branch {br.id} is not single-phase")
        ends = []
        for nid in (br.from_node, br.to_node):
            ends.append(None if nid == net.slack.id else sys.position(nid, net.node_by_id[nid].phases[0]))
        out.append((br.id, ends[0], ends[1], float(abs(y[0]) ** 2)))
    return out


class _RowBuilder:
    def __init__(self, n):
        self.n = n
        self.a, self.b, self.labels = [], [], []

    def upper(self, row, rhs, label):
        if math.isfinite(rhs):
            self.a.append(row)
            self.b.append(rhs)
            self.labels.append(label)

    def between(self, row, const, lo, hi, label):
        """``lo <= row @ x + const <= hi``."""
        self.upper(row, hi - const, label + ("max",))
        self.upper(-row, -(lo - const), label + ("min",))

    def arrays(self):
        if not self.a:
            return np.zeros((0, self.n)), np.zeros(0)
        return np.array(self.a), np.array(self.b)


def _magnitude_rows(builder, net, v_fix, limits, tangent):
    """Voltage and branch-current rows linearized around ``v_fix`` (load nodes)."""
    n = v_fix.size
    for nid, lim in limits.nodes.items():
        k = net.system.position(nid, net.node_by_id[nid].phases[0])
        row = np.zeros(2 * n)
        if tangent:
            row[2 * k], row[2 * k + 1] = 2 * v_fix[k].real, 2 * v_fix[k].imag
            const = -abs(v_fix[k]) ** 2
        else:
            row[2 * k], row[2 * k + 1] = v_fix[k].real, v_fix[k].imag
            const = 0.0
        vmin2 = lim.v_min ** 2 if math.isfinite(lim.v_min) else -math.inf
        builder.between(row, const, vmin2, lim.v_max ** 2, ("v", nid))

    v0 = net.v0[0]
    for bid, f, t, y2 in _branch_terms(net):
        vf = v0 if f is None else v_fix[f]
        vt = v0 if t is None else v_fix[t]
        dh = vf - vt
        row = np.zeros(2 * n)
        const = 0.0
        # d = v_f - v_t, with a fixed slack end moved into the constant
        for pos, sign in ((f, 1.0), (t, -1.0)):
            if pos is None:
                const += sign * (v0.real * dh.real + v0.imag * dh.imag)
            else:
                row[2 * pos] += sign * dh.real
                row[2 * pos + 1] += sign * dh.imag
        row *= y2
        const *= y2
        # lower row is the printed 0 <= |i|^2 form in both variants
        builder.upper(-row, const, ("i", bid, "min"))
        i_max = limits.branches.get(bid, math.inf)
        if tangent:
            builder.upper(2 * row, i_max ** 2 - (2 * const - y2 * abs(dh) ** 2), ("i", bid, "max"))
        else:
            builder.upper(row, i_max ** 2 - const, ("i", bid, "max"))


def _power_rows(builder, net, limits, P, Q, p_const, q_const):
    for nid, lim in limits.nodes.items():
        k = net.system.position(nid, net.node_by_id[nid].phases[0])
        builder.between(P[k], p_const[k], lim.p_min, lim.p_max, ("p", nid))
        builder.between(Q[k], q_const[k], lim.q_min, lim.q_max, ("q", nid))


def build_constraints(net, coeffs, v_hat_eff, limits, voltage_form=D.VOLTAGE_FORM,
                      power_form=D.POWER_FORM):
    """Linearized operational polyhedron around ``v_hat_eff``.

    ``coeffs`` holds the approximate currents (``linear.real_coefficients``)
    used by the printed power form.
    """
    _require_single_phase(net)
    if voltage_form not in VOLTAGE_FORMS:
        raise ValueError(f"voltage_form must be one of {VOLTAGE_FORMS}")
    if power_form not in POWER_FORMS:
        raise ValueError(f"power_form must be one of {POWER_FORMS}")
    sys = net.system
    n = sys.size
    v_hat = np.asarray(v_hat_eff, dtype=complex)
    if v_hat.shape != (n,):
        raise ValueError(f"v_hat_eff must have {n} entries")
    missing = {node for node, _ in sys.index} - set(limits.nodes)
    if missing:
        raise ValueError(f"no limits for nodes {sorted(missing)}")

    if power_form == "printed":
        P, Q = _fixed_current(coeffs.i_re + 1j * coeffs.i_im)
        s_const = np.zeros(n, dtype=complex)
    else:
        P, Q, s_const = _fixed_voltage(sys, net.v0, v_hat)

    builder = _RowBuilder(2 * n)
    _magnitude_rows(builder, net, v_hat, limits, voltage_form == "tangent")
    _power_rows(builder, net, limits, P, Q, s_const.real, s_const.imag)
    a, b = builder.arrays()
    c, offset = _pcc_objective(net)
    var_index = {node: (2 * k, 2 * k + 1) for k, (node, _) in enumerate(sys.index)}
    return Polyhedron(a, b, var_index, c, offset, tuple(builder.labels),
                      (P, s_const.real), (Q, s_const.imag))


def polyhedron_for_model(net, model, limits, voltage_form=D.VOLTAGE_FORM,
                         power_form=D.POWER_FORM):
    """``build_constraints`` around the trained model's effective anchor voltage."""
    v_hat = effective_anchor_voltage(model.mu, model.anchors)
    coeffs = real_coefficients(net.system, net.v0, v_hat)
    return build_constraints(net, coeffs, v_hat, limits, voltage_form, power_form)


# --------------------------------------------------------------------------
# projection

def project_interval_lp(poly):
    """``[min, max]`` of q1 by two simplex runs."""
    t0 = time.perf_counter()
    lo = solve_lp(poly.objective, poly.a_sys, poly.b_sys)
    if lo.status == "infeasible":
        return RangeResult(math.nan, math.nan, None, None, "infeasible",
                           seconds=time.perf_counter() - t0)
    hi = solve_lp(poly.objective, poly.a_sys, poly.b_sys, maximize=True)
    seconds = time.perf_counter() - t0
    q_lo = -math.inf if lo.status == "unbounded" else poly.q1(lo.x)
    q_hi = math.inf if hi.status == "unbounded" else poly.q1(hi.x)
    ray = lo.ray if lo.status == "unbounded" else hi.ray
    status = "bounded" if lo.status == hi.status == "optimal" else "unbounded"
    return RangeResult(q_lo, q_hi,
                       lo.x if lo.status == "optimal" else None,
                       hi.x if hi.status == "optimal" else None,
                       status, "lp", ray, seconds)


def project_interval_fme(poly, max_variables=fme.MAX_VARIABLES):
    """``[min, max]`` of q1 by Fourier-Motzkin elimination of all x."""
    t0 = time.perf_counter()
    res = fme.project(poly.a_sys, poly.b_sys, poly.objective, poly.offset, max_variables)
    seconds = time.perf_counter() - t0
    return RangeResult(res.lo, res.hi, res.x_lo, res.x_hi, res.status, "fme",
                       seconds=seconds, iterations=res.eliminations)


# --------------------------------------------------------------------------
# nonlinear checks and the accurate evaluation

def branch_currents(net, v_l):
    """Series current magnitude per branch id at load voltages ``v_l``."""
    v0 = net.v0[0]
    out = {}
    for bid, f, t, y2 in _branch_terms(net):
        vf = v0 if f is None else v_l[f]
        vt = v0 if t is None else v_l[t]
        out[bid] = math.sqrt(y2) * abs(vf - vt)
    return out


def limit_violations(net, limits, v_l, s_l=None):
    """Relative violation of every finite limit at an exact operating point.

    Positive values are violations, e.g. ``|v|/v_max - 1``. Power limits are
    checked only when ``s_l`` is given.
    """
    sys = net.system
    out = {}
    for nid, lim in limits.nodes.items():
        k = sys.position(nid, net.node_by_id[nid].phases[0])
        mag = abs(v_l[k])
        if math.isfinite(lim.v_max):
            out[("v", nid, "max")] = mag / lim.v_max - 1.0
        if math.isfinite(lim.v_min):
            out[("v", nid, "min")] = 1.0 - mag / lim.v_min
        if s_l is not None:
            for key, val in (("p", s_l[k].real), ("q", s_l[k].imag)):
                lo, hi = getattr(lim, f"{key}_min"), getattr(lim, f"{key}_max")
                scale = max(abs(lo) if math.isfinite(lo) else 0.0,
                            abs(hi) if math.isfinite(hi) else 0.0, 1e-12)
                if math.isfinite(hi):
                    out[(key, nid, "max")] = (val - hi) / scale
                if math.isfinite(lo):
                    out[(key, nid, "min")] = (lo - val) / scale
    for bid, mag in branch_currents(net, v_l).items():
        i_max = limits.branches.get(bid, math.inf)
        if math.isfinite(i_max):
            out[("i", bid, "max")] = mag / i_max - 1.0 if i_max > 0 else mag
    return out


def check_certificate(net, limits, poly, x, opts=None):
    """Solve the nonlinear oracle at the injections implied by ``x``.

    Returns ``(worst relative violation, violations, voltages)``.
    """
    s = poly.injections(x)
    sol = solve_fixed_point(net.system, net.w, s, opts)
    viol = limit_violations(net, limits, sol.v_l, s)
    worst = max(viol.values()) if viol else 0.0
    return worst, viol, sol.v_l


@dataclass(frozen=True)
class AccurateOptions:
    max_iter: int = D.ACCURATE_MAX_ITER
    tol: float = D.ACCURATE_TOL
    feas_tol: float = D.ACCURATE_FEAS_TOL
    bisection_steps: int = D.ACCURATE_BISECTION_STEPS
    trust_radius: float = D.ACCURATE_TRUST_RADIUS


def _exact_q1(net, v_l, c, offset):
    return float(c @ _to_x(v_l) + offset)


def _slp_extreme(net, limits, s_start, sense, opts, pf_opts):
    """Sequential LP with exact linearization and bisection on the step length."""
    sys = net.system
    c, offset = _pcc_objective(net)
    sign = 1.0 if sense == "max" else -1.0

    def feasible(v, s):
        viol = limit_violations(net, limits, v, None)
        return max(viol.values(), default=0.0) <= opts.feas_tol

    s_k = s_start
    v_k = solve_fixed_point(sys, net.w, s_k, pf_opts).v_l
    if not feasible(v_k, s_k):
        raise InfeasibleError("starting operating point violates the limits")
    q_k = _exact_q1(net, v_k, c, offset)
    radius = opts.trust_radius
    n = sys.size
    iterations = 0
    for iterations in range(1, opts.max_iter + 1):
        i_k = sys.yl0 @ net.v0 + sys.yll @ v_k
        P1, Q1 = _fixed_current(i_k)
        P2, Q2, s_const = _fixed_voltage(sys, net.v0, v_k)
        P, Q = P1 + P2, Q1 + Q2
        const = s_const - v_k * np.conj(i_k)
        builder = _RowBuilder(2 * n)
        _magnitude_rows(builder, net, v_k, limits, tangent=True)
        _power_rows(builder, net, limits, P, Q, const.real, const.imag)
        a, b = builder.arrays()
        x_k = _to_x(v_k)
        box = np.vstack([np.eye(2 * n), -np.eye(2 * n)])
        a = np.vstack([a, box])
        b = np.concatenate([b, x_k + radius, -(x_k - radius)])
        lp = solve_lp(c, a, b, maximize=(sense == "max"))
        if lp.status != "optimal":
            raise InfeasibleError(f"linearized step problem is {lp.status}")
        s_lin = (P @ lp.x + const.real) + 1j * (Q @ lp.x + const.imag)
        # keep the target inside the power box despite round-off
        s_lin = _clip_power(net, limits, s_lin)
        step = s_lin - s_k

        best = None
        lo_a, hi_a = 0.0, 1.0
        for alpha in [1.0] + [None] * opts.bisection_steps:
            a_try = hi_a if alpha is not None else 0.5 * (lo_a + hi_a)
            try:
                v_try = solve_fixed_point(sys, net.w, s_k + a_try * step, pf_opts).v_l
                ok = feasible(v_try, None)
            except NonConvergence:
                ok = False
            if ok:
                best = (a_try, v_try)
                if alpha is not None:
                    break
                lo_a = a_try
            else:
                hi_a = a_try
        if best is None or best[0] == 0.0:
            radius *= 0.5
            if radius < 1e-12:
                break
            continue
        alpha, v_new = best
        q_new = _exact_q1(net, v_new, c, offset)
        gain = sign * (q_new - q_k)
        s_k, v_k, q_k = s_k + alpha * step, v_new, q_new
        radius = min(2 * radius, 1.0) if alpha == 1.0 else max(radius * 0.5, 1e-9)
        if 0 <= gain <= opts.tol * max(1.0, abs(q_k)) and alpha == 1.0:
            break
    return q_k, v_k, iterations


def _clip_power(net, limits, s):
    out = s.copy()
    for nid, lim in limits.nodes.items():
        k = net.system.position(nid, net.node_by_id[nid].phases[0])
        out[k] = (min(max(s[k].real, lim.p_min), lim.p_max)
                  + 1j * min(max(s[k].imag, lim.q_min), lim.q_max))
    return out


def _start_injections(net, limits):
    sys = net.system
    s = np.zeros(sys.size, dtype=complex)
    for nid, lim in limits.nodes.items():
        k = sys.position(nid, net.node_by_id[nid].phases[0])
        parts = []
        for lo, hi in ((lim.p_min, lim.p_max), (lim.q_min, lim.q_max)):
            if math.isfinite(lo) and math.isfinite(hi):
                parts.append(0.5 * (lo + hi))
            else:
                parts.append(min(max(0.0, lo), hi))
        s[k] = parts[0] + 1j * parts[1]
    return s


def accurate_interval(net, limits, opts=None, pf_opts=None):
    """Nonlinear support range by sequential LP with bisection-refined steps.

    Every iterate is an exact power-flow solution that satisfies all limits,
    so the returned interval is attainable.
    """
    _require_single_phase(net)
    opts = opts or AccurateOptions()
    pf_opts = pf_opts or SolveOptions()
    t0 = time.perf_counter()
    s0 = _start_injections(net, limits)
    q_lo, v_lo, it_lo = _slp_extreme(net, limits, s0, "min", opts, pf_opts)
    q_hi, v_hi, it_hi = _slp_extreme(net, limits, s0, "max", opts, pf_opts)
    return RangeResult(q_lo, q_hi, _to_x(v_lo), _to_x(v_hi), "bounded", "slp-bisection",
                       seconds=time.perf_counter() - t0, iterations=it_lo + it_hi)
