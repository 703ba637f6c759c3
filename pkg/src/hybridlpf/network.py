"""Feeder data model and three-phase nodal admittance assembly.

Only phases that physically exist at a node get a row/column in the
admittance matrix. Padding missing phases with zeros would make the load
block singular.
"""

from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg

from .defaults import COND_LIMIT
from .errors import FeederError, SingularSystem
from .loads import ZipLoadSpec

PHASES = "abc"
BALANCED_SLACK = {
    "a": 1.0 + 0j,
    "b": complex(np.cos(-2 * np.pi / 3), np.sin(-2 * np.pi / 3)),
    "c": complex(np.cos(2 * np.pi / 3), np.sin(2 * np.pi / 3)),
}


def normalize_phases(phases):
    """Return ``phases`` as an ordered string over ``abc`` without repeats."""
    phases = "".join(phases).lower()
    if not phases or any(p not in PHASES for p in phases) or len(set(phases)) != len(phases):
        raise FeederError(f"invalid phase set {phases!r}")
    return "".join(p for p in PHASES if p in phases)


@dataclass(frozen=True, eq=False)
class NodeLoad:
    """Load/generation attached to one node, one entry per present phase."""

    s_nom: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    v_nom: np.ndarray

    @classmethod
    def constant_power(cls, s_nom):
        s_nom = np.atleast_1d(np.asarray(s_nom, dtype=complex))
        n = s_nom.size
        return cls(s_nom, np.zeros(n), np.zeros(n), np.ones(n), np.ones(n))


@dataclass(frozen=True, eq=False)
class NodeSpec:
    id: str
    kind: str = "pq"
    phases: str = "abc"
    v_slack: np.ndarray | None = None
    load: NodeLoad | None = None

    def __post_init__(self):
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "phases", normalize_phases(self.phases))
        if self.kind not in ("slack", "pq"):
            raise FeederError(f"node {self.id}: kind must be 'slack' or 'pq'")
        if self.kind == "slack":
            if self.v_slack is None:
                v = np.array([BALANCED_SLACK[p] for p in self.phases])
            else:
                v = np.atleast_1d(np.asarray(self.v_slack, dtype=complex))
            if v.size != len(self.phases):
                raise FeederError(f"node {self.id}: v_slack needs one entry per phase")
            object.__setattr__(self, "v_slack", v)
        elif self.v_slack is not None:
            raise FeederError(f"node {self.id}: only the slack node carries v_slack")
        if self.load is not None:
            if self.kind == "slack":
                raise FeederError(f"node {self.id}: the slack node cannot carry a load")
            if self.load.s_nom.size != len(self.phases):
                raise FeederError(f"node {self.id}: load needs one entry per phase")


@dataclass(frozen=True, eq=False)
class BranchSpec:
    """Series element between two nodes.

    ``y_series`` is indexed by ``phases``, which defaults to the phases shared
    by both terminals.
    """

    from_node: str
    to_node: str
    y_series: np.ndarray
    y_shunt_from: np.ndarray | None = None
    y_shunt_to: np.ndarray | None = None
    phases: str | None = None
    id: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "from_node", str(self.from_node))
        object.__setattr__(self, "to_node", str(self.to_node))
        y = np.atleast_2d(np.asarray(self.y_series, dtype=complex))
        object.__setattr__(self, "y_series", y)
        for name in ("y_shunt_from", "y_shunt_to"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, np.atleast_2d(np.asarray(val, dtype=complex)))
        if self.phases is not None:
            object.__setattr__(self, "phases", normalize_phases(self.phases))
        if self.id is None:
            object.__setattr__(self, "id", f"{self.from_node}-{self.to_node}")


@dataclass(frozen=True, eq=False)
class AdmittanceSystem:
    """Nodal admittance matrix split into slack (0) and load (L) blocks.

    ``index`` lists the ``(node, phase)`` pair of every load row in order,
    ``slack_index`` the same for the slack rows.
    """

    y00: np.ndarray
    y0l: np.ndarray
    yl0: np.ndarray
    yll: np.ndarray
    index: tuple
    slack_index: tuple

    @cached_property
    def positions(self):
        return {key: k for k, key in enumerate(self.index)}

    @cached_property
    def lu(self):
        return scipy.linalg.lu_factor(self.yll, check_finite=False)

    @property
    def size(self):
        return len(self.index)

    def position(self, node, phase):
        try:
            return self.positions[(str(node), phase)]
        except KeyError:
            raise KeyError(f"no load row for node {node} phase {phase}") from None

    def solve_ll(self, rhs):
        """Return ``yll^-1 @ rhs`` using the cached LU factorization."""
        return scipy.linalg.lu_solve(self.lu, rhs, check_finite=False)

    def full(self):
        return np.block([[self.y00, self.y0l], [self.yl0, self.yll]])

    def currents(self, v0, v_l):
        """Injected currents at the load rows, ``yl0 v0 + yll v_l``."""
        return self.yl0 @ v0 + self.yll @ v_l


def _check_connected(nodes, branches, slack_id):
    adj = {n.id: set() for n in nodes}
    for br in branches:
        adj[br.from_node].add(br.to_node)
        adj[br.to_node].add(br.from_node)
    seen = {slack_id}
    queue = deque([slack_id])
    while queue:
        for nxt in adj[queue.popleft()]:
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    missing = sorted(set(adj) - seen)
    if missing:
        raise FeederError(f"disconnected graph: unreachable node(s) {missing}")


def _branch_phases(br, by_id):
    f, t = by_id[br.from_node], by_id[br.to_node]
    shared = "".join(p for p in PHASES if p in f.phases and p in t.phases)
    if br.phases is None:
        phases = shared
    else:
        phases = br.phases
        absent = [p for p in phases if p not in shared]
        if absent:
            raise FeederError(
                f"branch {br.id}: phase(s) {''.join(absent)} absent at a terminal")
    if not phases:
        raise FeederError(f"branch {br.id}: terminals share no phase")
    k = len(phases)
    if br.y_series.shape != (k, k):
        raise FeederError(f"branch {br.id}: y_series must be {k}x{k}")
    for name in ("y_shunt_from", "y_shunt_to"):
        val = getattr(br, name)
        if val is not None and val.shape != (k, k):
            raise FeederError(f"branch {br.id}: {name} must be {k}x{k}")
    if np.linalg.matrix_rank(br.y_series) < k:
        raise FeederError(f"branch {br.id}: singular series admittance")
    return phases


def assemble_admittance(nodes, branches):
    """Assemble and partition the nodal admittance matrix.

    Parameters
    ----------
    nodes : sequence of NodeSpec
        Exactly one node must have ``kind == "slack"``.
    branches : sequence of BranchSpec

    Returns
    -------
    AdmittanceSystem
    """
    nodes = list(nodes)
    by_id = {}
    for n in nodes:
        if n.id in by_id:
            raise FeederError(f"duplicate node id {n.id}")
        by_id[n.id] = n
    slacks = [n for n in nodes if n.kind == "slack"]
    if len(slacks) != 1:
        raise FeederError(f"exactly one slack node required, found {len(slacks)}")
    slack = slacks[0]
    for br in branches:
        for end in (br.from_node, br.to_node):
            if end not in by_id:
                raise FeederError(f"branch {br.id}: unknown node {end}")
        if br.from_node == br.to_node:
            raise FeederError(f"branch {br.id}: self loop")
    _check_connected(nodes, branches, slack.id)

    order = [(slack.id, p) for p in slack.phases]
    for n in nodes:
        if n.kind != "slack":
            order.extend((n.id, p) for p in n.phases)
    pos = {key: k for k, key in enumerate(order)}
    y = np.zeros((len(order), len(order)), dtype=complex)
    for br in branches:
        phases = _branch_phases(br, by_id)
        fi = [pos[(br.from_node, p)] for p in phases]
        ti = [pos[(br.to_node, p)] for p in phases]
        ys = br.y_series
        y[np.ix_(fi, fi)] += ys
        y[np.ix_(ti, ti)] += ys
        y[np.ix_(fi, ti)] -= ys
        y[np.ix_(ti, fi)] -= ys
        if br.y_shunt_from is not None:
            y[np.ix_(fi, fi)] += br.y_shunt_from
        if br.y_shunt_to is not None:
            y[np.ix_(ti, ti)] += br.y_shunt_to

    ns = len(slack.phases)
    yll = y[ns:, ns:]
    if yll.size == 0:
        raise FeederError("network has no load nodes")
    if not np.all(np.isfinite(yll)) or np.linalg.cond(yll) > COND_LIMIT:
        raise SingularSystem("load-node admittance block is singular")
    return AdmittanceSystem(
        y00=y[:ns, :ns].copy(),
        y0l=y[:ns, ns:].copy(),
        yl0=y[ns:, :ns].copy(),
        yll=yll.copy(),
        index=tuple(order[ns:]),
        slack_index=tuple(order[:ns]),
    )


def compute_w(sys, v0):
    """Zero-injection voltage ``w = -yll^-1 yl0 v0``."""
    v0 = np.asarray(v0, dtype=complex)
    if v0.shape != (sys.y00.shape[0],):
        raise ValueError(f"v0 must have {sys.y00.shape[0]} entries")
    return -sys.solve_ll(sys.yl0 @ v0)


@dataclass(frozen=True, eq=False)
class Network:
    """A feeder: nodes, branches and the per-unit base they are expressed on."""

    nodes: tuple
    branches: tuple
    base_mva: float = 1.0
    name: str = ""
    source: dict | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "branches", tuple(self.branches))

    @cached_property
    def system(self):
        return assemble_admittance(self.nodes, self.branches)

    @cached_property
    def slack(self):
        return next(n for n in self.nodes if n.kind == "slack")

    @property
    def v0(self):
        return self.slack.v_slack

    @cached_property
    def w(self):
        return compute_w(self.system, self.v0)

    @cached_property
    def node_by_id(self):
        return {n.id: n for n in self.nodes}

    @cached_property
    def zip_spec(self):
        """System-wide ZipLoadSpec aligned with ``system.index``."""
        parts = {k: [] for k in ("a", "b", "c", "s_nom", "v_nom")}
        for node in self.nodes:
            if node.kind == "slack":
                continue
            load = node.load or NodeLoad.constant_power(np.zeros(len(node.phases)))
            for k in parts:
                parts[k].extend(getattr(load, k))
        return ZipLoadSpec(parts["a"], parts["b"], parts["c"], parts["s_nom"], parts["v_nom"])

    @property
    def s_nom(self):
        return self.zip_spec.s_nom

    @property
    def has_zip(self):
        return not self.zip_spec.is_constant_power

    @property
    def is_single_phase(self):
        return all(len(n.phases) == 1 for n in self.nodes)

    def flat_voltage(self):
        """Nominal flat profile: each load row takes its phase's slack voltage."""
        slack_v = dict(zip(self.slack.phases, self.v0))
        return np.array([slack_v.get(p, BALANCED_SLACK[p]) for _, p in self.system.index])

    def branch(self, branch_id):
        for br in self.branches:
            if br.id == branch_id:
                return br
        raise KeyError(branch_id)

    def fingerprint(self):
        """Stable hash of the feeder description."""
        payload = self.source if self.source is not None else to_document(self)
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


# --------------------------------------------------------------------------
# feeder file (JSON)

FEEDER_KEYS = {"base_mva", "base_kv", "name", "nodes", "branches"}
NODE_KEYS = {"id", "kind", "phases", "v_slack", "zip"}
ZIP_KEYS = {"s_nom", "s_nom_mva", "a", "b", "c", "v_nom"}
BRANCH_KEYS = {"id", "from", "to", "phases", "y_series", "z_series_ohm",
               "y_shunt_from", "y_shunt_to"}


def _reject_unknown(obj, allowed, where):
    if not isinstance(obj, dict):
        raise FeederError(f"{where}: expected an object")
    extra = sorted(set(obj) - allowed)
    if extra:
        raise FeederError(f"{where}: unknown key(s) {extra}")


def _cvec(pairs, where):
    try:
        arr = np.asarray(pairs, dtype=float)
    except (TypeError, ValueError):
        raise FeederError(f"{where}: expected [re, im] pairs") from None
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise FeederError(f"{where}: expected a list of [re, im] pairs")
    return arr[:, 0] + 1j * arr[:, 1]


def _cmat(rows, where):
    try:
        arr = np.asarray(rows, dtype=float)
    except (TypeError, ValueError):
        raise FeederError(f"{where}: expected a matrix of [re, im] pairs") from None
    if arr.ndim != 3 or arr.shape[2] != 2 or arr.shape[0] != arr.shape[1]:
        raise FeederError(f"{where}: expected a square matrix of [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def _pairs(z):
    z = np.asarray(z, dtype=complex)
    return np.stack([z.real, z.imag], axis=-1).tolist()


def _per_phase(value, n, default, where):
    if value is None:
        return np.full(n, default, dtype=float)
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.full(n, arr[0])
    if arr.size != n:
        raise FeederError(f"{where}: expected {n} entries")
    return arr


def from_document(doc):
    """Build a Network from a parsed feeder document."""
    _reject_unknown(doc, FEEDER_KEYS, "feeder")
    for key in ("base_mva", "nodes", "branches"):
        if key not in doc:
            raise FeederError(f"feeder: missing key {key!r}")
    base_mva = float(doc["base_mva"])
    if base_mva <= 0:
        raise FeederError("feeder: base_mva must be positive")
    z_base = None
    if "base_kv" in doc:
        z_base = float(doc["base_kv"]) ** 2 / base_mva

    nodes = []
    for raw in doc["nodes"]:
        _reject_unknown(raw, NODE_KEYS, f"node {raw.get('id')}")
        if "id" not in raw:
            raise FeederError("node: missing id")
        where = f"node {raw['id']}"
        phases = normalize_phases(raw.get("phases", "abc"))
        v_slack = _cvec(raw["v_slack"], where + " v_slack") if "v_slack" in raw else None
        load = None
        if "zip" in raw:
            z = raw["zip"]
            _reject_unknown(z, ZIP_KEYS, where + " zip")
            if "s_nom" in z:
                s_nom = _cvec(z["s_nom"], where + " s_nom")
            elif "s_nom_mva" in z:
                s_nom = _cvec(z["s_nom_mva"], where + " s_nom_mva") / base_mva
            else:
                raise FeederError(f"{where}: zip block needs s_nom")
            n = len(phases)
            if s_nom.size != n:
                raise FeederError(f"{where}: s_nom needs {n} entries")
            load = NodeLoad(
                s_nom=s_nom,
                a=_per_phase(z.get("a"), n, 0.0, where + " a"),
                b=_per_phase(z.get("b"), n, 0.0, where + " b"),
                c=_per_phase(z.get("c"), n, 1.0, where + " c"),
                v_nom=_per_phase(z.get("v_nom"), n, 1.0, where + " v_nom"),
            )
            ZipLoadSpec(load.a, load.b, load.c, load.s_nom, load.v_nom)
        nodes.append(NodeSpec(raw["id"], raw.get("kind", "pq"), phases, v_slack, load))

    branches = []
    for raw in doc["branches"]:
        _reject_unknown(raw, BRANCH_KEYS, f"branch {raw.get('id')}")
        where = f"branch {raw.get('id', (raw.get('from'), raw.get('to')))}"
        if "from" not in raw or "to" not in raw:
            raise FeederError(f"{where}: needs 'from' and 'to'")
        if "y_series" in raw:
            y = _cmat(raw["y_series"], where + " y_series")
        elif "z_series_ohm" in raw:
            if z_base is None:
                raise FeederError(f"{where}: z_series_ohm requires feeder base_kv")
            z = _cmat(raw["z_series_ohm"], where + " z_series_ohm") / z_base
            try:
                y = np.linalg.inv(z)
            except np.linalg.LinAlgError:
                raise FeederError(f"{where}: singular series impedance") from None
        else:
            raise FeederError(f"{where}: needs y_series")
        shunts = {}
        for key in ("y_shunt_from", "y_shunt_to"):
            if key in raw:
                shunts[key] = _cmat(raw[key], f"{where} {key}")
        branches.append(BranchSpec(raw["from"], raw["to"], y, phases=raw.get("phases"),
                                   id=raw.get("id"), **shunts))
    net = Network(tuple(nodes), tuple(branches), base_mva, doc.get("name", ""), source=doc)
    net.system  # noqa: B018  validate eagerly
    return net


def to_document(net):
    """Inverse of :func:`from_document` (per-unit form)."""
    nodes = []
    for n in net.nodes:
        raw = {"id": n.id, "kind": n.kind, "phases": n.phases}
        if n.kind == "slack":
            raw["v_slack"] = _pairs(n.v_slack)
        if n.load is not None:
            raw["zip"] = {
                "s_nom": _pairs(n.load.s_nom),
                "a": n.load.a.tolist(), "b": n.load.b.tolist(), "c": n.load.c.tolist(),
                "v_nom": n.load.v_nom.tolist(),
            }
        nodes.append(raw)
    branches = []
    for br in net.branches:
        raw = {"id": br.id, "from": br.from_node, "to": br.to_node,
               "y_series": _pairs(br.y_series)}
        if br.phases is not None:
            raw["phases"] = br.phases
        if br.y_shunt_from is not None:
            raw["y_shunt_from"] = _pairs(br.y_shunt_from)
        if br.y_shunt_to is not None:
            raw["y_shunt_to"] = _pairs(br.y_shunt_to)
        branches.append(raw)
    doc = {"base_mva": net.base_mva, "nodes": nodes, "branches": branches}
    if net.name:
        doc["name"] = net.name
    return doc


def load_feeder(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FeederError(f"{path}: not valid JSON ({exc})") from None
    return from_document(doc)


def save_feeder(net, path):
    Path(path).write_text(json.dumps(to_document(net), indent=1) + "\n")


SHIPPED = ("two_bus", "chain3", "radial22", "ieee13_zip", "qrange5")


def shipped_feeder_path(name):
    path = Path(__file__).parent / "feeders" / f"{name}.json"
    if not path.exists():
        raise FeederError(f"no shipped feeder named {name!r}")
    return path


def shipped_feeder(name):
    return load_feeder(shipped_feeder_path(name))
