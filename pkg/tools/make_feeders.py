"""Regenerate the shipped feeder files under src/hybridlpf/feeders/.

Run from the repository root:  python tools/make_feeders.py
"""

import json
from pathlib import Path

import numpy as np

OUT = Path(__file__).resolve().parents[1] / "src" / "hybridlpf" / "feeders"
FT_PER_MILE = 5280.0


def pairs(z):
    z = np.asarray(z, dtype=complex)
    return np.round(np.stack([z.real, z.imag], axis=-1), 12).tolist()


def write(name, doc):
    OUT.mkdir(parents=True, exist_ok=True)
    (OUT / f"{name}.json").write_text(json.dumps(doc, indent=1) + "\n")


def single_phase_branch(f, t, z):
    return {"from": f, "to": t, "y_series": pairs([[1 / complex(z)]])}


def two_bus():
    write("two_bus", {
        "name": "two-bus",
        "base_mva": 1.0,
        "nodes": [
            {"id": "0", "kind": "slack", "phases": "a", "v_slack": [[1.0, 0.0]]},
            {"id": "1", "phases": "a", "zip": {"s_nom": [[-0.5, -0.2]]}},
        ],
        "branches": [single_phase_branch("0", "1", 0.02 + 0.04j)],
    })


def chain3():
    write("chain3", {
        "name": "three-node chain",
        "base_mva": 1.0,
        "nodes": [
            {"id": "1", "kind": "slack", "phases": "a", "v_slack": [[1.0, 0.0]]},
            {"id": "2", "phases": "a", "zip": {"s_nom": [[-0.3, -0.1]]}},
            {"id": "3", "phases": "a", "zip": {"s_nom": [[-0.4, -0.15]]}},
        ],
        "branches": [single_phase_branch("1", "2", 0.01 + 0.02j),
                     single_phase_branch("2", "3", 0.015 + 0.025j)],
    })


def radial22():
    """22-bus radial feeder, 11 kV, 1 MVA base, single-phase equivalent."""
    rng = np.random.default_rng(22)
    z_base = 11.0 ** 2 / 1.0
    edges = [(k, k + 1) for k in range(1, 12)]
    edges += [(3, 13), (13, 14), (14, 15), (6, 16), (16, 17), (17, 18),
              (9, 19), (19, 20), (20, 21), (21, 22)]
    nodes = [{"id": "1", "kind": "slack", "phases": "a", "v_slack": [[1.0, 0.0]]}]
    for k in range(2, 23):
        p_kw = rng.uniform(15.0, 45.0)
        pf = rng.uniform(0.85, 0.95)
        q_kvar = p_kw * np.tan(np.arccos(pf))
        nodes.append({"id": str(k), "phases": "a",
                      "zip": {"s_nom": [[-round(p_kw / 1000, 6), -round(q_kvar / 1000, 6)]]}})
    branches = []
    for f, t in edges:
        length_km = rng.uniform(0.4, 1.0)
        z = (0.32 + 0.35j) * length_km / z_base * 3.5
        branches.append(single_phase_branch(str(f), str(t), z))
    write("radial22", {"name": "22-bus radial", "base_mva": 1.0,
                       "nodes": nodes, "branches": branches})


# IEEE 13-node line configurations: series impedance (ohm/mile), shunt B (uS/mile)
CONFIGS = {
    "601": ("abc",
            [[0.3465 + 1.0179j, 0.1560 + 0.5017j, 0.1580 + 0.4236j],
             [0.1560 + 0.5017j, 0.3375 + 1.0478j, 0.1535 + 0.3849j],
             [0.1580 + 0.4236j, 0.1535 + 0.3849j, 0.3414 + 1.0348j]],
            [[6.2998, -1.9958, -1.2595], [-1.9958, 5.9597, -0.7417], [-1.2595, -0.7417, 5.6386]]),
    "602": ("abc",
            [[0.7526 + 1.1814j, 0.1580 + 0.4236j, 0.1560 + 0.5017j],
             [0.1580 + 0.4236j, 0.7475 + 1.1983j, 0.1535 + 0.3849j],
             [0.1560 + 0.5017j, 0.1535 + 0.3849j, 0.7436 + 1.2112j]],
            [[5.6990, -1.0817, -1.6905], [-1.0817, 5.1795, -0.6588], [-1.6905, -0.6588, 5.4246]]),
    "603": ("bc",
            [[1.3294 + 1.3471j, 0.2066 + 0.4591j], [0.2066 + 0.4591j, 1.3238 + 1.3569j]],
            [[4.7097, -0.8999], [-0.8999, 4.6658]]),
    "604": ("ac",
            [[1.3238 + 1.3569j, 0.2066 + 0.4591j], [0.2066 + 0.4591j, 1.3294 + 1.3471j]],
            [[4.6658, -0.8999], [-0.8999, 4.7097]]),
    "605": ("c", [[1.3292 + 1.3475j]], [[4.5193]]),
    "606": ("abc",
            [[0.7982 + 0.4463j, 0.3192 + 0.0328j, 0.2849 - 0.0143j],
             [0.3192 + 0.0328j, 0.7891 + 0.4041j, 0.3192 + 0.0328j],
             [0.2849 - 0.0143j, 0.3192 + 0.0328j, 0.7982 + 0.4463j]],
            [[96.8897, 0.0, 0.0], [0.0, 96.8897, 0.0], [0.0, 0.0, 96.8897]]),
    "607": ("a", [[1.3425 + 0.5124j]], [[88.9912]]),
}


def ieee13_zip():
    """IEEE 13-node-like unbalanced feeder with ZIP loads (regulator omitted).

    The distributed load on 632-671 is split between its end nodes and the
    switch 671-692 is a 10 ft segment of configuration 601.
    """
    base_mva, base_kv = 5.0, 4.16
    z_base = base_kv ** 2 / base_mva
    s_phase = base_mva / 3 * 1000.0  # kVA per phase

    def line(f, t, cfg, feet):
        phases, z, b = CONFIGS[cfg]
        miles = feet / FT_PER_MILE
        z_pu = np.asarray(z) * miles / z_base
        y_sh = 1j * np.asarray(b) * 1e-6 * miles * z_base / 2
        return {"from": f, "to": t, "phases": phases,
                "y_series": pairs(np.linalg.inv(z_pu)),
                "y_shunt_from": pairs(y_sh), "y_shunt_to": pairs(y_sh)}

    phases = {"650": "abc", "632": "abc", "633": "abc", "634": "abc", "645": "bc",
              "646": "bc", "671": "abc", "680": "abc", "684": "ac", "611": "c",
              "652": "a", "692": "abc", "675": "abc"}
    # kW, kvar per phase; distributed load 17+10j / 66+38j / 117+68j split in half
    loads = {
        "632": ({"a": 8.5 + 5j, "b": 33 + 19j, "c": 58.5 + 34j}, (0.0, 0.0, 1.0)),
        "634": ({"a": 160 + 110j, "b": 120 + 90j, "c": 120 + 90j}, (0.0, 0.0, 1.0)),
        "645": ({"b": 170 + 125j}, (0.3, 0.3, 0.4)),
        "646": ({"b": 230 + 132j}, (1.0, 0.0, 0.0)),
        "652": ({"a": 128 + 86j}, (1.0, 0.0, 0.0)),
        "671": ({"a": 393.5 + 225j, "b": 418 + 239j, "c": 443.5 + 254j}, (0.2, 0.3, 0.5)),
        "675": ({"a": 485 + 190j, "b": 68 + 60j, "c": 290 + 212j}, (0.3, 0.2, 0.5)),
        "692": ({"c": 170 + 151j}, (0.0, 1.0, 0.0)),
        "611": ({"c": 170 + 80j}, (0.0, 1.0, 0.0)),
    }
    v_src = 1.05
    nodes = [{"id": "650", "kind": "slack", "phases": "abc",
              "v_slack": pairs(v_src * np.exp(1j * np.deg2rad([0.0, -120.0, 120.0])))}]
    for nid, ph in phases.items():
        if nid == "650":
            continue
        node = {"id": nid, "phases": ph}
        if nid in loads:
            per_phase, (a, b, c) = loads[nid]
            s = [-per_phase.get(p, 0j) / s_phase for p in ph]
            node["zip"] = {"s_nom": pairs(s), "a": a, "b": b, "c": c}
        nodes.append(node)
    xfm = (0.011 + 0.02j) * base_mva / 0.5
    branches = [
        line("650", "632", "601", 2000),
        line("632", "633", "602", 500),
        {"from": "633", "to": "634", "y_series": pairs(np.eye(3) / xfm)},
        line("632", "645", "603", 500),
        line("645", "646", "603", 300),
        line("632", "671", "601", 2000),
        line("671", "684", "604", 300),
        line("684", "611", "605", 300),
        line("684", "652", "607", 800),
        line("671", "680", "601", 1000),
        line("671", "692", "601", 10),
        line("692", "675", "606", 500),
    ]
    write("ieee13_zip", {"name": "13-node unbalanced ZIP", "base_mva": base_mva,
                         "nodes": nodes, "branches": branches})


def qrange5():
    """Balanced 5-bus feeder with two reactive-capable DER nodes (10 MVA base).

    The limits file fixes the loads at nodes 2 and 3, fixes the active power of
    the DER nodes 4 and 5 and lets their reactive output swing by 0.2 p.u.
    around the local load.
    """
    write("qrange5", {
        "name": "5-bus reactive support",
        "base_mva": 10.0,
        "nodes": [
            {"id": "1", "kind": "slack", "phases": "a", "v_slack": [[1.0, 0.0]]},
            {"id": "2", "phases": "a", "zip": {"s_nom": [[-0.1, -0.03]]}},
            {"id": "3", "phases": "a", "zip": {"s_nom": [[-0.3, -0.1]]}},
            {"id": "4", "phases": "a", "zip": {"s_nom": [[-0.2, -0.08]]}},
            {"id": "5", "phases": "a", "zip": {"s_nom": [[-0.25, -0.1]]}},
        ],
        "branches": [
            single_phase_branch("1", "2", 0.0035 + 0.0105j),
            single_phase_branch("2", "3", 0.007 + 0.014j),
            single_phase_branch("3", "4", 0.0105 + 0.0175j),
            single_phase_branch("2", "5", 0.00875 + 0.0175j),
        ],
    })
    swing = 0.2
    fixed = {"2": -0.1 - 0.03j, "3": -0.3 - 0.1j}
    der = {"4": -0.2 - 0.08j, "5": -0.25 - 0.1j}
    nodes = {}
    for nid, s in fixed.items():
        nodes[nid] = {"p_min": s.real, "p_max": s.real, "q_min": s.imag, "q_max": s.imag}
    for nid, s in der.items():
        nodes[nid] = {"p_min": s.real, "p_max": s.real,
                      "q_min": round(s.imag - swing, 12), "q_max": round(s.imag + swing, 12)}
    doc = {"node_defaults": {"v_min": 0.975, "v_max": 1.03},
           "branch_defaults": {"i_max": 1.2},
           "nodes": nodes}
    (OUT / "qrange5.limits.json").write_text(json.dumps(doc, indent=1) + "\n")


if __name__ == "__main__":
    two_bus()
    chain3()
    radial22()
    ieee13_zip()
    qrange5()
