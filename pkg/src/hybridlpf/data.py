"""Synthetic operating data: sampling, anchor states, bad data, weights."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .defaults import BAD_DATA_RANGES, HEAVY_SCALE, LIGHT_SCALE, SCALE_RANGE
from .errors import NonConvergence, UnidentifiableAnchors
from .oracle import solve_fixed_point, solve_zip_fixed_point


SAMPLE_COLUMNS = ("sample_id", "timestamp", "node", "phase", "v_re", "v_im",
                  "p", "q", "lambda", "weight", "corrupted")


@dataclass(frozen=True, eq=False)
class OperatingSample:
    id: int
    timestamp: int
    v_l: np.ndarray
    s_l: np.ndarray
    lam: np.ndarray | None = None
    weight: float = 1.0
    corrupted: bool = False


@dataclass(frozen=True, eq=False)
class AnchorPair:
    v_hat_u: np.ndarray
    v_hat_l: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v_hat_u", np.asarray(self.v_hat_u, dtype=complex))
        object.__setattr__(self, "v_hat_l", np.asarray(self.v_hat_l, dtype=complex))
        if self.v_hat_u.shape != self.v_hat_l.shape:
            raise ValueError("anchor vectors differ in length")

    @property
    def identifiable(self):
        return bool(np.any(self.v_hat_u != self.v_hat_l))


def _solve_scaled(net, lam, opts):
    sys = net.system
    if net.has_zip:
        return solve_zip_fixed_point(sys, net.w, net.zip_spec, lam, opts)
    return solve_fixed_point(sys, net.w, lam * net.s_nom, opts)


def generate_samples(net, count, scale_range=SCALE_RANGE, seed=0, opts=None, drift=0.0,
                     first_timestamp=1):
    """Draw ``count`` operating points by random per node-phase load scaling.

    Each node-phase load is multiplied by an independent factor drawn
    uniformly from ``scale_range``. With ``drift`` the load base additionally
    ramps linearly from 1 to ``1 + drift`` over the sample timeline.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    lo, hi = map(float, scale_range)
    if not 0 < lo <= hi:
        raise ValueError("scale_range must satisfy 0 < min <= max")
    n = net.system.size
    rng = np.random.default_rng(seed)
    factors = rng.uniform(lo, hi, size=(count, n))
    ramp = 1.0 + drift * (np.arange(count) / max(count - 1, 1))
    samples = []
    for k in range(count):
        lam = factors[k] * ramp[k]
        try:
            sol = _solve_scaled(net, lam, opts)
        except NonConvergence as exc:
            raise NonConvergence(f"sample {k}: {exc}", exc.iterations, sample_index=k) from exc
        samples.append(OperatingSample(k, first_timestamp + k, sol.v_l, sol.s_l, lam))
    return samples


def pick_anchor_states(net, light=LIGHT_SCALE, heavy=HEAVY_SCALE, opts=None):
    """Solve the feeder at uniform light and heavy load scalings."""
    n = net.system.size
    v_u = _solve_scaled(net, np.full(n, light), opts).v_l
    try:
        v_l = _solve_scaled(net, np.full(n, heavy), opts).v_l
    except NonConvergence as exc:
        raise NonConvergence(f"heavy anchor (scale {heavy}) did not solve; reduce it",
                             exc.iterations) from exc
    anchors = AnchorPair(v_u, v_l)
    if not anchors.identifiable:
        raise UnidentifiableAnchors("light and heavy anchors coincide (no load?)")
    return anchors


def inject_bad_data(samples, count, mode, seed=0):
    """Replace voltage magnitudes of ``count`` random clean samples.

    Every node-phase of a chosen sample gets a magnitude drawn from the mode's
    range; angles and injections are kept.
    """
    if mode not in BAD_DATA_RANGES:
        raise ValueError(f"unknown bad-data mode {mode!r}")
    clean = [k for k, s in enumerate(samples) if not s.corrupted]
    if count > len(clean):
        raise ValueError(f"cannot corrupt {count} of {len(clean)} clean samples")
    out = list(samples)
    if count == 0:
        return out
    rng = np.random.default_rng(seed)
    lo, hi = BAD_DATA_RANGES[mode]
    for k in sorted(rng.choice(clean, size=count, replace=False)):
        s = out[k]
        mag = rng.uniform(lo, hi, size=s.v_l.size)
        out[k] = replace(s, v_l=mag * np.exp(1j * np.angle(s.v_l)), corrupted=True)
    return out


def forgetting_weights(samples, rho):
    """Geometric forgetting: ``weight = rho ** (t_max - t)``."""
    if not 0 < rho <= 1:
        raise ValueError("rho must lie in (0, 1]")
    stamps = np.array([s.timestamp for s in samples])
    t_max = stamps.max()
    return [replace(s, weight=float(rho ** (t_max - s.timestamp))) for s in samples]


def stack(samples, attr="v_l"):
    return np.vstack([getattr(s, attr) for s in samples])


# --------------------------------------------------------------------------
# sample file

def write_samples(path, samples, index):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(SAMPLE_COLUMNS)
        for s in samples:
            lam = s.lam if s.lam is not None else np.full(s.v_l.size, np.nan)
            for m, (node, phase) in enumerate(index):
                out.writerow([
                    s.id, s.timestamp, node, phase,
                    repr(float(s.v_l[m].real)), repr(float(s.v_l[m].imag)),
                    repr(float(s.s_l[m].real)), repr(float(s.s_l[m].imag)),
                    repr(float(lam[m])), repr(float(s.weight)), int(s.corrupted),
                ])


def read_samples(path):
    """Read a sample file. Returns ``(samples, index)``."""
    rows = {}
    index = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SAMPLE_COLUMNS:
            raise ValueError(f"{path}: header must be {','.join(SAMPLE_COLUMNS)}")
        for row in reader:
            sid = int(row["sample_id"])
            key = (row["node"], row["phase"])
            if sid not in rows:
                rows[sid] = []
            if len(rows) == 1:
                index.append(key)
            rows[sid].append(row)
    samples = []
    for sid, rs in rows.items():
        if [(r["node"], r["phase"]) for r in rs] != index:
            raise ValueError(f"{path}: sample {sid} rows do not follow the common order")
        v = np.array([float(r["v_re"]) + 1j * float(r["v_im"]) for r in rs])
        s = np.array([float(r["p"]) + 1j * float(r["q"]) for r in rs])
        lam = np.array([float(r["lambda"]) for r in rs])
        samples.append(OperatingSample(
            sid, int(rs[0]["timestamp"]), v, s,
            None if np.all(np.isnan(lam)) else lam,
            float(rs[0]["weight"]), bool(int(rs[0]["corrupted"]))))
    return samples, tuple(index)


def align_index(samples, index, target):
    """Reorder sample vectors from ``index`` order into ``target`` order."""
    if tuple(index) == tuple(target):
        return samples
    pos = {key: k for k, key in enumerate(index)}
    try:
        perm = np.array([pos[key] for key in target])
    except KeyError as exc:
        raise ValueError(f"sample file lacks node-phase {exc.args[0]}") from None
    return [replace(s, v_l=s.v_l[perm], s_l=s.s_l[perm],
                    lam=None if s.lam is None else s.lam[perm]) for s in samples]
