"""Error metrics, model comparisons and reproducible experiment runs."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import defaults as D
from .data import (forgetting_weights, generate_samples, inject_bad_data,
                   pick_anchor_states, stack)
from .linear import (build_flat_model, build_trained_model, build_zip_model,
                     predict_voltages, predict_zip, pure_dd_predict)
from .network import SHIPPED, load_feeder, shipped_feeder
from .trainer import TrainerOptions, fit_mu

QUANTILES = (("min", 0.0), ("q1", 0.25), ("median", 0.5), ("q3", 0.75), ("max", 1.0))


@dataclass(frozen=True, eq=False)
class ErrorReport:
    """Per-sample relative errors with summary statistics.

    ``per_element`` is the mean of ``|v_pred - v| / |v|`` for each node-phase.
    """

    sample_ids: np.ndarray
    rel_err: np.ndarray
    per_element: np.ndarray

    @property
    def mean(self):
        return float(np.mean(self.rel_err))

    @property
    def max(self):
        return float(np.max(self.rel_err))

    def quantiles(self):
        return {name: float(np.quantile(self.rel_err, q)) for name, q in QUANTILES}

    def stats(self):
        out = {"count": int(self.rel_err.size), "mean": self.mean}
        out.update(self.quantiles())
        return out


def relative_errors(predictions, truths, sample_ids=None):
    """``sum_m |pred - true| / sum_m |true|`` per sample (row)."""
    pred = np.atleast_2d(np.asarray(predictions, dtype=complex))
    true = np.atleast_2d(np.asarray(truths, dtype=complex))
    if pred.shape != true.shape:
        raise ValueError(f"prediction shape {pred.shape} differs from truth shape {true.shape}")
    norm = np.sum(np.abs(true), axis=1)
    if np.any(norm == 0):
        raise ValueError(f"sample {int(np.argmin(norm))} has a zero truth vector")
    diff = np.abs(pred - true)
    with np.errstate(divide="ignore", invalid="ignore"):
        elem = np.where(np.abs(true) > 0, diff / np.abs(true), np.nan)
    ids = np.arange(pred.shape[0]) if sample_ids is None else np.asarray(sample_ids)
    return ErrorReport(ids, np.sum(diff, axis=1) / norm, np.nanmean(elem, axis=0))


def normalized_errors(series):
    """Min-max normalization onto [0, 1]."""
    e = np.asarray(series, dtype=float)
    if e.ndim != 1 or e.size < 2:
        raise ValueError("need a series of at least two values")
    lo, hi = e.min(), e.max()
    if hi == lo:
        raise ValueError("constant series cannot be normalized")
    return (e - lo) / (hi - lo)


@dataclass(frozen=True, eq=False)
class HybridComparison:
    """Per-sample errors of the hybrid and the pure data-driven predictions.

    ``bound`` is ``|yll^-1 s| / |v_d v*|`` for single-node systems and NaN
    otherwise; there ``ratio`` equals ``bound`` exactly.
    """

    hybrid_err: np.ndarray
    pure_err: np.ndarray
    ratio: np.ndarray
    bound: np.ndarray


def compare_hybrid_vs_pure(net, anchors, mu, test_samples):
    """Hybrid: the physics model around the pure blend ``v_d``; pure: ``v_d`` itself."""
    sys = net.system
    v_d = pure_dd_predict(mu, anchors)
    hybrid = build_flat_model(sys, net.w, v_d)
    v_true = stack(test_samples)
    s = stack(test_samples, "s_l")
    v_h = predict_voltages(hybrid, s)
    h_err = np.linalg.norm(v_h - v_true, axis=1)
    d_err = np.linalg.norm(v_d - v_true, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = h_err / d_err
    if sys.size == 1:
        y = sys.yll[0, 0]
        bound = np.abs(s[:, 0] / y) / np.abs(v_d[0] * v_true[:, 0])
    else:
        bound = np.full(len(test_samples), np.nan)
    return HybridComparison(h_err, d_err, ratio, bound)


# --------------------------------------------------------------------------
# model fitting and prediction shared by the CLI and the experiments

def train_model(net, samples, anchors, opts=None):
    """Fit mu and build the matching linear model. Returns ``(model, report)``."""
    zip_spec = net.zip_spec if net.has_zip else None
    mu, report = fit_mu(samples, anchors, opts, zip_spec)
    if zip_spec is None:
        return build_trained_model(net.system, net.w, anchors, mu), report
    return build_zip_model(net.system, net.w, anchors, mu, zip_spec), report


def flat_model(net):
    """Physics-only baseline around the nominal flat voltage."""
    v_hat = net.flat_voltage()
    if net.has_zip:
        from .data import AnchorPair
        anchors = AnchorPair(v_hat, v_hat)
        return build_zip_model(net.system, net.w, anchors, np.ones(v_hat.size), net.zip_spec)
    return build_flat_model(net.system, net.w, v_hat)


def predict_samples(model, samples):
    if hasattr(model, "sens_lambda"):
        if any(s.lam is None for s in samples):
            raise ValueError("ZIP models need samples that carry lambda")
        return predict_zip(model, stack(samples, "lam"))
    return predict_voltages(model, stack(samples, "s_l"))


def evaluate(model, samples):
    return relative_errors(predict_samples(model, samples), stack(samples),
                           [s.id for s in samples])


# --------------------------------------------------------------------------
# report files

def _fmt(x):
    return repr(float(x))


def write_error_table(path, report):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["sample_id", "rel_err"])
        for sid, e in zip(report.sample_ids, report.rel_err):
            out.writerow([int(sid), _fmt(e)])


def write_stats_table(path, stats):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["stat", "value"])
        for key, val in stats.items():
            out.writerow([key, val if isinstance(val, (int, str)) else _fmt(val)])


def read_stats_table(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != ["stat", "value"]:
        raise ValueError(f"{path}: not a stat,value table")
    return {k: v for k, v in rows[1:]}


# --------------------------------------------------------------------------
# experiments

CONFIG_KEYS = {"name", "feeder", "seed", "scale_range", "train_counts", "test_count",
               "penalties", "delta", "bad_data", "rho", "drift", "baseline"}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    feeder: str
    seed: int = 0
    scale_range: tuple = D.SCALE_RANGE
    train_counts: tuple = (D.TRAIN_COUNT,)
    test_count: int = D.TEST_COUNT
    penalties: tuple = ("squared",)
    delta: float | str = "auto"
    bad_data: tuple = ()
    rho: float | None = None
    drift: float = 0.0
    baseline: bool = True

    @classmethod
    def from_document(cls, doc):
        extra = set(doc) - CONFIG_KEYS
        if extra:
            raise ValueError(f"unknown experiment keys: {sorted(extra)}")
        for key in ("name", "feeder"):
            if key not in doc:
                raise ValueError(f"experiment config needs {key!r}")
        kw = dict(doc)
        for key in ("scale_range", "train_counts", "penalties"):
            if key in kw:
                kw[key] = tuple(kw[key])
        if "bad_data" in kw:
            kw["bad_data"] = tuple((b["mode"], int(b["count"])) for b in kw["bad_data"])
        return cls(**kw)


def load_config(path):
    path = Path(path)
    if not path.exists():
        shipped = Path(__file__).with_name("experiments") / f"{path.name}.json"
        if shipped.exists():
            path = shipped
        else:
            raise FileNotFoundError(f"no experiment config {path}")
    return ExperimentConfig.from_document(json.loads(path.read_text()))


def resolve_feeder(name_or_path):
    if name_or_path in SHIPPED:
        return shipped_feeder(name_or_path)
    return load_feeder(name_or_path)


def run_experiment(config, out_dir, opts=None):
    """Generate, anchor, train and evaluate; write one report pair per run.

    Seeds: training data uses ``seed``, the test set ``seed + 1000`` and bad
    data ``seed + 2000 + i``. Returns ``{tag: ErrorReport}``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    net = resolve_feeder(config.feeder)
    anchors = pick_anchor_states(net, opts=opts)
    test = generate_samples(net, config.test_count, config.scale_range, config.seed + 1000,
                            opts, drift=config.drift)
    reports = {}
    flat_mean = None
    if config.baseline:
        rep = evaluate(flat_model(net), test)
        reports["flat"] = rep
        flat_mean = rep.mean
    for count in config.train_counts:
        train = generate_samples(net, count, config.scale_range, config.seed, opts,
                                 drift=config.drift)
        for i, (mode, n_bad) in enumerate(config.bad_data):
            train = inject_bad_data(train, n_bad, mode, config.seed + 2000 + i)
        if config.rho is not None:
            train = forgetting_weights(train, config.rho)
        for penalty in config.penalties:
            model, fit = train_model(net, train, anchors,
                                     TrainerOptions(penalty=penalty, delta=config.delta))
            reports[f"n{count}_{penalty}"] = evaluate(model, test)
    for tag, rep in reports.items():
        stem = out_dir / f"{config.name}_{tag}"
        write_error_table(f"{stem}_errors.csv", rep)
        stats = rep.stats()
        if flat_mean is not None and tag != "flat":
            stats["flat_mean"] = flat_mean
        write_stats_table(f"{stem}_stats.csv", stats)
    return reports
