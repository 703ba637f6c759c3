"""Command-line entry point.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure
(non-convergence, infeasibility, singular system). Failures print one JSON
object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import defaults as D
from . import qrange
from .data import (align_index, forgetting_weights, generate_samples, pick_anchor_states,
                   read_samples, write_samples)
from .errors import (BudgetExceeded, FeederError, HybridLPFError, InfeasibleError,
                     NonConvergence, SingularSystem, TrainingError, UnidentifiableAnchors)
from .evaluation import (evaluate, load_config, resolve_feeder, run_experiment,
                         train_model, write_error_table, write_stats_table)
from .linear import load_model, save_model
from .network import SHIPPED
from .oracle import SolveOptions, solve_network
from .trainer import TrainerOptions

NUMERICAL = (NonConvergence, InfeasibleError, SingularSystem, TrainingError,
             UnidentifiableAnchors, BudgetExceeded)


class UsageError(Exception):
    pass


def _existing(path, what):
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} file not found: {path}")
    return p


def _out_path(path):
    p = Path(path)
    if not p.parent.exists():
        raise UsageError(f"output directory does not exist: {p.parent}")
    return p


def _feeder_arg(value):
    if value in SHIPPED:
        return value
    _existing(value, "feeder")
    return value


def _solve_opts(args):
    return SolveOptions(tol=args.tol, max_iter=args.max_iter)


def _print_table(rows, header, out):
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)


# --------------------------------------------------------------------------
# subcommands

def cmd_solve_pf(args):
    feeder = _feeder_arg(args.feeder)
    out = _out_path(args.out) if args.out else None
    net = resolve_feeder(feeder)
    lam = None if args.lam is None else np.asarray(args.lam, dtype=float)
    if lam is not None and lam.size not in (1, net.system.size):
        raise UsageError(f"--lam takes 1 or {net.system.size} values")
    sol = solve_network(net, lam, _solve_opts(args))
    rows = [[node, phase, repr(float(v.real)), repr(float(v.imag)), repr(float(abs(v))),
             repr(float(np.degrees(np.angle(v))))]
            for (node, phase), v in zip(net.system.index, sol.v_l)]
    header = ["node", "phase", "v_re", "v_im", "v_mag", "v_deg"]
    if out is None:
        _print_table(rows, header, sys.stdout)
    else:
        with open(out, "w", newline="") as fh:
            _print_table(rows, header, fh)
    print(json.dumps({"iterations": sol.iterations, "residual": sol.residual}),
          file=sys.stderr)


def cmd_gen_data(args):
    feeder = _feeder_arg(args.feeder)
    out = _out_path(args.out)
    if args.count < 1:
        raise UsageError("--count must be at least 1")
    if not 0 < args.scale_min <= args.scale_max:
        raise UsageError("need 0 < --scale-min <= --scale-max")
    net = resolve_feeder(feeder)
    samples = generate_samples(net, args.count, (args.scale_min, args.scale_max), args.seed,
                               _solve_opts(args), drift=args.drift)
    write_samples(out, samples, net.system.index)


def _trainer_opts(args):
    delta = "auto" if args.delta in (None, "auto") else float(args.delta)
    try:
        return TrainerOptions(penalty=args.penalty, delta=delta)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_train(args):
    feeder = _feeder_arg(args.feeder)
    samples_path = _existing(args.samples, "samples")
    out = _out_path(args.out)
    if args.rho is not None and not 0 < args.rho <= 1:
        raise UsageError("--rho must lie in (0, 1]")
    opts = _trainer_opts(args)
    net = resolve_feeder(feeder)
    samples, index = read_samples(samples_path)
    samples = align_index(samples, index, net.system.index)
    if args.rho is not None:
        samples = forgetting_weights(samples, args.rho)
    anchors = pick_anchor_states(net, opts=_solve_opts(args))
    model, report = train_model(net, samples, anchors, opts)
    provenance = {"feeder": net.name, "fingerprint": net.fingerprint(),
                  "samples": samples_path.name, "trainer": opts.to_dict(), "rho": args.rho}
    save_model(out, model, net.system.index, provenance, report.to_dict())
    summary = {k: v for k, v in report.to_dict().items() if k != "residual_norms"}
    print(json.dumps(summary))


def cmd_eval(args):
    model_path = _existing(args.model, "model")
    samples_path = _existing(args.samples, "samples")
    out = _out_path(args.out) if args.out else None
    model, index, _ = load_model(model_path)
    samples, s_index = read_samples(samples_path)
    samples = align_index(samples, s_index, index)
    report = evaluate(model, samples)
    if out is not None:
        write_error_table(out, report)
        write_stats_table(out.with_name(out.stem + "_stats.csv"), report.stats())
    print(json.dumps(report.stats()))


def cmd_range(args):
    feeder = _feeder_arg(args.feeder)
    model_path = _existing(args.model, "model")
    limits_path = args.limits
    if limits_path is None:
        if feeder not in SHIPPED or not qrange.shipped_limits_path(feeder).exists():
            raise UsageError("--limits is required for this feeder")
        limits_path = qrange.shipped_limits_path(feeder)
    limits_path = _existing(limits_path, "limits")
    out = _out_path(args.out) if args.out else None
    net = resolve_feeder(feeder)
    model, index, _ = load_model(model_path)
    if tuple(index) != tuple(net.system.index):
        raise UsageError("model was trained on a different node-phase index")
    try:
        limits = qrange.load_limits(limits_path, net)
        poly = qrange.polyhedron_for_model(net, model, limits, args.voltage_form,
                                           args.power_form)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    res = qrange.project_interval_lp(poly)
    if res.status == "infeasible":
        raise InfeasibleError("the linearized operating region is empty")
    doc = {"q_lo": res.q_lo, "q_hi": res.q_hi, "status": res.status, "method": res.method,
           "seconds": res.seconds, "base_mva": net.base_mva,
           "q_lo_mvar": res.q_lo * net.base_mva, "q_hi_mvar": res.q_hi * net.base_mva}
    if res.status == "bounded":
        certs = {}
        for side, x in (("lo", res.x_lo), ("hi", res.x_hi)):
            worst, _, v = qrange.check_certificate(net, limits, poly, x, _solve_opts(args))
            certs[side] = {"x": x.tolist(), "worst_violation": worst,
                           "v_mag": np.abs(v).tolist()}
        doc["certificates"] = certs
    if args.fme:
        f = qrange.project_interval_fme(poly)
        doc["fme"] = {"q_lo": f.q_lo, "q_hi": f.q_hi, "status": f.status,
                      "max_abs_diff": max(abs(f.q_lo - res.q_lo), abs(f.q_hi - res.q_hi))}
    text = json.dumps(doc, indent=1)
    if out is None:
        print(text)
    else:
        out.write_text(text + "\n")
        print(json.dumps({"q_lo": res.q_lo, "q_hi": res.q_hi}))


def cmd_experiment(args):
    try:
        config = load_config(args.config)
    except (FileNotFoundError, ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    if config.feeder not in SHIPPED:
        _existing(config.feeder, "feeder")
    out = Path(args.out)
    if not out.parent.exists():
        raise UsageError(f"output directory does not exist: {out.parent}")
    reports = run_experiment(config, out, _solve_opts(args))
    print(json.dumps({tag: rep.mean for tag, rep in reports.items()}))


def cmd_defaults(args):
    for name, value in D.table():
        print(f"{name} = {value!r}")


# --------------------------------------------------------------------------
# parser

def build_parser():
    parser = argparse.ArgumentParser(prog="hybridlpf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def solver_flags(p):
        p.add_argument("--tol", type=float, default=D.PF_TOL, help="power-flow step tolerance")
        p.add_argument("--max-iter", type=int, default=D.PF_MAX_ITER)

    p = sub.add_parser("solve-pf", help="solve the nonlinear power flow")
    p.add_argument("--feeder", required=True, help="shipped feeder name or JSON path")
    p.add_argument("--lam", type=float, nargs="+", help="load scaling, one or per node-phase")
    p.add_argument("--out")
    solver_flags(p)
    p.set_defaults(func=cmd_solve_pf)

    p = sub.add_parser("gen-data", help="generate operating samples")
    p.add_argument("--feeder", required=True)
    p.add_argument("--count", type=int, default=D.TRAIN_COUNT)
    p.add_argument("--scale-min", type=float, default=D.SCALE_RANGE[0])
    p.add_argument("--scale-max", type=float, default=D.SCALE_RANGE[1])
    p.add_argument("--drift", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    solver_flags(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="fit the blend coefficients")
    p.add_argument("--feeder", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--penalty", choices=("squared", "huber"), default="squared")
    p.add_argument("--delta", default="auto", help="Huber threshold or 'auto'")
    p.add_argument("--rho", type=float, help="forgetting factor in (0, 1]")
    p.add_argument("--out", required=True)
    solver_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="error report of a model on samples")
    p.add_argument("--model", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("range", help="reactive-power support range at the PCC")
    p.add_argument("--feeder", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--limits", help="limits JSON (shipped feeders have a default)")
    p.add_argument("--voltage-form", choices=qrange.VOLTAGE_FORMS, default=D.VOLTAGE_FORM)
    p.add_argument("--power-form", choices=qrange.POWER_FORMS, default=D.POWER_FORM)
    p.add_argument("--fme", action="store_true", help="cross-check with Fourier-Motzkin")
    p.add_argument("--out")
    solver_flags(p)
    p.set_defaults(func=cmd_range)

    p = sub.add_parser("experiment", help="run an experiment config")
    p.add_argument("config", help="config JSON path or shipped config name")
    p.add_argument("--out", required=True, help="report directory")
    solver_flags(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("defaults", help="print the numeric defaults table")
    p.set_defaults(func=cmd_defaults)
    return parser


def _fail(kind, exc, code):
    print(json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}),
          file=sys.stderr)
    return code


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        args.func(args)
    except UsageError as exc:
        return _fail("usage", exc, 1)
    except NUMERICAL as exc:
        return _fail("numerical", exc, 2)
    except (FeederError, ValueError, KeyError, OSError) as exc:
        return _fail("input", exc, 1)
    except HybridLPFError as exc:
        return _fail("numerical", exc, 2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
