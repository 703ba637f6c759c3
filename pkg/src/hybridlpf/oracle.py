"""Nonlinear three-phase power flow by fixed-point (Z-bus) iteration.

Solves ``v = w + yll^-1 (conj(s) / conj(v))`` by plain Picard iteration
started from ``w``. Injections use the generator sign convention: a load
consuming power has a negative real part.
"""

from dataclasses import dataclass

import numpy as np

from .defaults import COLLAPSE_GUARD, PF_MAX_ITER, PF_MISMATCH_TOL, PF_TOL
from .errors import NonConvergence


@dataclass(frozen=True)
class SolveOptions:
    tol: float = PF_TOL
    max_iter: int = PF_MAX_ITER
    mismatch_tol: float = PF_MISMATCH_TOL

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass(frozen=True, eq=False)
class PfSolution:
    v_l: np.ndarray
    iterations: int
    residual: float
    s_l: np.ndarray


def power_mismatch(sys, w, v_l, s_l):
    """Infinity norm of ``s - diag(v) conj(i)`` with ``i = yll (v - w)``.

    ``yll (v - w)`` equals ``yl0 v0 + yll v`` because ``yll w = -yl0 v0``.
    """
    i_l = sys.yll @ (v_l - w)
    return float(np.max(np.abs(s_l - v_l * np.conj(i_l)), initial=0.0))


def _iterate(sys, w, injection, opts):
    opts = opts or SolveOptions()
    v = np.array(w, dtype=complex)
    for k in range(1, opts.max_iter + 1):
        s = injection(v)
        v_new = w + sys.solve_ll(np.conj(s) / np.conj(v))
        if not np.all(np.isfinite(v_new)) or np.min(np.abs(v_new)) < COLLAPSE_GUARD:
            raise NonConvergence(f"voltage collapse at iteration {k}", iterations=k)
        step = np.max(np.abs(v_new - v))
        v = v_new
        if step < opts.tol:
            s = injection(v)
            residual = power_mismatch(sys, w, v, s)
            if residual <= opts.mismatch_tol:
                return PfSolution(v, k, residual, s)
    raise NonConvergence(f"no convergence within {opts.max_iter} iterations",
                         iterations=opts.max_iter)


def solve_fixed_point(sys, w, s_l, opts=None):
    """Solve the power flow for fixed complex injections ``s_l`` (p.u.)."""
    s_l = np.asarray(s_l, dtype=complex)
    if s_l.shape != (sys.size,):
        raise ValueError(f"s_l must have {sys.size} entries")
    return _iterate(sys, np.asarray(w, dtype=complex), lambda v: s_l, opts)


def solve_zip_fixed_point(sys, w, zip_spec, lam, opts=None):
    """Solve the power flow with voltage-dependent ZIP injections.

    The injection ``lam * s_nom * A(|v|)`` is re-evaluated at every sweep.
    """
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (sys.size,) or len(zip_spec) != sys.size:
        raise ValueError(f"lambda and ZIP spec must have {sys.size} entries")
    return _iterate(sys, np.asarray(w, dtype=complex),
                    lambda v: zip_spec.injection(lam, v), opts)


def solve_network(net, lam=None, opts=None):
    """Convenience wrapper: solve ``net`` at load scaling ``lam`` (default 1)."""
    sys = net.system
    lam = np.ones(sys.size) if lam is None else np.broadcast_to(
        np.asarray(lam, dtype=float), (sys.size,))
    if net.has_zip:
        return solve_zip_fixed_point(sys, net.w, net.zip_spec, lam, opts)
    return solve_fixed_point(sys, net.w, lam * net.s_nom, opts)
