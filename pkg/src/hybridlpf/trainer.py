"""Fitting the blend coefficients ``mu`` from operating samples.

Each residual element is affine in its own coefficient,
``eps[k, m] = c[k, m] - mu[m] * d[k, m]``, so the weighted least-squares fit
decouples per node-phase and has a closed form. The Huber variant wraps that
closed form in iteratively reweighted least squares with one weight per sample.

With ``delta="auto"`` the threshold is a quantile of the per-sample residual
norms. The ``"adaptive"`` rule recomputes it from the current fit on every
pass; ``"initial"`` fixes it from the first squared-penalty fit, which gross
outliers inflate for every sample.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .defaults import HUBER_DELTA_QUANTILE, IRLS_MAX_ITER, IRLS_TOL
from .errors import TrainingError


@dataclass(frozen=True)
class TrainerOptions:
    penalty: str = "squared"
    delta: float | str = "auto"
    max_irls_iter: int = IRLS_MAX_ITER
    irls_tol: float = IRLS_TOL
    use_weights: bool = True
    delta_quantile: float = HUBER_DELTA_QUANTILE
    delta_rule: str = "adaptive"

    def __post_init__(self):
        if self.penalty not in ("squared", "huber"):
            raise ValueError("penalty must be 'squared' or 'huber'")
        if self.delta_rule not in ("adaptive", "initial"):
            raise ValueError("delta_rule must be 'adaptive' or 'initial'")
        if self.delta != "auto" and not float(self.delta) > 0:
            raise ValueError("delta must be positive or 'auto'")

    def to_dict(self):
        return asdict(self)


@dataclass
class FitReport:
    penalty: str
    delta: float | None
    residual_norms: np.ndarray
    irls_iterations: int
    flagged: list = field(default_factory=list)
    objective: float = 0.0

    def to_dict(self):
        return {
            "penalty": self.penalty,
            "delta": self.delta,
            "irls_iterations": self.irls_iterations,
            "flagged": [int(k) for k in self.flagged],
            "objective": self.objective,
            "residual_norms": [float(r) for r in self.residual_norms],
        }


def _ratio_terms(v, anchors, zip_spec=None):
    """Per-sample ratios ``t_u = v / v_u`` and ``t_l = v / v_l``.

    With ZIP loads each ratio is scaled by ``A(|v_anchor|) / A(|v|)``.
    """
    v = np.atleast_2d(np.asarray(v, dtype=complex))
    if np.any(v == 0):
        k, m = np.argwhere(v == 0)[0]
        raise ValueError(f"sample {k} has a zero voltage at element {m}")
    v_u, v_l = anchors.v_hat_u, anchors.v_hat_l
    if np.any(v_u == 0) or np.any(v_l == 0):
        raise ValueError("anchor voltages must be nonzero")
    t_u = v / v_u
    t_l = v / v_l
    if zip_spec is not None:
        a_v = zip_spec.factor(np.abs(v))
        if np.any(a_v == 0):
            raise ValueError("ZIP factor vanishes at a sample voltage")
        t_u = t_u * (zip_spec.factor(np.abs(v_u)) / a_v)
        t_l = t_l * (zip_spec.factor(np.abs(v_l)) / a_v)
    return t_u, t_l


def _affine_parts(v, anchors, zip_spec=None):
    t_u, t_l = _ratio_terms(v, anchors, zip_spec)
    return 1.0 - t_l, t_u - t_l


def residuals(samples, anchors, mu, zip_spec=None):
    """Normalized nodal power differences, one row per sample."""
    v = np.vstack([s.v_l for s in samples])
    t_u, t_l = _ratio_terms(v, anchors, zip_spec)
    mu = np.asarray(mu, dtype=float)
    return 1.0 - (mu * t_u + (1.0 - mu) * t_l)


def _weighted_closed_form(c, d, weights):
    num = weights @ np.real(np.conj(d) * c)
    den = weights @ (np.abs(d) ** 2)
    bad = np.flatnonzero(den == 0)
    if bad.size:
        raise TrainingError(f"element {bad[0]} is unidentifiable (anchors coincide there)")
    return num / den


def _auto_delta(r, quantile):
    delta = float(np.quantile(r, quantile))
    return delta if delta > 0 else (float(np.max(r)) or 1.0)


def huber(r, delta):
    r = np.asarray(r, dtype=float)
    return np.where(r <= delta, r * r, delta * (2 * r - delta))


def fit_mu(samples, anchors, opts=None, zip_spec=None):
    """Fit ``mu``. Returns ``(mu, FitReport)``."""
    opts = opts or TrainerOptions()
    if len(samples) < 2:
        raise TrainingError("need at least 2 training samples")
    v = np.vstack([s.v_l for s in samples])
    if v.shape[1] != anchors.v_hat_u.size:
        raise ValueError("sample and anchor dimensions differ")
    c, d = _affine_parts(v, anchors, zip_spec)
    if opts.use_weights:
        base = np.array([s.weight for s in samples], dtype=float)
    else:
        base = np.ones(len(samples))
    if np.any(base < 0) or not np.any(base > 0):
        raise TrainingError("sample weights must be non-negative and not all zero")

    mu = _weighted_closed_form(c, d, base)
    r = np.sum(np.abs(c - mu * d), axis=1)
    if opts.penalty == "squared":
        obj = float(base @ np.sum(np.abs(c - mu * d) ** 2, axis=1))
        return mu, FitReport("squared", None, r, 0, [], obj)

    auto = opts.delta == "auto"
    delta = _auto_delta(r, opts.delta_quantile) if auto else float(opts.delta)
    for it in range(1, opts.max_irls_iter + 1):
        omega = np.where(r <= delta, 1.0, delta / np.maximum(r, delta))
        mu_new = _weighted_closed_form(c, d, base * omega)
        step = np.max(np.abs(mu_new - mu))
        mu = mu_new
        r = np.sum(np.abs(c - mu * d), axis=1)
        if auto and opts.delta_rule == "adaptive":
            # the scale follows the fit so outliers in the start cannot inflate it
            delta_new = _auto_delta(r, opts.delta_quantile)
            step = max(step, abs(delta_new - delta) / delta)
            delta = delta_new
        if step <= opts.irls_tol:
            break
    else:
        raise TrainingError(f"IRLS did not converge in {opts.max_irls_iter} iterations")
    flagged = [s.id for s, rk in zip(samples, r) if rk > delta]
    obj = float(base @ huber(r, delta))
    return mu, FitReport("huber", delta, r, it, flagged, obj)
