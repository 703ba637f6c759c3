"""Linear three-phase power-flow models.

All complex models share the form ``v = w + yll^-1 H conj(s)`` with a
diagonal ``H``. ``H`` comes from a single guessed voltage (flat model) or a
per node-phase blend of the reciprocals of two anchor voltages weighted by
the learned coefficients ``mu``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import AnchorPair
from .defaults import MU_WARN
from .loads import ZipLoadSpec

log = logging.getLogger(__name__)



@dataclass(frozen=True, eq=False)
class ComplexLinearModel:
    """Affine map ``s -> w + sens @ conj(s)``."""

    w: np.ndarray
    sens: np.ndarray
    anchors: AnchorPair
    mu: np.ndarray

    def predict(self, s_l):
        return predict_voltages(self, s_l)


@dataclass(frozen=True, eq=False)
class ZipLinearModel:
    """Affine map from load change rates ``lam`` to voltages."""

    w: np.ndarray
    sens_lambda: np.ndarray
    anchors: AnchorPair
    mu: np.ndarray
    zip_spec: ZipLoadSpec

    def predict(self, lam):
        return predict_zip(self, lam)


@dataclass(frozen=True, eq=False)
class RealCoefficients:
    """Real and imaginary parts of the approximate load-row currents."""

    i_re: np.ndarray
    i_im: np.ndarray


def _nonzero(v, what):
    v = np.asarray(v, dtype=complex)
    zero = np.flatnonzero(v == 0)
    if zero.size:
        raise ValueError(f"{what} has a zero element at index {zero[0]}")
    return v


def _check_mu(mu, n):
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (n,):
        raise ValueError(f"mu must have {n} entries")
    big = np.flatnonzero(np.abs(mu) > MU_WARN)
    if big.size:
        log.warning("%d blend coefficient(s) exceed |mu| > %g (max %.3g at %d)",
                    big.size, MU_WARN, np.max(np.abs(mu)), big[np.argmax(np.abs(mu[big]))])
    return mu


def blend_reciprocal(mu, anchors, conj=True):
    """``mu / v_u + (1 - mu) / v_l`` element-wise (conjugated anchors by default)."""
    v_u = _nonzero(anchors.v_hat_u, "light anchor")
    v_l = _nonzero(anchors.v_hat_l, "heavy anchor")
    if conj:
        v_u, v_l = np.conj(v_u), np.conj(v_l)
    return mu / v_u + (1.0 - mu) / v_l


def build_flat_model(sys, w, v_hat):
    """Linear model around one guessed voltage ``v_hat``."""
    v_hat = _nonzero(v_hat, "guessed voltage")
    anchors = AnchorPair(v_hat, v_hat)
    return build_trained_model(sys, w, anchors, np.ones(v_hat.size))


def build_trained_model(sys, w, anchors, mu):
    """Linear model with blend coefficients ``mu`` over two anchor states."""
    mu = _check_mu(mu, sys.size)
    h = blend_reciprocal(mu, anchors)
    sens = sys.solve_ll(np.diag(h))
    return ComplexLinearModel(np.asarray(w, dtype=complex), sens, anchors, mu)


def predict_voltages(model, s_l):
    s_l = np.asarray(s_l, dtype=complex)
    if s_l.shape[-1] != model.w.size:
        raise ValueError(f"injection vector must have {model.w.size} entries")
    return model.w + np.conj(s_l) @ model.sens.T


def effective_anchor_voltage(mu, anchors):
    """Single voltage whose reciprocal equals the mu-blend of anchor reciprocals."""
    mu = np.asarray(mu, dtype=float)
    r = blend_reciprocal(mu, anchors, conj=False)
    zero = np.flatnonzero(r == 0)
    if zero.size:
        raise ValueError(f"blended reciprocal vanishes at element {zero[0]}")
    return 1.0 / r


def zip_blend(mu, anchors, zip_spec):
    """Diagonal of ``mu B(v_u) + (1 - mu) B(v_l)`` with ``B(v) = A(|v|) / conj(v)``."""
    v_u = _nonzero(anchors.v_hat_u, "light anchor")
    v_l = _nonzero(anchors.v_hat_l, "heavy anchor")
    b_u = zip_spec.factor(np.abs(v_u)) / np.conj(v_u)
    b_l = zip_spec.factor(np.abs(v_l)) / np.conj(v_l)
    return mu * b_u + (1.0 - mu) * b_l


def build_zip_model(sys, w, anchors, mu, zip_spec):
    mu = _check_mu(mu, sys.size)
    if len(zip_spec) != sys.size:
        raise ValueError(f"ZIP spec must have {sys.size} entries")
    h = zip_blend(mu, anchors, zip_spec) * np.conj(zip_spec.s_nom)
    sens_lambda = sys.solve_ll(np.diag(h))
    return ZipLinearModel(np.asarray(w, dtype=complex), sens_lambda, anchors, mu, zip_spec)


def predict_zip(model, lam):
    lam = np.asarray(lam, dtype=float)
    if lam.shape[-1] != model.w.size:
        raise ValueError(f"lambda must have {model.w.size} entries")
    return model.w + lam @ model.sens_lambda.T


def pure_dd_predict(mu, anchors):
    """Load-independent blend ``mu v_u + (1 - mu) v_l``."""
    mu = np.asarray(mu, dtype=float)
    return mu * anchors.v_hat_u + (1.0 - mu) * anchors.v_hat_l


def real_coefficients(sys, v0, v_hat_eff):
    """Approximate load-row currents ``yl0 v0 + yll v_hat_eff`` split into parts."""
    v_hat_eff = np.asarray(v_hat_eff, dtype=complex)
    if v_hat_eff.shape != (sys.size,):
        raise ValueError(f"v_hat_eff must have {sys.size} entries")
    i = sys.yl0 @ np.asarray(v0, dtype=complex) + sys.yll @ v_hat_eff
    return RealCoefficients(i.real.copy(), i.imag.copy())


def nodal_power_real(coeffs, v_re, v_im):
    """Active and reactive injections linear in the voltage parts."""
    v_re = np.asarray(v_re, dtype=float)
    v_im = np.asarray(v_im, dtype=float)
    if v_re.shape != coeffs.i_re.shape or v_im.shape != coeffs.i_re.shape:
        raise ValueError("voltage parts must match the coefficient length")
    p = coeffs.i_re * v_re + coeffs.i_im * v_im
    q = coeffs.i_re * v_im - coeffs.i_im * v_re
    return p, q


# --------------------------------------------------------------------------
# model file

def _pairs(z):
    z = np.asarray(z, dtype=complex)
    return np.stack([z.real, z.imag], axis=-1).tolist()


def _complex(pairs):
    arr = np.asarray(pairs, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def save_model(path, model, index, provenance=None, fit_report=None):
    doc = {
        "kind": "zip" if isinstance(model, ZipLinearModel) else "complex",
        "index": [list(k) for k in index],
        "w": _pairs(model.w),
        "anchors": {"v_hat_u": _pairs(model.anchors.v_hat_u),
                    "v_hat_l": _pairs(model.anchors.v_hat_l)},
        "mu": model.mu.tolist(),
        "provenance": provenance or {},
    }
    if isinstance(model, ZipLinearModel):
        doc["sens_lambda"] = _pairs(model.sens_lambda)
        z = model.zip_spec
        doc["zip"] = {"a": z.a.tolist(), "b": z.b.tolist(), "c": z.c.tolist(),
                      "s_nom": _pairs(z.s_nom), "v_nom": z.v_nom_mag.tolist()}
    else:
        # multiplies conj(s)
        doc["sens"] = _pairs(model.sens)
    if fit_report is not None:
        doc["fit_report"] = fit_report
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_model(path):
    """Returns ``(model, index, document)``."""
    doc = json.loads(Path(path).read_text())
    anchors = AnchorPair(_complex(doc["anchors"]["v_hat_u"]), _complex(doc["anchors"]["v_hat_l"]))
    w = _complex(doc["w"])
    mu = np.asarray(doc["mu"], dtype=float)
    index = tuple(tuple(k) for k in doc["index"])
    if doc["kind"] == "zip":
        z = doc["zip"]
        spec = ZipLoadSpec(z["a"], z["b"], z["c"], _complex(z["s_nom"]), z["v_nom"])
        model = ZipLinearModel(w, _complex(doc["sens_lambda"]), anchors, mu, spec)
    else:
        model = ComplexLinearModel(w, _complex(doc["sens"]), anchors, mu)
    return model, index, doc
