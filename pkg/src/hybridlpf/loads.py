"""Voltage-dependent (ZIP) load description."""

from dataclasses import dataclass

import numpy as np

from .defaults import ZIP_SUM_TOL as SUM_TOL
from .errors import FeederError


def zip_factor(v_mag, v_nom_mag, a, b, c):
    """Polynomial load factor ``a*(x)^2 + b*x + c`` with ``x = |v| / |v_nom|``."""
    x = np.asarray(v_mag, dtype=float) / v_nom_mag
    return a * x * x + b * x + c


@dataclass(frozen=True, eq=False)
class ZipLoadSpec:
    """Per node-phase ZIP coefficients and nominal injections.

    ``s_nom`` uses the injection sign convention (a consuming load has negative
    real part). Active and reactive parts share the same coefficients and the
    same change rate.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    s_nom: np.ndarray
    v_nom_mag: np.ndarray

    def __post_init__(self):
        for name in ("a", "b", "c", "v_nom_mag"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "s_nom", np.asarray(self.s_nom, dtype=complex))
        n = self.s_nom.shape
        if not (self.a.shape == self.b.shape == self.c.shape == self.v_nom_mag.shape == n):
            raise FeederError("ZIP coefficient arrays must share one shape")
        bad = np.flatnonzero(np.abs(self.a + self.b + self.c - 1.0) > SUM_TOL)
        if bad.size:
            raise FeederError(f"ZIP coefficients must sum to 1 (element {bad[0]})")
        if np.any(self.v_nom_mag <= 0):
            raise FeederError("nominal voltage magnitudes must be positive")

    def __len__(self):
        return self.s_nom.size

    @classmethod
    def constant_power(cls, s_nom, v_nom_mag=None):
        s_nom = np.asarray(s_nom, dtype=complex)
        zeros = np.zeros(s_nom.shape)
        v_nom = np.ones(s_nom.shape) if v_nom_mag is None else v_nom_mag
        return cls(zeros, zeros.copy(), np.ones(s_nom.shape), s_nom, v_nom)

    @property
    def is_constant_power(self):
        return bool(np.all(self.a == 0) and np.all(self.b == 0) and np.all(self.c == 1))

    def factor(self, v_mag):
        return zip_factor(v_mag, self.v_nom_mag, self.a, self.b, self.c)

    def injection(self, lam, v):
        """Complex injection ``lam * s_nom * A(|v|)`` at voltage ``v``."""
        return (np.asarray(lam, dtype=float) * self.s_nom) * self.factor(np.abs(v))
