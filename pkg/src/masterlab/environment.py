"""Environment spectral densities and Purcell-filter composition.

Densities are zero at non-positive frequency: the bath is at zero
temperature, so upward transitions carry no rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import ConfigError, NumericalError


@dataclass(frozen=True)
class FilterSpec:
    omega_f: float
    gamma_f: float

    def __post_init__(self):
        if not self.gamma_f > 0:
            raise ConfigError(f"filter bandwidth must be positive, got {self.gamma_f}")


def bandpass_factor(f: FilterSpec, omega):
    """Lorentzian transmission 1 / (1 + ((w - w_f) / gamma_f)^2)."""
    x = (np.asarray(omega, dtype=float) - f.omega_f) / f.gamma_f
    return 1.0 / (1.0 + x * x)


@dataclass(frozen=True)
class SpectralDensity:
    kind: str
    level: float = 0.0
    alpha: float = 0.0
    omega_c: float = math.inf
    filter: Optional[FilterSpec] = None
    base: Optional["SpectralDensity"] = None

    def __post_init__(self):
        if self.kind not in ("flat", "ohmic", "composed"):
            raise ConfigError(f"unknown spectral density kind {self.kind!r}")
        if self.kind == "composed" and (self.base is None or self.filter is None):
            raise ConfigError("a composed density needs a base density and a filter")
        if self.level < 0 or self.alpha < 0:
            raise ConfigError("spectral densities must be non-negative")

    def __call__(self, omega):
        w = np.asarray(omega, dtype=float)
        if self.kind == "flat":
            out = np.where(w > 0, self.level, 0.0)
        elif self.kind == "ohmic":
            out = np.where((w > 0) & (w <= self.omega_c), 0.5 * math.pi * self.alpha * w, 0.0)
        else:
            out = self.base(w) * bandpass_factor(self.filter, w)
        return out if out.ndim else float(out)

    @property
    def cutoff(self) -> float:
        return self.base.cutoff if self.kind == "composed" else self.omega_c


def evaluate(J: SpectralDensity, omega):
    return J(omega)


def flat(level: float) -> SpectralDensity:
    return SpectralDensity(kind="flat", level=level)


def ohmic(alpha: float, omega_c: float) -> SpectralDensity:
    return SpectralDensity(kind="ohmic", alpha=alpha, omega_c=omega_c)


def calibrated_ohmic(kappa: float, omega_r: float, omega_c: Optional[float] = None) -> SpectralDensity:
    """Ohmic density with J(omega_r) = kappa and cutoff 2 omega_r by default."""
    alpha = 2.0 * kappa / (math.pi * omega_r)
    return ohmic(alpha, 2.0 * omega_r if omega_c is None else omega_c)


def compose(base: SpectralDensity, f: FilterSpec) -> SpectralDensity:
    if base.kind == "composed":
        raise ConfigError("density is already filtered; nested filters are not supported")
    return SpectralDensity(kind="composed", filter=f, base=base)


def t1_gain(base: SpectralDensity, eff: SpectralDensity, omega_q: float) -> float:
    """Suppression J(w_q) / J_eff(w_q) of the qubit decay channel."""
    j_eff = float(eff(omega_q))
    if j_eff <= 0:
        raise NumericalError(f"effective density vanishes at omega_q={omega_q}: infinite gain")
    return float(base(omega_q)) / j_eff
