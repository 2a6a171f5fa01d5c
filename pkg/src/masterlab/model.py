"""Qubit-resonator Hamiltonians, drives and dressed-state bookkeeping.

All frequencies are angular, in rad/ns. ``SystemParams.from_ghz`` accepts
ordinary frequencies (omega / 2 pi) in GHz.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from . import hilbert as hs
from .exceptions import AmbiguousLabelError, ConfigError

TWO_PI = 2.0 * math.pi

# Typical readout parameters, as omega / 2 pi in GHz.
REFERENCE_GHZ = {"omega_q": 5.304, "omega_r": 7.5, "g": 0.211}


@dataclass(frozen=True)
class SystemParams:
    omega_q: float
    omega_r: float
    g: float
    kappa: float
    omega_d: Optional[float] = None
    drive_amp: float = 0.0
    n_trunc: int = 10

    def __post_init__(self):
        if self.omega_d is None:
            object.__setattr__(self, "omega_d", self.omega_r)
        for name in ("omega_q", "omega_r", "kappa"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.g < 0:
            raise ConfigError(f"g must be non-negative, got {self.g}")
        if int(self.n_trunc) != self.n_trunc or self.n_trunc < 2:
            raise ConfigError(f"n_trunc must be an integer >= 2, got {self.n_trunc}")
        if self.delta != 0 and abs(self.g / self.delta) > 0.2:
            warnings.warn(
                f"|g/Delta| = {abs(self.g / self.delta):.3f} > 0.2: outside the dispersive regime",
                stacklevel=3,
            )

    @classmethod
    def from_ghz(cls, omega_q, omega_r, g, kappa, omega_d=None, drive_amp=0.0, n_trunc=10):
        """Build from omega/2pi values in GHz."""
        return cls(
            omega_q=TWO_PI * omega_q,
            omega_r=TWO_PI * omega_r,
            g=TWO_PI * g,
            kappa=TWO_PI * kappa,
            omega_d=None if omega_d is None else TWO_PI * omega_d,
            drive_amp=TWO_PI * drive_amp,
            n_trunc=n_trunc,
        )

    @classmethod
    def reference(cls, kappa_ghz: float = 0.1, **kw):
        """The reference device (omega_q, omega_r, g)/2pi = (5.304, 7.5, 0.211) GHz."""
        return cls.from_ghz(kappa=kappa_ghz, **REFERENCE_GHZ, **kw)

    @property
    def delta(self) -> float:
        return self.omega_q - self.omega_r

    @property
    def sigma(self) -> float:
        return self.omega_q + self.omega_r

    @property
    def dim(self) -> int:
        return 2 * self.n_trunc

    def with_(self, **changes) -> "SystemParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class DriveSpec:
    """Resonator drive: ``cosine`` is eta cos(wt) X, ``rwa`` is eps (a e^{iwt} + h.c.)."""

    kind: str = "none"
    amplitude: float = 0.0
    frequency: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "cosine", "rwa"):
            raise ConfigError(f"unknown drive kind {self.kind!r}")
        if self.kind == "none" and self.amplitude != 0.0:
            raise ConfigError("drive kind 'none' requires zero amplitude")
        if self.kind != "none" and not self.frequency > 0:
            raise ConfigError("a drive needs a positive frequency")

    @property
    def active(self) -> bool:
        return self.kind != "none" and self.amplitude != 0.0

    @property
    def period(self) -> float:
        return TWO_PI / self.frequency


@dataclass(frozen=True)
class Operators:
    """The standard operators of the composite space for truncation N."""

    N: int
    a: np.ndarray = field(repr=False)
    adag: np.ndarray = field(repr=False)
    n: np.ndarray = field(repr=False)
    X: np.ndarray = field(repr=False)
    sigma_z: np.ndarray = field(repr=False)
    sigma_x: np.ndarray = field(repr=False)
    sigma_plus: np.ndarray = field(repr=False)
    sigma_minus: np.ndarray = field(repr=False)
    excitations: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, N: int) -> "Operators":
        a1 = hs.annihilation(N)
        I2, IN = np.eye(2), np.eye(N)
        a = hs.kron(I2, a1)
        n = hs.kron(I2, a1.conj().T @ a1)
        sz = hs.kron(hs.SIGMA_Z, IN)
        return cls(
            N=N,
            a=a,
            adag=a.conj().T,
            n=n,
            X=a + a.conj().T,
            sigma_z=sz,
            sigma_x=hs.kron(hs.SIGMA_X, IN),
            sigma_plus=hs.kron(hs.SIGMA_PLUS, IN),
            sigma_minus=hs.kron(hs.SIGMA_MINUS, IN),
            excitations=n + 0.5 * sz,
        )

    @property
    def dim(self) -> int:
        return 2 * self.N

    def index(self, qubit: str, photons: int) -> int:
        return {"e": 0, "g": 1}[qubit] * self.N + photons


def operators(p: SystemParams | int) -> Operators:
    return Operators.build(p if isinstance(p, int) else p.n_trunc)


def _bare(p: SystemParams, ops: Operators) -> np.ndarray:
    return 0.5 * p.omega_q * ops.sigma_z + p.omega_r * ops.n


def build_rabi(p: SystemParams) -> np.ndarray:
    """(w_q/2) sz + w_r a^dag a + g sx (a + a^dag)."""
    ops = operators(p)
    return _bare(p, ops) + p.g * (ops.sigma_x @ ops.X)


def build_jc(p: SystemParams) -> np.ndarray:
    """Rabi Hamiltonian with the counter-rotating coupling terms removed."""
    ops = operators(p)
    return _bare(p, ops) + p.g * (ops.sigma_minus @ ops.adag + ops.sigma_plus @ ops.a)


def drive_operator(spec: DriveSpec, t: float, N: int) -> np.ndarray:
    if t < 0:
        raise ValueError("drive time must be non-negative")
    ops = operators(N)
    if spec.kind == "none":
        return np.zeros((ops.dim, ops.dim), dtype=complex)
    w = spec.frequency
    if spec.kind == "cosine":
        return spec.amplitude * math.cos(w * t) * ops.X
    phase = np.exp(1j * w * t)
    return spec.amplitude * (phase * ops.a + np.conj(phase) * ops.adag)


def default_drive(p: SystemParams, kind: str) -> DriveSpec:
    if kind == "none" or p.drive_amp == 0.0:
        return DriveSpec()
    return DriveSpec(kind=kind, amplitude=p.drive_amp, frequency=p.omega_d)


# A label is ambiguous when the runner-up bare state carries more than this
# fraction of the leading overlap^2.
LABEL_MARGIN = 0.5


@dataclass(frozen=True)
class DressedLabel:
    index: int
    qubit: str
    photons: int
    overlap2: float

    @property
    def name(self) -> str:
        return f"{self.qubit}{self.photons}"


def dressed_labels(eig: hs.EigSystem, p: SystemParams, n_states: int = 6) -> List[DressedLabel]:
    """Label the lowest eigenstates by their dominant bare product state."""
    N = p.n_trunc
    weights = np.abs(eig.vectors[:, :n_states]) ** 2
    labels: List[DressedLabel] = []
    claimed = {}
    for k in range(min(n_states, eig.dim)):
        order = np.argsort(weights[:, k])[::-1]
        bare, rival = int(order[0]), int(order[1])
        if weights[rival, k] > LABEL_MARGIN * weights[bare, k]:
            # strongly hybridized: another low-lying eigenvector shares both bare states
            others = [j for j in range(weights.shape[1]) if j != k]
            j = others[int(np.argmax(weights[bare, others]))]
            q, n = divmod(bare, N)
            raise AmbiguousLabelError(
                f"eigenstates {min(j, k)} and {max(j, k)} both map to |{'eg'[q]},{n}> "
                f"(overlap^2 {weights[bare, k]:.3f} vs {weights[rival, k]:.3f})"
            )
        if bare in claimed:
            q, n = divmod(bare, N)
            raise AmbiguousLabelError(
                f"eigenstates {claimed[bare]} and {k} both map to |{'eg'[q]},{n}>"
            )
        claimed[bare] = k
        q, n = divmod(bare, N)
        labels.append(DressedLabel(index=k, qubit="eg"[q], photons=n, overlap2=float(weights[bare, k])))
    return labels


def dressed_index(eig: hs.EigSystem, p: SystemParams, name: str, n_states: int = 6) -> int:
    """Eigen-index of the dressed state called e.g. ``"e0"`` or ``"g1"``."""
    for lab in dressed_labels(eig, p, n_states):
        if lab.name == name:
            return lab.index
    raise KeyError(f"no dressed state {name!r} among the lowest {n_states}")


def dispersive_shift(p: SystemParams) -> float:
    """chi = g^2 (1/Delta + 1/Sigma)."""
    if p.delta == 0:
        raise ZeroDivisionError("dispersive shift is singular at zero detuning")
    return p.g ** 2 * (1.0 / p.delta + 1.0 / p.sigma)


def stark_shifted_freq(p: SystemParams, nbar: float) -> float:
    if nbar < 0:
        raise ValueError("nbar must be non-negative")
    return p.omega_q + 2.0 * dispersive_shift(p) * nbar
