"""Lindblad and Bloch-Redfield dissipators.

The Redfield generator for a system coupled through a Hermitian operator A
to a zero-temperature bath with spectral density J is assembled in the
eigenbasis {|m>} of the system Hamiltonian. Writing

    Lam[m, n] = RATE_PREFACTOR * J(E_n - E_m) * A[m, n]

the four Gamma terms of the tensor collapse into the operator form

    D(rho) = -[A, Lam rho - rho Lam^dag],

which is what ``redfield_apply`` evaluates in O(dim^3). The dense rank-4
tensor ``R[m, n, m', n']`` is only materialized when a secular cutoff is set
or when explicitly requested.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Tuple

import numpy as np

from . import hilbert as hs
from .environment import SpectralDensity
from .exceptions import AdiabaticityError, MasterlabError

# Half-range correlation integral: Re int_0^inf C(t) e^{iwt} dt = J(w) / 2.
# With this factor the golden-rule rate of m <- n is J(w_nm) |A_mn|^2.
RATE_PREFACTOR = 0.5

# omega_sec value selecting the full secular limit.
FULL_SECULAR = 0.0

# Largest dimension for which a masked (secular) tensor may be applied densely.
DENSE_MAX_DIM = 64


def lindblad_apply(rho: np.ndarray, a: np.ndarray, kappa: float) -> np.ndarray:
    """kappa (a rho a^dag - {a^dag a, rho} / 2)."""
    if rho.shape != a.shape:
        raise ValueError(f"dimension mismatch: rho {rho.shape} vs jump {a.shape}")
    ad = a.conj().T
    nop = ad @ a
    return kappa * (a @ rho @ ad - 0.5 * (nop @ rho + rho @ nop))


def lindblad_rate(eig: hs.EigSystem, a: np.ndarray, kappa: float, mu: int, nu: int) -> float:
    """Rate of the eigen-transition mu <- nu under kappa D[a]."""
    amp = eig.vectors[:, mu].conj() @ a @ eig.vectors[:, nu]
    return float(kappa * abs(amp) ** 2)


@dataclass(frozen=True)
class CorrelationSpec:
    """System coupling operator A (lab basis) and the bath spectral density."""

    coupling: np.ndarray = field(repr=False)
    density: SpectralDensity

    def __post_init__(self):
        if not hs.is_hermitian(self.coupling):
            raise MasterlabError("bath coupling operator must be Hermitian")


def secular_mask(freqs: np.ndarray, omega_sec: Optional[float]) -> Optional[np.ndarray]:
    """Boolean mask over (m, n, m', n') of retained terms, or None for all.

    ``freqs[m, n] = E_m - E_n``. A positive cutoff keeps
    |w_mn - w_m'n'| < omega_sec. ``FULL_SECULAR`` keeps only the terms whose
    Bohr frequencies coincide for any spectrum: population transfer
    (m = n, m' = n') and coherence self-coupling (m = m', n = n').
    """
    if omega_sec is None or np.isinf(omega_sec):
        return None
    d = freqs.shape[0]
    if omega_sec < 0:
        raise ValueError("omega_sec must be non-negative")
    if omega_sec == FULL_SECULAR:
        eye = np.eye(d, dtype=bool)
        pop = eye[:, :, None, None] & eye[None, None, :, :]
        coh = eye[:, None, :, None] & eye[None, :, None, :]
        return pop | coh
    return np.abs(freqs[:, :, None, None] - freqs[None, None, :, :]) < omega_sec


def redfield_rates(eig: hs.EigSystem, density: SpectralDensity) -> np.ndarray:
    """K[m, n] = RATE_PREFACTOR * J(E_n - E_m)."""
    return RATE_PREFACTOR * np.asarray(density(-eig.bohr_frequencies()), dtype=float)


@dataclass(frozen=True)
class RedfieldTensor:
    basis: hs.EigSystem
    coupling: np.ndarray = field(repr=False)  # A in the eigenbasis
    rates: np.ndarray = field(repr=False)  # K[m, n]
    omega_sec: Optional[float] = None

    @property
    def dim(self) -> int:
        return self.basis.dim

    @cached_property
    def lam(self) -> np.ndarray:
        return self.rates * self.coupling

    @cached_property
    def mask(self) -> Optional[np.ndarray]:
        return secular_mask(self.basis.bohr_frequencies(), self.omega_sec)

    def entries(self) -> np.ndarray:
        """Dense R[m, n, m', n'] with the secular mask applied."""
        A, L = self.coupling, self.lam
        d = self.dim
        eye = np.eye(d)
        R = np.einsum("ac,db->abcd", L, A)  # Lam_mm' A_n'n
        R += np.einsum("ac,bd->abcd", A, L.conj())  # A_mm' conj(Lam_nn')
        R -= np.einsum("ac,bd->abcd", A @ L, eye)
        R -= np.einsum("ac,bd->abcd", eye, (L.conj().T @ A).T)
        if self.mask is not None:
            R = np.where(self.mask, R, 0.0)
        return R

    @cached_property
    def superoperator(self) -> np.ndarray:
        """R reshaped to act on row-major vec(rho) in the eigenbasis."""
        d = self.dim
        return self.entries().reshape(d * d, d * d)

    def lab_factors(self) -> Tuple[np.ndarray, np.ndarray]:
        """(A, Lam) rotated back to the lab basis."""
        return self.basis.from_eigenbasis(self.coupling), self.basis.from_eigenbasis(self.lam)


def build_redfield(H0: np.ndarray, spec: CorrelationSpec, omega_sec: Optional[float] = None,
                   basis: Optional[hs.EigSystem] = None) -> RedfieldTensor:
    if not hs.is_hermitian(H0):
        raise MasterlabError("Redfield tensor requires a Hermitian Hamiltonian")
    eig = hs.eigh(H0) if basis is None else basis
    return RedfieldTensor(
        basis=eig,
        coupling=eig.to_eigenbasis(spec.coupling),
        rates=redfield_rates(eig, spec.density),
        omega_sec=omega_sec,
    )


def factored_apply(A: np.ndarray, lam: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """-[A, lam rho - rho lam^dag] for arbitrary (not necessarily Hermitian) rho."""
    Y = lam @ rho - rho @ lam.conj().T
    return Y @ A - A @ Y


def redfield_apply(R: RedfieldTensor, rho_eig: np.ndarray) -> np.ndarray:
    """Dissipative part of d rho / dt, with rho in ``R.basis``."""
    d = R.dim
    if rho_eig.shape != (d, d):
        raise ValueError(f"basis mismatch: tensor dim {d}, rho {rho_eig.shape}")
    if R.mask is None:
        return factored_apply(R.coupling, R.lam, rho_eig)
    if d > DENSE_MAX_DIM:
        raise MasterlabError(
            f"secular filtering materializes the dim^4 tensor; dim {d} exceeds {DENSE_MAX_DIM}")
    return (R.superoperator @ rho_eig.reshape(-1)).reshape(d, d)


def match_gauge(eig: hs.EigSystem, prev: hs.EigSystem, n_track: Optional[int] = None,
                min_overlap: float = 0.5) -> hs.EigSystem:
    """Reorder and rephase ``eig`` to follow the eigenvectors of ``prev``.

    Each tracked previous eigenvector is paired with the new eigenvector of
    largest overlap; phases are then chosen so <m_prev|m> is real positive.
    """
    d = eig.dim
    n_track = d if n_track is None else min(n_track, d)
    ov = prev.vectors.conj().T @ eig.vectors  # <m_prev | n>
    mag = np.abs(ov)
    order = list(range(d))
    taken = set()
    for m in range(n_track):
        k = int(np.argmax(mag[m]))
        if mag[m, k] < min_overlap or k in taken:
            raise AdiabaticityError(
                f"instantaneous state {m} lost track: best overlap {mag[m, k]:.3f} with state {k}"
            )
        taken.add(k)
        order[m] = k
    rest = [k for k in range(d) if k not in taken]
    order[n_track:] = rest
    order = np.array(order)
    vecs = eig.vectors[:, order]
    vals = eig.values[order]
    phases = np.diag(ov[:, order])[:n_track]
    fix = np.ones(d, dtype=complex)
    fix[:n_track] = np.abs(phases) / phases
    return hs.EigSystem(values=vals, vectors=vecs * fix[None, :])


def instantaneous_factors(H_t: np.ndarray, spec: CorrelationSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Lab-basis (A, Lam) built in the instantaneous eigenbasis of H_t.

    Lam = sum_mn K[m, n] |m><m|A|n><n| is independent of eigenvector phases and
    ordering, so no gauge tracking is needed here.
    """
    vals, vecs = np.linalg.eigh(H_t)
    freqs = vals[None, :] - vals[:, None]  # E_n - E_m
    K = RATE_PREFACTOR * np.asarray(spec.density(freqs), dtype=float)
    A_eig = vecs.conj().T @ spec.coupling @ vecs
    return spec.coupling, vecs @ (K * A_eig) @ vecs.conj().T


def td_redfield_apply(HS_t: np.ndarray, spec: CorrelationSpec, rho_lab: np.ndarray,
                      prev_gauge: Optional[hs.EigSystem] = None, omega_sec: Optional[float] = None,
                      n_track: Optional[int] = None) -> Tuple[np.ndarray, hs.EigSystem]:
    """Redfield dissipator in the instantaneous eigenbasis of the driven Hamiltonian.

    Returns the lab-basis derivative and the gauge-matched eigensystem to pass
    as ``prev_gauge`` at the next call.
    """
    if not hs.is_hermitian(HS_t):
        raise MasterlabError("instantaneous Hamiltonian must be Hermitian")
    eig = hs.eigh(HS_t, check=False)
    if prev_gauge is not None:
        eig = match_gauge(eig, prev_gauge, n_track=n_track)
    R = build_redfield(HS_t, spec, omega_sec=omega_sec, basis=eig)
    out = redfield_apply(R, eig.to_eigenbasis(rho_lab))
    return eig.from_eigenbasis(out), eig
