"""Dense operators on the truncated qubit x resonator space.

Operators are plain complex ``numpy`` arrays. The composite space is ordered
qubit factor first, so a basis index ``i = q * N + n`` labels the product
state ``|q, n>`` with ``q = 0`` the excited qubit state (``sigma_z = +1``) and
``q = 1`` the ground state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import MasterlabError

HERMITIAN_RTOL = 1e-12

SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
# |e> = index 0, |g> = index 1
SIGMA_MINUS = np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex)
SIGMA_PLUS = SIGMA_MINUS.T.copy()


def kron(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Kronecker product with the first factor as the slow index."""
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    return np.kron(A, B)


def annihilation(N: int) -> np.ndarray:
    """Truncated bosonic lowering operator with ``a[n-1, n] = sqrt(n)``."""
    if int(N) != N or N < 2:
        raise ValueError(f"invalid truncation N={N!r}: need an integer N >= 2")
    return np.diag(np.sqrt(np.arange(1, N, dtype=float)), 1).astype(complex)


def number(N: int) -> np.ndarray:
    a = annihilation(N)
    return a.conj().T @ a


def dagger(M: np.ndarray) -> np.ndarray:
    return np.conj(M).T


def is_hermitian(M: np.ndarray, rtol: float = HERMITIAN_RTOL) -> bool:
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        return False
    scale = np.max(np.abs(M)) if M.size else 0.0
    if scale == 0.0:
        return True
    return bool(np.max(np.abs(M - M.conj().T)) < rtol * scale)


@dataclass(frozen=True)
class EigSystem:
    """Ascending eigenvalues with column eigenvectors in a fixed gauge."""

    values: np.ndarray
    vectors: np.ndarray
    labels: Optional[Sequence] = field(default=None, compare=False)

    @property
    def dim(self) -> int:
        return len(self.values)

    def to_eigenbasis(self, M: np.ndarray) -> np.ndarray:
        return self.vectors.conj().T @ M @ self.vectors

    def from_eigenbasis(self, M: np.ndarray) -> np.ndarray:
        return self.vectors @ M @ self.vectors.conj().T

    def bohr_frequencies(self) -> np.ndarray:
        """Matrix ``w[m, n] = E_m - E_n``."""
        return self.values[:, None] - self.values[None, :]


def fix_gauge(vectors: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive."""
    vectors = np.array(vectors, dtype=complex)
    rows = np.argmax(np.abs(vectors), axis=0)
    pivots = vectors[rows, np.arange(vectors.shape[1])]
    return vectors * (np.abs(pivots) / pivots)[None, :]


def eigh(H: np.ndarray, check: bool = True) -> EigSystem:
    """Diagonalize a Hermitian operator.

    Eigenvalues come back ascending and each eigenvector is rotated so that
    its largest-magnitude component is real and positive, which makes the
    result reproducible across LAPACK builds.
    """
    H = np.asarray(H, dtype=complex)
    if check and not is_hermitian(H):
        raise MasterlabError("eigh requires a Hermitian operator")
    values, vectors = np.linalg.eigh(H)
    return EigSystem(values=values, vectors=fix_gauge(vectors))


def expectation(rho: np.ndarray, O: np.ndarray) -> complex:
    """``Tr(rho O)`` for a unit-trace density matrix."""
    rho = np.asarray(rho)
    O = np.asarray(O)
    if rho.shape != O.shape:
        raise ValueError(f"dimension mismatch: rho {rho.shape} vs operator {O.shape}")
    tr = np.trace(rho)
    if abs(tr - 1.0) > 1e-8:
        raise ValueError(f"density matrix trace {tr:.3e} differs from 1")
    return complex(np.einsum("ij,ji->", rho, O))


def ket(dim: int, index: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def projector(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    return np.outer(psi, psi.conj())


def coherent_state(N: int, alpha: complex) -> np.ndarray:
    """Fock-space coherent state truncated to N levels and renormalized."""
    n = np.arange(N)
    log_fact = np.cumsum(np.log(np.maximum(n, 1)))
    amp = np.exp(-0.5 * abs(alpha) ** 2 - 0.5 * log_fact) * (
        alpha ** n if alpha != 0 else (n == 0).astype(float)
    )
    amp = np.asarray(amp, dtype=complex)
    return amp / np.linalg.norm(amp)
