"""Operator algebra on the chain-plus-sink Hilbert space.

Basis conventions
-----------------
- Composite ordering is ``site 1 (x) site 2 (x) ... (x) site N (x) sink``: site 1
  is the slowest-varying tensor factor, the sink the fastest.
- Each two-level factor is ordered ``(|g>, |e>)``, so ``|e>`` is bit value 1.
  A full-space basis index therefore reads as a binary string ``b_1 b_2 ... b_N b_s``.

Ladder operators follow the transport literature this package reproduces, where
``sigma_minus = |e><g|`` raises and ``sigma_plus = |g><e|`` lowers.  In standard
quantum-optics notation these are ``sigma_+`` and ``sigma_-`` respectively.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

ComplexMatrix = NDArray[np.complex128]

#: Eigenvalues below ``-NEG_EIG_TOL`` are treated as a genuine positivity violation.
NEG_EIG_TOL = 1e-9


class PositivityError(ValueError):
    """Raised when a density matrix has an eigenvalue below the tolerated floor."""


class Representation(enum.Enum):
    FULL = "full"
    REDUCED = "reduced"


SIGMA_Z = np.diag([-1.0, 1.0]).astype(np.complex128)
IDENTITY_2 = np.eye(2, dtype=np.complex128)
PROJ_G = np.diag([1.0, 0.0]).astype(np.complex128)
PROJ_E = np.diag([0.0, 1.0]).astype(np.complex128)


def sigma_minus() -> ComplexMatrix:
    """``|e><g|`` (raising, despite the name).  Standard notation: ``sigma_+``."""
    m = np.zeros((2, 2), dtype=np.complex128)
    m[1, 0] = 1.0
    return m


def sigma_plus() -> ComplexMatrix:
    """``|g><e|`` (lowering).  Standard notation: ``sigma_-``."""
    return sigma_minus().conj().T.copy()


def embed_site_op(local: ComplexMatrix, site: int, n_systems: int) -> ComplexMatrix:
    """Place a 2x2 operator at ``site`` (1-based) in an ``n_systems``-qubit product.

    >>> embed_site_op(SIGMA_Z, 1, 2).diagonal().real
    array([-1., -1.,  1.,  1.])
    """
    if n_systems < 1:
        raise ValueError(f"n_systems must be >= 1, got {n_systems}")
    if not 1 <= site <= n_systems:
        raise IndexError(f"site {site} out of range 1..{n_systems}")
    local = np.asarray(local, dtype=np.complex128)
    if local.shape != (2, 2):
        raise ValueError(f"local operator must be 2x2, got {local.shape}")
    left = np.eye(2 ** (site - 1), dtype=np.complex128)
    right = np.eye(2 ** (n_systems - site), dtype=np.complex128)
    return np.kron(np.kron(left, local), right)


def is_hermitian(m: ComplexMatrix, atol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= atol)


@dataclass(frozen=True)
class DensityState:
    """A density matrix in either the full or the single-excitation representation.

    For ``REDUCED`` states ``matrix`` is the ``(N+1) x (N+1)`` block spanned by
    ``|site 1>, ..., |site N>, |sink>`` (one excitation each) and ``vacuum`` holds
    the population of the all-ground state.  Coherences between the vacuum and
    the one-excitation block are never generated by the dynamics and are not stored.

    Instances are also used to carry time derivatives, so construction does not
    enforce the unit-trace invariant; call :meth:`validate` for that.
    """

    representation: Representation
    matrix: ComplexMatrix
    vacuum: float = 0.0
    n_sites: int = field(default=0)

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"density matrix must be square, got {m.shape}")
        if self.representation is Representation.FULL:
            n = int(round(np.log2(m.shape[0]))) - 1
            if 2 ** (n + 1) != m.shape[0] or n < 1:
                raise ValueError(f"full-space dimension must be 2^(N+1) with N >= 1, got {m.shape[0]}")
        else:
            n = m.shape[0] - 1
            if n < 1:
                raise ValueError("reduced block needs at least one chain site and the sink")
        if self.n_sites and self.n_sites != n:
            raise ValueError(f"n_sites={self.n_sites} inconsistent with matrix shape {m.shape}")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "n_sites", n)
        object.__setattr__(self, "vacuum", float(self.vacuum))

    @property
    def trace(self) -> float:
        t = float(np.trace(self.matrix).real)
        return t + self.vacuum if self.representation is Representation.REDUCED else t

    def spectrum(self) -> NDArray[np.float64]:
        """Eigenvalues of the represented density operator (vacuum included when reduced)."""
        ev = np.linalg.eigvalsh(self.matrix)
        if self.representation is Representation.REDUCED:
            ev = np.append(ev, self.vacuum)
        return ev

    def diagonal(self) -> NDArray[np.float64]:
        d = self.matrix.diagonal().real
        if self.representation is Representation.REDUCED:
            d = np.append(d, self.vacuum)
        return d

    def validate(self, trace_tol: float = 1e-9, herm_tol: float = 1e-12, eig_tol: float = NEG_EIG_TOL) -> None:
        if abs(self.trace - 1.0) > trace_tol:
            raise ValueError(f"trace {self.trace!r} differs from 1 by more than {trace_tol}")
        if not is_hermitian(self.matrix, herm_tol):
            raise ValueError("density matrix is not Hermitian")
        lo = float(self.spectrum().min())
        if lo < -eig_tol:
            raise PositivityError(f"smallest eigenvalue {lo:.3e} below -{eig_tol}")


def initial_state(n_sites: int, representation: Representation = Representation.FULL) -> DensityState:
    """One excitation on site 1, everything else (sink included) in the ground state."""
    if n_sites < 1:
        raise ValueError(f"N must be >= 1, got {n_sites}")
    if representation is Representation.REDUCED:
        block = np.zeros((n_sites + 1, n_sites + 1), dtype=np.complex128)
        block[0, 0] = 1.0
        return DensityState(representation, block, vacuum=0.0)
    dim = 2 ** (n_sites + 1)
    rho = np.zeros((dim, dim), dtype=np.complex128)
    idx = 1 << n_sites  # bit of site 1 is the most significant
    rho[idx, idx] = 1.0
    return DensityState(representation, rho)


def entropy_from_eigenvalues(ev: NDArray[np.float64], tol: float = NEG_EIG_TOL) -> NDArray[np.float64]:
    """Von Neumann entropy (nats) of one spectrum or a stack of spectra along the last axis.

    Eigenvalues in ``[-tol, 0)`` are clamped to zero; anything lower raises
    :class:`PositivityError`.
    """
    ev = np.asarray(ev, dtype=np.float64)
    lo = ev.min(initial=0.0)
    if lo < -tol:
        raise PositivityError(f"eigenvalue {lo:.3e} below -{tol}")
    p = np.clip(ev, 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, -p * np.log(p), 0.0)
    return terms.sum(axis=-1)


def von_neumann_entropy(rho: DensityState | ComplexMatrix, tol: float = NEG_EIG_TOL) -> float:
    """``-Tr[rho ln rho]`` with ``0 ln 0 = 0``."""
    if isinstance(rho, DensityState):
        ev = rho.spectrum()
    else:
        ev = np.linalg.eigvalsh(np.asarray(rho, dtype=np.complex128))
    return float(entropy_from_eigenvalues(ev, tol))
