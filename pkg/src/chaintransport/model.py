"""Master-equation generators for the chain-plus-sink transport model.

Two scenarios share local noise and the sink:

- ``QUANTUM``: coherent nearest-neighbour hopping ``lambda (s+_j s-_{j+1} + h.c.)``.
- ``CLASSICAL``: the hopping Hamiltonian is replaced by a pair of incoherent
  hopping channels (``j -> j+1`` and ``j+1 -> j``) of the same strength.

Rate conventions
----------------
Every incoherent channel is written as ``c (2 J rho J^+ - {J^+ J, rho})``
(see :func:`dissipator`).  How the user-facing rates map onto ``c`` is set by
:class:`LindbladConvention`:

``STANDARD`` (default)
    ``c = rate / 2``, i.e. ``rate (J rho J^+ - 1/2 {J^+ J, rho})``.  Population
    moves at rate ``Gamma`` (loss), ``Gamma_s`` (sink) and ``lambda`` (classical
    hop).  With it the reference point (N=3, Gamma=0.5, gamma=0.25,
    Gamma_s=1) has ``lambda_QC ~ 0.836`` and ``C_max ~ 0.22`` at that coupling.
``DOUBLED``
    ``c = rate``: population rates become ``2 Gamma``, ``2 Gamma_s``, ``2 lambda``.

Dephasing is ``gamma (s^z rho s^z - rho)`` per chain site in both conventions,
so coherence between two chain sites decays at ``4 gamma`` and between a chain
site and the sink at ``2 gamma``.  The sink itself carries no local noise.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .operators import (
    SIGMA_Z,
    ComplexMatrix,
    DensityState,
    Representation,
    embed_site_op,
    sigma_minus,
    sigma_plus,
)


class DimensionError(ValueError):
    pass


class Scenario(enum.Enum):
    QUANTUM = "quantum"
    CLASSICAL = "classical"


class LindbladConvention(enum.Enum):
    STANDARD = "standard"
    DOUBLED = "doubled"

    @property
    def coefficient(self) -> float:
        """Multiplier from a user rate to the coefficient of :func:`dissipator`."""
        return 0.5 if self is LindbladConvention.STANDARD else 1.0


# user-facing parameter names, used in validation messages and CSV headers
PARAM_NAMES = {
    "omega": "omega",
    "lam": "lambda",
    "big_gamma": "Gamma",
    "gamma": "gamma",
    "gamma_sink": "Gamma_s",
}


@dataclass(frozen=True)
class ChainSpec:
    """Physical parameters of one run.

    All rates share a single inverse-time unit.  ``scenario`` is ignored by the
    functions that always run both scenarios (e.g. ``analysis.run_point``).
    """

    n: int
    lam: float
    big_gamma: float
    gamma: float
    gamma_sink: float = 1.0
    omega: float = 0.0
    scenario: Scenario = Scenario.QUANTUM
    convention: LindbladConvention = LindbladConvention.STANDARD

    def __post_init__(self) -> None:
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 1:
            raise ValueError(f"N must be an integer >= 1, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        for attr, label in PARAM_NAMES.items():
            value = float(getattr(self, attr))
            if not math.isfinite(value):
                raise ValueError(f"{label} must be finite, got {value!r}")
            if value < 0:
                raise ValueError(f"{label} must be non-negative, got {value!r}")
            object.__setattr__(self, attr, value)
        if self.gamma_sink <= 0:
            raise ValueError(f"Gamma_s must be strictly positive, got {self.gamma_sink!r}")
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        object.__setattr__(self, "convention", LindbladConvention(self.convention))

    def with_(self, **changes) -> "ChainSpec":
        return replace(self, **changes)

    @property
    def sink_rate(self) -> float:
        """Population transfer rate from site N into the sink."""
        return 2.0 * self.convention.coefficient * self.gamma_sink

    @property
    def fastest_rate(self) -> float:
        """Upper bound on any decay or oscillation rate of the generator.

        Rates add up at the last site (loss plus sink), so the sum rather than
        the largest single rate sets the time resolution.
        """
        k = 2.0 * self.convention.coefficient
        return k * (self.big_gamma + self.gamma_sink) + 2.0 * self.lam + 4.0 * self.gamma


def dissipator(jump: ComplexMatrix, rate: float, rho: ComplexMatrix) -> ComplexMatrix:
    """``rate (2 J rho J^+ - J^+ J rho - rho J^+ J)``.

    Note the explicit factor 2: for ``J = |g><e|`` the excited population decays
    at ``2 * rate``.
    """
    jump = np.asarray(jump)
    rho = np.asarray(rho)
    if jump.ndim != 2 or jump.shape != rho.shape or jump.shape[0] != jump.shape[1]:
        raise DimensionError(f"jump {jump.shape} and rho {rho.shape} must be equal square shapes")
    jd = jump.conj().T
    jdj = jd @ jump
    return rate * (2.0 * jump @ rho @ jd - jdj @ rho - rho @ jdj)


def build_hamiltonian(spec: ChainSpec, include_hopping: bool = True) -> ComplexMatrix:
    """``(omega/2) sum_j s^z_j + lambda sum_j (s+_j s-_{j+1} + s-_j s+_{j+1})`` on chain sites.

    The sink factor carries the identity.  ``include_hopping=False`` gives the
    free part only.
    """
    n_sys = spec.n + 1
    dim = 2**n_sys
    h = np.zeros((dim, dim), dtype=np.complex128)
    for j in range(1, spec.n + 1):
        h += 0.5 * spec.omega * embed_site_op(SIGMA_Z, j, n_sys)
    if include_hopping:
        sp, sm = sigma_plus(), sigma_minus()
        for j in range(1, spec.n):
            a = embed_site_op(sp, j, n_sys) @ embed_site_op(sm, j + 1, n_sys)
            h += spec.lam * (a + a.conj().T)
    return h


def sink_jump(n: int) -> ComplexMatrix:
    """Moves the excitation from site N into the sink: ``|g><e|_N (x) |e><g|_s``."""
    n_sys = n + 1
    return embed_site_op(sigma_plus(), n, n_sys) @ embed_site_op(sigma_minus(), n_sys, n_sys)


def hop_jump(n: int, src: int, dst: int) -> ComplexMatrix:
    """Moves an excitation from chain site ``src`` to neighbouring site ``dst``."""
    n_sys = n + 1
    return embed_site_op(sigma_plus(), src, n_sys) @ embed_site_op(sigma_minus(), dst, n_sys)


def _incoherent_jumps(spec: ChainSpec) -> list[tuple[ComplexMatrix, float]]:
    c = spec.convention.coefficient
    n_sys = spec.n + 1
    terms = [(embed_site_op(sigma_plus(), j, n_sys), c * spec.big_gamma) for j in range(1, spec.n + 1)]
    terms.append((sink_jump(spec.n), c * spec.gamma_sink))
    if spec.scenario is Scenario.CLASSICAL:
        for j in range(1, spec.n):
            terms.append((hop_jump(spec.n, j, j + 1), c * spec.lam))
            terms.append((hop_jump(spec.n, j + 1, j), c * spec.lam))
    return terms


def lindblad_terms(spec: ChainSpec) -> list[tuple[ComplexMatrix, float]]:
    """All ``(jump, coefficient)`` pairs of the scenario in ``spec``, for use with :func:`dissipator`."""
    n_sys = spec.n + 1
    # gamma (s^z rho s^z - rho) == dissipator(s^z, gamma / 2)
    dephasing = [(embed_site_op(SIGMA_Z, j, n_sys), 0.5 * spec.gamma) for j in range(1, spec.n + 1)]
    return _incoherent_jumps(spec) + dephasing


class Generator:
    """Right-hand side of a master equation in a fixed representation.

    ``rhs(t, y)`` acts on the flat state vector used by the integrator and
    ``apply(state)`` on a :class:`DensityState`; the derivative is returned as a
    ``DensityState`` of the same representation (not trace-normalised).

    Reduced flat layout: row-major ``(N+1)x(N+1)`` block followed by the vacuum
    population.  Full flat layout: row-major ``2^(N+1)`` square matrix.
    """

    def __init__(self, spec: ChainSpec, representation: Representation,
                 rhs: Callable[[float, NDArray], NDArray], superoperator: NDArray | None = None):
        self.spec = spec
        self.superoperator = superoperator
        self.representation = representation
        self.rhs = rhs
        n = spec.n
        self.n_sites = n
        self.dim = 2 ** (n + 1) if representation is Representation.FULL else n + 1

    def pack(self, state: DensityState) -> NDArray[np.complex128]:
        if state.representation is not self.representation or state.n_sites != self.n_sites:
            raise DimensionError(
                f"state ({state.representation.value}, N={state.n_sites}) does not match "
                f"generator ({self.representation.value}, N={self.n_sites})")
        flat = state.matrix.reshape(-1)
        if self.representation is Representation.REDUCED:
            return np.append(flat, state.vacuum + 0j)
        return flat.copy()

    def unpack(self, y: NDArray) -> DensityState:
        d = self.dim
        if self.representation is Representation.REDUCED:
            return DensityState(self.representation, y[: d * d].reshape(d, d), vacuum=y[-1].real)
        return DensityState(self.representation, y.reshape(d, d))

    def apply(self, state: DensityState) -> DensityState:
        return self.unpack(self.rhs(0.0, self.pack(state)))


def _full_generator(spec: ChainSpec, hamiltonian: ComplexMatrix) -> Generator:
    n = spec.n
    dim = 2 ** (n + 1)
    jump_pairs = []
    anti = np.zeros((dim, dim), dtype=np.complex128)
    for jump, coeff in _incoherent_jumps(spec):
        if coeff == 0.0:
            continue
        jump_pairs.append((2.0 * coeff, jump, jump.conj().T))
        anti += coeff * (jump.conj().T @ jump)
    # dephasing: sum_j gamma (s^z_j rho s^z_j - rho) acts elementwise
    bits = (np.arange(dim)[:, None] >> np.arange(n, 0, -1)[None, :]) & 1  # chain-site bits, site 1 first
    signs = 2.0 * bits - 1.0
    deph_mask = spec.gamma * (signs @ signs.T - n)
    h_eff = hamiltonian - 1j * anti
    h_eff_d = h_eff.conj().T

    def rhs(t: float, y: NDArray) -> NDArray:
        rho = y.reshape(dim, dim)
        out = -1j * (h_eff @ rho - rho @ h_eff_d)
        out += deph_mask * rho
        for w, j, jd in jump_pairs:
            out += w * (j @ rho @ jd)
        return out.reshape(-1)

    return Generator(spec, Representation.FULL, rhs)


def build_quantum_generator(spec: ChainSpec) -> Generator:
    """Full-space generator of the coherent-hopping scenario."""
    if spec.scenario is not Scenario.QUANTUM:
        raise ValueError("build_quantum_generator needs scenario=QUANTUM")
    return _full_generator(spec, build_hamiltonian(spec, include_hopping=True))


def build_classical_generator(spec: ChainSpec) -> Generator:
    """Full-space generator of the incoherent-hopping scenario (no hopping Hamiltonian)."""
    if spec.scenario is not Scenario.CLASSICAL:
        raise ValueError("build_classical_generator needs scenario=CLASSICAL")
    return _full_generator(spec, build_hamiltonian(spec, include_hopping=False))


def build_full_generator(spec: ChainSpec) -> Generator:
    if spec.scenario is Scenario.QUANTUM:
        return build_quantum_generator(spec)
    return build_classical_generator(spec)


def _reduced_block_rhs(spec: ChainSpec) -> Callable[[NDArray, float], tuple[NDArray, float]]:
    """Projection of every full-space term onto the zero/one-excitation sectors."""
    n = spec.n
    d = n + 1
    c = spec.convention.coefficient
    quantum = spec.scenario is Scenario.QUANTUM

    h = np.zeros((d, d), dtype=np.complex128)
    # H_F on one-excitation states: one chain site up, N-1 down; sink-excited: all chain sites down
    h[np.arange(n), np.arange(n)] = 0.5 * spec.omega * (2 - n)
    h[n, n] = -0.5 * spec.omega * n
    decay = np.zeros(d)
    decay[:n] += c * spec.big_gamma
    decay[n - 1] += c * spec.gamma_sink
    if quantum:
        for j in range(n - 1):
            h[j, j + 1] = h[j + 1, j] = spec.lam
    else:
        for j in range(n - 1):
            decay[j] += c * spec.lam
            decay[j + 1] += c * spec.lam
    h_eff = h - 1j * np.diag(decay)
    h_eff_d = h_eff.conj().T

    deph = np.zeros((d, d))
    chain = np.arange(n)
    deph[np.ix_(chain, chain)] = -4.0 * spec.gamma
    deph[chain, chain] = 0.0
    deph[chain, n] = deph[n, chain] = -2.0 * spec.gamma

    def block_rhs(block: NDArray, vacuum: float) -> tuple[NDArray, float]:
        out = -1j * (h_eff @ block - block @ h_eff_d) + deph * block
        pops = block.diagonal()
        gain = np.zeros(d, dtype=np.complex128)
        gain[n] = 2.0 * c * spec.gamma_sink * pops[n - 1]
        if not quantum:
            gain[: n - 1] += 2.0 * c * spec.lam * pops[1:n]
            gain[1:n] += 2.0 * c * spec.lam * pops[: n - 1]
        out[np.arange(d), np.arange(d)] += gain
        dvac = 2.0 * c * spec.big_gamma * pops[:n].sum()
        return out, dvac

    return block_rhs


def build_reduced_generator(spec: ChainSpec) -> Generator:
    """Single-excitation generator for either scenario.

    The linear map is materialised once as a ``((N+1)^2 + 1)``-square matrix so
    each application is one matrix-vector product.
    """
    d = spec.n + 1
    size = d * d + 1
    block_rhs = _reduced_block_rhs(spec)
    sup = np.zeros((size, size), dtype=np.complex128)
    for k in range(size):
        e = np.zeros(size, dtype=np.complex128)
        e[k] = 1.0
        out, dvac = block_rhs(e[: d * d].reshape(d, d), e[-1].real)
        sup[: d * d, k] = out.reshape(-1)
        sup[-1, k] = dvac

    def rhs(t: float, y: NDArray) -> NDArray:
        return sup @ y

    return Generator(spec, Representation.REDUCED, rhs, superoperator=sup)


def build_generator(spec: ChainSpec, representation: Representation = Representation.REDUCED) -> Generator:
    if representation is Representation.REDUCED:
        return build_reduced_generator(spec)
    return build_full_generator(spec)
