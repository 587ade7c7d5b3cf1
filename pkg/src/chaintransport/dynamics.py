"""Time propagation and observable recording.

Integration uses scipy's adaptive DOP853 (8th order, embedded 5th/3rd order
error estimate).  Observables are sampled on a uniform grid ``k * record_every``
through the integrator's dense output, independently of the internal steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import DOP853
from scipy.optimize import brentq

from .model import Generator, Scenario
from .operators import DensityState, Representation, entropy_from_eigenvalues

#: eigenvalues below this during propagation mean the integration itself broke down
INTEGRATOR_NEG_EIG_TOL = 1e-6
_WINDOW_SAMPLES = 4000


class IntegratorError(RuntimeError):
    pass


class NotConvergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class PropagationControls:
    """Integrator and recording settings.

    ``t_max=None`` means *auto*: integrate until the excitation left in the chain
    drops to ``steady_eps`` (or ``auto_horizon`` is hit, which leaves the run
    unconverged).  ``record_every=None`` picks ``0.01 / fastest_rate``.
    """

    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    t_max: float | None = None
    steady_eps: float = 1e-7
    record_every: float | None = None
    dt_initial: float | None = None
    auto_horizon: float = 2000.0

    def __post_init__(self) -> None:
        for name in ("rel_tol", "abs_tol", "steady_eps", "auto_horizon"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite number, got {v!r}")
        for name in ("t_max", "record_every", "dt_initial"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v!r}")
        if self.t_max is not None and self.record_every is not None and self.record_every > self.t_max:
            raise ValueError("record_every must not exceed t_max")

    def grid_step(self, fastest_rate: float) -> float:
        if self.record_every is not None:
            h = self.record_every
        else:
            h = 0.01 / fastest_rate if fastest_rate > 0 else 0.01
        if self.t_max is not None:
            # snap so that t_max lies on the grid
            h = self.t_max / math.ceil(self.t_max / h - 1e-9)
        return h


@dataclass
class Trajectory:
    spec: object
    scenario: Scenario
    times: NDArray[np.float64]
    sink_population: NDArray[np.float64]
    coherence: NDArray[np.float64]
    last_site_population: NDArray[np.float64]
    chain_population: NDArray[np.float64]
    trace: NDArray[np.float64]
    min_eigenvalue: NDArray[np.float64]
    final_state: DensityState
    converged: bool
    termination_time: float
    record_every: float
    steady_eps: float
    n_evaluations: int = 0
    states: NDArray[np.complex128] | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.times)


class _Observer:
    """Vectorised observables on stacks of flat state vectors."""

    def __init__(self, gen: Generator):
        self.rep = gen.representation
        self.n = gen.n_sites
        self.d = gen.dim
        if self.rep is Representation.FULL:
            idx = np.arange(self.d)
            self.sink_mask = (idx & 1) == 1
            self.last_mask = ((idx >> 1) & 1) == 1
            self.chain_count = sum((idx >> k) & 1 for k in range(1, self.n + 1)).astype(float)

    def chain_population(self, y: NDArray) -> float:
        d, n = self.d, self.n
        if self.rep is Representation.REDUCED:
            return float(sum(y[i * d + i].real for i in range(n)))
        diag = y[:: d + 1].real
        return float(diag @ self.chain_count)

    def matrices(self, ys: NDArray) -> NDArray:
        d = self.d
        return ys[:, : d * d].reshape(-1, d, d)

    def evaluate(self, ys: NDArray) -> dict[str, NDArray]:
        n = self.n
        mats = self.matrices(ys)
        diag = np.einsum("kii->ki", mats).real
        ev = np.linalg.eigvalsh(mats)
        off = np.abs(mats - np.einsum("ki,ij->kij", np.einsum("kii->ki", mats), np.eye(self.d)))
        has_coherence = off.reshape(len(ys), -1).max(axis=1) > 0.0
        if self.rep is Representation.REDUCED:
            vac = ys[:, -1].real
            diag = np.column_stack([diag, vac])
            ev = np.column_stack([ev, vac])
            sink = diag[:, n]
            last = diag[:, n - 1]
            chain = diag[:, :n].sum(axis=1)
        else:
            sink = diag[:, self.sink_mask].sum(axis=1)
            last = diag[:, self.last_mask].sum(axis=1)
            chain = diag @ self.chain_count
        trace = diag.sum(axis=1)
        min_eig = ev.min(axis=1)
        worst = float(min_eig.min())
        if worst < -INTEGRATOR_NEG_EIG_TOL:
            raise IntegratorError(f"density matrix lost positivity (eigenvalue {worst:.3e})")
        s_diag = entropy_from_eigenvalues(diag, INTEGRATOR_NEG_EIG_TOL)
        s_full = entropy_from_eigenvalues(ev, INTEGRATOR_NEG_EIG_TOL)
        coh = np.where(has_coherence, np.maximum(s_diag - s_full, 0.0), 0.0)
        return {
            "sink": sink, "last": last, "chain": chain, "trace": trace,
            "min_eig": min_eig, "coherence": coh,
        }


def propagate(gen: Generator, state0: DensityState, ctrl: PropagationControls | None = None,
              keep_states: bool = False) -> Trajectory:
    """Integrate ``d rho / dt = gen(rho)`` from ``state0`` and record observables.

    One DOP853 stepper runs for the whole trajectory; grid samples come from
    its dense output.  In auto mode the run stops inside the step where the
    chain excitation first drops to ``steady_eps``.
    """
    ctrl = ctrl or PropagationControls()
    y0 = gen.pack(state0).astype(np.complex128)
    obs = _Observer(gen)
    h = ctrl.grid_step(gen.spec.fastest_rate)
    auto = ctrl.t_max is None
    horizon = ctrl.auto_horizon if auto else ctrl.t_max
    k_last = int(math.floor(horizon / h + 1e-9))
    eps = ctrl.steady_eps
    window = max(200, min(_WINDOW_SAMPLES, 2**22 // (gen.dim * gen.dim)))

    solver = DOP853(gen.rhs, 0.0, y0, k_last * h, rtol=ctrl.rel_tol, atol=ctrl.abs_tol,
                    first_step=ctrl.dt_initial)
    chunks: dict[str, list[NDArray]] = {}
    kept: list[NDArray] = []
    pending: list[NDArray] = [y0[None, :]]
    n_pending = 1

    def flush() -> None:
        nonlocal pending, n_pending
        if not pending:
            return
        ys = np.concatenate(pending)
        for key, val in obs.evaluate(ys).items():
            chunks.setdefault(key, []).append(val)
        if keep_states:
            kept.append(ys)
        pending, n_pending = [], 0

    k_next = 1
    converged = False
    while True:
        t_old = solver.t
        message = solver.step()
        if solver.status == "failed":
            raise IntegratorError(f"integration failed at t={solver.t:g}: {message}")
        t_new = solver.t
        dense = solver.dense_output()
        k_hi = min(k_last, int(math.floor(t_new / h + 1e-9)))
        stop = None
        if auto and obs.chain_population(solver.y) <= eps:
            def excess(t):
                return obs.chain_population(dense(t)) - eps
            stop = brentq(excess, t_old, t_new, xtol=1e-12) if excess(t_old) > 0 else t_old
            k_hi = min(k_hi, int(math.floor(stop / h + 1e-9)))
        if k_hi >= k_next:
            ks = np.arange(k_next, k_hi + 1)
            pending.append(dense(ks * h).T)
            n_pending += len(ks)
            k_next = k_hi + 1
            if n_pending >= window:
                flush()
        if stop is not None:
            final_y, term_time, converged = dense(stop), float(stop), True
            break
        if solver.status == "finished":
            final_y, term_time = solver.y.copy(), float(t_new)
            converged = obs.chain_population(final_y) <= eps
            break
    flush()

    cat = {k: np.concatenate(v) for k, v in chunks.items()}
    times = np.arange(len(cat["sink"])) * h
    # final-state positivity is checked like every recorded sample
    obs.evaluate(final_y[None, :])
    return Trajectory(
        spec=gen.spec,
        scenario=gen.spec.scenario,
        times=times,
        sink_population=cat["sink"],
        coherence=cat["coherence"],
        last_site_population=cat["last"],
        chain_population=cat["chain"],
        trace=cat["trace"],
        min_eigenvalue=cat["min_eig"],
        final_state=gen.unpack(np.array(final_y, dtype=np.complex128)),
        converged=bool(converged),
        termination_time=term_time,
        record_every=h,
        steady_eps=eps,
        n_evaluations=solver.nfev,
        states=np.concatenate(kept) if keep_states else None,
    )


def sink_population(state: DensityState) -> float:
    """Excited-state population of the sink."""
    m = state.matrix
    if state.representation is Representation.REDUCED:
        return float(m[-1, -1].real)
    return float(m.diagonal().real[1::2].sum())


def last_site_population(state: DensityState) -> float:
    m = state.matrix
    if state.representation is Representation.REDUCED:
        return float(m[-2, -2].real)
    idx = np.arange(m.shape[0])
    return float(m.diagonal().real[((idx >> 1) & 1) == 1].sum())


def flux_integral(traj: Trajectory) -> float:
    """Sink inflow ``r_s * int rho_NN dt`` over the whole run (``r_s``: sink population rate)."""
    t = traj.times
    p = traj.last_site_population
    if traj.termination_time > t[-1]:
        t = np.append(t, traj.termination_time)
        p = np.append(p, last_site_population(traj.final_state))
    return float(traj.spec.sink_rate * np.trapezoid(p, t))


def efficiency(traj: Trajectory) -> float:
    """Asymptotic sink population of a converged trajectory."""
    if not traj.converged:
        raise NotConvergedError(
            f"trajectory stopped at t={traj.termination_time:g} with chain excitation "
            f"{traj.chain_population[-1]:.3e} > {traj.steady_eps:g}")
    return sink_population(traj.final_state)


def flux_discrepancy(traj: Trajectory) -> float:
    """``eta - r_s int rho_NN dt``; small on any converged run."""
    return efficiency(traj) - flux_integral(traj)
