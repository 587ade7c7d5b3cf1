"""Quantifiers built on states and trajectories, and the lambda_QC root finder."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .dynamics import (
    IntegratorError,
    PropagationControls,
    Trajectory,
    NotConvergedError,
    flux_integral,
    propagate,
    sink_population,
)
from .model import ChainSpec, Scenario, build_generator
from .operators import DensityState, Representation, entropy_from_eigenvalues, initial_state, NEG_EIG_TOL

CSV_COLUMNS = (
    "N", "omega", "lambda", "gamma", "Gamma", "Gamma_s",
    "eta_Q", "eta_C", "eta_diff", "I", "C_max", "t_Cmax", "tau", "converged",
)


class GridMismatchError(ValueError):
    pass


class BracketError(ValueError):
    pass


class PropagationError(RuntimeError):
    """A propagation failure, tagged with the scenario that failed."""

    def __init__(self, scenario: Scenario, cause: Exception):
        super().__init__(f"{scenario.value} scenario: {cause}")
        self.scenario = scenario


class TruncationWarning(UserWarning):
    pass


def relative_entropy_of_coherence(rho: DensityState | np.ndarray, tol: float = NEG_EIG_TOL) -> float:
    """``S(diag rho) - S(rho)`` in the uncoupled product basis (chain sites and sink).

    A reduced state contributes its vacuum population to both spectra.
    """
    if not isinstance(rho, DensityState):
        m = np.asarray(rho, dtype=np.complex128)
        diag, ev = m.diagonal().real, np.linalg.eigvalsh(m)
        off = m - np.diag(m.diagonal())
    else:
        diag, ev = rho.diagonal(), rho.spectrum()
        off = rho.matrix - np.diag(rho.matrix.diagonal())
    if not np.any(off):
        entropy_from_eigenvalues(ev, tol)  # positivity check only
        return 0.0
    return max(float(entropy_from_eigenvalues(diag, tol) - entropy_from_eigenvalues(ev, tol)), 0.0)


def _require_converged(traj: Trajectory) -> None:
    if not traj.converged:
        raise NotConvergedError(f"{traj.scenario.value} trajectory not converged at t={traj.termination_time:g}")


def _integrate_coherence(traj: Trajectory) -> float:
    t, c = traj.times, traj.coherence
    if traj.termination_time > t[-1]:
        t = np.append(t, traj.termination_time)
        c = np.append(c, relative_entropy_of_coherence(traj.final_state, tol=1e-6))
    return float(np.trapezoid(c, t))


def integrated_coherence(traj: Trajectory) -> float:
    """Time integral of the coherence from 0 to the convergence horizon (trapezoid rule).

    Warns with :class:`TruncationWarning` when the coherence at the horizon is not
    yet negligible (above ``10 * steady_eps``).
    """
    _require_converged(traj)
    if traj.coherence[-1] > 10 * traj.steady_eps:
        warnings.warn(
            f"coherence {traj.coherence[-1]:.3e} at the horizon exceeds {10 * traj.steady_eps:g}; "
            "the integral may be truncated", TruncationWarning, stacklevel=2)
    return _integrate_coherence(traj)


def max_coherence(traj: Trajectory) -> tuple[float, float]:
    """Global maximum of the recorded coherence and its (earliest) time."""
    k = int(np.argmax(traj.coherence))
    return float(traj.coherence[k]), float(traj.times[k])


def _padded(values: np.ndarray, length: int) -> np.ndarray:
    # past its termination a run is frozen to within steady_eps
    if len(values) >= length:
        return values[:length]
    return np.concatenate([values, np.full(length - len(values), values[-1])])


def intersection_time(traj_q: Trajectory, traj_c: Trajectory) -> float | None:
    """Time after which ``P_Q(t) - P_C(t)`` stays strictly positive.

    Returns ``None`` if the quantum sink population never permanently overtakes
    the classical one.  The shorter run is extended with its final value, and
    the crossing is located on the linear interpolant between grid samples.
    """
    _require_converged(traj_q)
    _require_converged(traj_c)
    h = traj_q.record_every
    common = min(len(traj_q), len(traj_c))
    if (not math.isclose(h, traj_c.record_every, rel_tol=1e-12)
            or not np.array_equal(traj_q.times[:common], traj_c.times[:common])):
        raise GridMismatchError("trajectories are not recorded on the same time grid")
    length = max(len(traj_q), len(traj_c))
    times = traj_q.times if len(traj_q) >= len(traj_c) else traj_c.times
    d = _padded(traj_q.sink_population, length) - _padded(traj_c.sink_population, length)
    if d[-1] <= 0.0:
        return None
    nonpos = np.flatnonzero(d <= 0.0)
    if nonpos.size == 0:
        return float(times[0])
    i = int(nonpos[-1])
    t0, t1, d0, d1 = times[i], times[i + 1], d[i], d[i + 1]
    # bisection on the linear interpolant, to 1e-6 in time
    lo, hi = t0, t1
    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        if d0 + (d1 - d0) * (mid - t0) / (t1 - t0) <= 0.0:
            lo = mid
        else:
            hi = mid
    return float(0.5 * (lo + hi))


@dataclass
class RunSummary:
    spec: ChainSpec
    eta_q: float
    eta_c: float
    eta_diff: float
    integrated_coherence: float
    max_coherence: float
    max_coherence_time: float
    intersection_time: float | None
    converged: bool
    flux_discrepancy_q: float = math.nan
    flux_discrepancy_c: float = math.nan
    error: str | None = None

    @classmethod
    def failed(cls, spec: ChainSpec, error: str) -> "RunSummary":
        nan = math.nan
        return cls(spec, nan, nan, nan, nan, nan, nan, None, False, error=error)

    def row(self) -> dict[str, object]:
        s = self.spec
        return {
            "N": s.n, "omega": s.omega, "lambda": s.lam, "gamma": s.gamma,
            "Gamma": s.big_gamma, "Gamma_s": s.gamma_sink,
            "eta_Q": self.eta_q, "eta_C": self.eta_c, "eta_diff": self.eta_diff,
            "I": self.integrated_coherence, "C_max": self.max_coherence,
            "t_Cmax": self.max_coherence_time, "tau": self.intersection_time,
            "converged": self.converged,
        }


@dataclass
class PointRuns:
    """Both trajectories of one parameter point, kept for callers that need curves."""

    quantum: Trajectory
    classical: Trajectory
    summary: RunSummary


def _run(spec: ChainSpec, scenario: Scenario, ctrl: PropagationControls,
         representation: Representation, keep_states: bool = False) -> Trajectory:
    s = spec.with_(scenario=scenario)
    try:
        return propagate(build_generator(s, representation), initial_state(s.n, representation),
                         ctrl, keep_states=keep_states)
    except (IntegratorError, ValueError, FloatingPointError) as exc:
        raise PropagationError(scenario, exc) from exc


def run_point_detailed(spec: ChainSpec, ctrl: PropagationControls | None = None,
                       representation: Representation = Representation.REDUCED,
                       keep_states: bool = False) -> PointRuns:
    ctrl = ctrl or PropagationControls()
    tq = _run(spec, Scenario.QUANTUM, ctrl, representation, keep_states)
    tc = _run(spec, Scenario.CLASSICAL, ctrl, representation, keep_states)
    converged = tq.converged and tc.converged
    eta_q = sink_population(tq.final_state)
    eta_c = sink_population(tc.final_state)
    c_max, t_cmax = max_coherence(tq)
    if converged:
        integral = integrated_coherence(tq)
        tau = intersection_time(tq, tc)
    else:
        integral = _integrate_coherence(tq)
        tau = None
    summary = RunSummary(
        spec=spec.with_(scenario=Scenario.QUANTUM),
        eta_q=eta_q,
        eta_c=eta_c,
        eta_diff=eta_q - eta_c,
        integrated_coherence=integral,
        max_coherence=c_max,
        max_coherence_time=t_cmax,
        intersection_time=tau,
        converged=converged,
        flux_discrepancy_q=eta_q - flux_integral(tq),
        flux_discrepancy_c=eta_c - flux_integral(tc),
    )
    return PointRuns(tq, tc, summary)


def run_point(spec: ChainSpec, ctrl: PropagationControls | None = None,
              representation: Representation = Representation.REDUCED) -> RunSummary:
    """Run both scenarios from the initial excitation on site 1 and collect every quantifier."""
    return run_point_detailed(spec, ctrl, representation).summary


@dataclass
class LambdaQC:
    value: float
    residual: float
    evaluations: list[RunSummary]


def find_lambda_qc(spec: ChainSpec, bracket: tuple[float, float] = (0.1, 2.0), tol: float = 1e-3,
                   ctrl: PropagationControls | None = None,
                   representation: Representation = Representation.REDUCED) -> LambdaQC:
    """Coupling at which quantum and classical efficiencies coincide (Brent's method).

    ``spec.lam`` is ignored.  Raises :class:`BracketError` when ``eta_Q - eta_C``
    does not change sign across ``bracket`` (values within ``steady_eps`` of zero
    count as no sign).
    """
    ctrl = ctrl or PropagationControls()
    lo, hi = float(bracket[0]), float(bracket[1])
    if not (0 <= lo < hi) or not tol > 0:
        raise ValueError(f"need 0 <= lo < hi and tol > 0, got bracket={bracket}, tol={tol}")
    evaluations: list[RunSummary] = []
    cache: dict[float, float] = {}

    def f(lam: float) -> float:
        if lam not in cache:
            summary = run_point(spec.with_(lam=lam), ctrl, representation)
            evaluations.append(summary)
            cache[lam] = summary.eta_diff
        return cache[lam]

    floor = ctrl.steady_eps
    f_lo, f_hi = f(lo), f(hi)
    if abs(f_lo) <= floor or abs(f_hi) <= floor or (f_lo > 0) == (f_hi > 0):
        raise BracketError(
            f"eta_Q - eta_C has no sign change on [{lo:g}, {hi:g}] "
            f"(f(lo)={f_lo:.3e}, f(hi)={f_hi:.3e}); try a wider bracket")
    root = brentq(f, lo, hi, xtol=tol, full_output=False)
    residual = abs(f(root))
    ordered = sorted((s.spec.lam, s.eta_diff) for s in evaluations)
    signs = [v > 0 for _, v in ordered if abs(v) > floor]
    changes = sum(a != b for a, b in zip(signs, signs[1:]))
    if changes > 1:
        warnings.warn(f"eta_Q - eta_C changes sign {changes} times on the evaluated points; "
                      "the bracket may hold several roots", RuntimeWarning, stacklevel=2)
    return LambdaQC(float(root), float(residual), evaluations)
