"""Acceptance criteria, one test per criterion (plus sub-checks).

Each check is recorded in ``acceptance_log`` and printed as a PASS/FAIL line
at the end of the session.  Criterion 9 audits every run made by 1-8, so the
tests must run in file order (pytest's default).
"""

import csv
import itertools
import time

import numpy as np
import pytest

from acceptance_log import FLUX, FluxRecord, log_summary, record
from chaintransport.analysis import find_lambda_qc, integrated_coherence, run_point, run_point_detailed
from chaintransport.dynamics import PropagationControls, flux_integral, propagate, sink_population
from chaintransport.model import ChainSpec, LindbladConvention, Scenario, build_generator
from chaintransport.operators import Representation, initial_state
from chaintransport.sweep import figure_preset, reproduce_figure, run_sweep

REF = dict(n=3, big_gamma=0.5, gamma=0.25, gamma_sink=1.0)
FULL, REDUCED = Representation.FULL, Representation.REDUCED


def log_trajectory(label, traj):
    eta = sink_population(traj.final_state)
    FLUX.append(FluxRecord(label, traj.spec, eta, eta - flux_integral(traj), traj.converged))


def random_points(seed, count, n_choices=(1, 2, 3)):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        yield ChainSpec(n=int(rng.choice(n_choices)), lam=float(rng.uniform(0.1, 3.0)),
                        big_gamma=float(rng.uniform(0.0, 1.5)), gamma=float(rng.uniform(0.0, 1.5)),
                        gamma_sink=float(rng.uniform(0.3, 2.0)))


def strictly_increasing(xs):
    return all(b > a for a, b in zip(xs, xs[1:]))


@pytest.fixture(scope="module")
def threshold():
    """Criterion-2 search plus the run at the threshold, shared with 5 and 6."""
    t0 = time.perf_counter()
    res = find_lambda_qc(ChainSpec(lam=1.0, **REF), bracket=(0.1, 2.0))
    runs = run_point_detailed(ChainSpec(lam=res.value, **REF), keep_states=True)
    elapsed = time.perf_counter() - t0
    for s in res.evaluations:
        log_summary(f"c2 lambda={s.spec.lam:.4f}", s)
    log_summary("c2 threshold", runs.summary)
    return res, runs, elapsed


# ---------------------------------------------------------------------------

@pytest.mark.parametrize("gamma,lam", [(0.0, 0.5), (0.25, 1.0), (1.0, 3.0), (2.0, 0.84)])
def test_criterion_01_single_site_oracle(gamma, lam):
    spec = ChainSpec(n=1, lam=lam, big_gamma=0.5, gamma=gamma, gamma_sink=1.0)
    t0 = time.perf_counter()
    s = run_point(spec)
    elapsed = time.perf_counter() - t0
    log_summary(f"c1 gamma={gamma} lambda={lam}", s)
    err = max(abs(s.eta_q - 2 / 3), abs(s.eta_c - 2 / 3))
    record(1, f"gamma={gamma}, lambda={lam}", err <= 1e-6 and elapsed < 1.0,
           f"max |eta-2/3| = {err:.2e} (tol 1e-6), {elapsed:.3f}s (limit 1s)")


def test_criterion_02_threshold(threshold):
    res, runs, elapsed = threshold
    c_max = runs.summary.max_coherence
    ok = abs(res.value - 0.84) <= 0.05 and abs(c_max - 0.22) <= 0.03 and elapsed < 60
    record(2, "lambda_QC and C_max", ok,
           f"lambda_QC = {res.value:.5f} (0.84 +- 0.05), C_max = {c_max:.5f} (0.22 +- 0.03), {elapsed:.2f}s (limit 60s)")


@pytest.mark.slow
def test_criterion_03_representation_equivalence():
    t0 = time.perf_counter()
    ctrl = PropagationControls(rel_tol=1e-11, abs_tol=1e-13)
    worst_p = worst_c = 0.0
    count = 0
    for k, spec in enumerate(random_points(303, 20)):
        for scen in Scenario:
            s = spec.with_(scenario=scen)
            a = propagate(build_generator(s, FULL), initial_state(s.n, FULL), ctrl)
            b = propagate(build_generator(s, REDUCED), initial_state(s.n, REDUCED), ctrl)
            log_trajectory(f"c3 #{k} {scen.value} full", a)
            log_trajectory(f"c3 #{k} {scen.value} reduced", b)
            m = min(len(a), len(b))
            assert np.array_equal(a.times[:m], b.times[:m])
            worst_p = max(worst_p, float(np.max(np.abs(a.sink_population[:m] - b.sink_population[:m]))))
            worst_c = max(worst_c, float(np.max(np.abs(a.coherence[:m] - b.coherence[:m]))))
            count += 1
    elapsed = time.perf_counter() - t0
    record(3, f"{count} trajectory pairs, N in 1..3", max(worst_p, worst_c) <= 1e-8 and elapsed < 120,
           f"max |dP_sink| = {worst_p:.2e}, max |dC| = {worst_c:.2e} (tol 1e-8), {elapsed:.1f}s (limit 120s)")


def test_criterion_04_free_operations():
    worst_c = worst_i = 0.0
    for k, spec in enumerate(random_points(404, 20, n_choices=(2, 3, 4))):
        s = spec.with_(scenario=Scenario.CLASSICAL)
        traj = propagate(build_generator(s, REDUCED), initial_state(s.n, REDUCED))
        log_trajectory(f"c4 #{k}", traj)
        worst_c = max(worst_c, float(np.max(traj.coherence)))
        worst_i = max(worst_i, abs(integrated_coherence(traj)))
    record(4, "20 classical points", worst_c <= 1e-10 and worst_i <= 1e-10,
           f"max C = {worst_c:.1e}, max |I| = {worst_i:.1e} (tol 1e-10)")


def test_criterion_05_cptp(threshold):
    _, runs, _ = threshold
    worst = {"trace": 0.0, "min_eig": 0.0, "herm": 0.0}
    for traj in (runs.quantum, runs.classical):
        d = traj.final_state.matrix.shape[0]
        blocks = traj.states[:, : d * d].reshape(-1, d, d)
        worst["trace"] = max(worst["trace"], float(np.max(np.abs(traj.trace - 1))))
        worst["min_eig"] = min(worst["min_eig"], float(np.min(traj.min_eigenvalue)))
        herm = np.abs(blocks - np.conj(np.transpose(blocks, (0, 2, 1))))
        worst["herm"] = max(worst["herm"], float(herm.max()))
    ok = worst["trace"] <= 1e-8 and worst["min_eig"] >= -1e-9 and worst["herm"] <= 1e-10
    record(5, f"{len(runs.quantum) + len(runs.classical)} samples", ok,
           f"trace err {worst['trace']:.1e} (<=1e-8), min eig {worst['min_eig']:.1e} (>=-1e-9), "
           f"hermiticity {worst['herm']:.1e} (<=1e-10)")


def test_criterion_05_cptp_full_space(threshold):
    res, _, _ = threshold
    spec = ChainSpec(lam=res.value, **REF)
    traj = propagate(build_generator(spec, FULL), initial_state(3, FULL), keep_states=True)
    log_trajectory("c5 full-space", traj)
    mats = traj.states.reshape(-1, 16, 16)
    herm = float(np.abs(mats - np.conj(np.transpose(mats, (0, 2, 1)))).max())
    tr = float(np.max(np.abs(traj.trace - 1)))
    mn = float(traj.min_eigenvalue.min())
    record(5, "full-space run of the same point", tr <= 1e-8 and mn >= -1e-9 and herm <= 1e-10,
           f"trace err {tr:.1e}, min eig {mn:.1e}, hermiticity {herm:.1e}")


def test_criterion_06_omega_invariance(threshold):
    res, runs, _ = threshold
    ref = runs.summary
    worst = 0.0
    for omega in (1.0, 10.0):
        s = run_point(ChainSpec(lam=res.value, omega=omega, **REF))
        log_summary(f"c6 omega={omega}", s)
        for attr in ("eta_q", "eta_c", "integrated_coherence", "max_coherence", "max_coherence_time",
                     "intersection_time"):
            a, b = getattr(ref, attr), getattr(s, attr)
            if a is None or b is None:
                assert a is b
                continue
            worst = max(worst, abs(a - b))
    record(6, "omega in {0, 1, 10}", worst <= 1e-8, f"max quantifier difference {worst:.1e} (tol 1e-8)")


def test_criterion_07_classical_efficiency_vs_dephasing():
    etas = []
    for g in (0.0, 0.5, 1.0, 2.0):
        s = run_point(ChainSpec(lam=1.0, **{**REF, "gamma": g}))
        log_summary(f"c7 gamma={g}", s)
        etas.append(s.eta_c)
    spread = max(etas) - min(etas)
    record(7, "gamma in {0, 0.5, 1, 2}", spread <= 1e-6, f"eta_C spread {spread:.1e} (tol 1e-6)")


# --- criterion 8 -------------------------------------------------------------

C8_START = []


def test_criterion_08a_coherence_and_tau_over_lambda():
    C8_START.append(time.perf_counter())
    lams = (0.85, 1.0, 1.5, 2.0, 2.5, 3.0)
    summaries = [run_point(ChainSpec(lam=lam, **REF)) for lam in lams]
    for s in summaries:
        log_summary(f"c8a lambda={s.spec.lam}", s)
    c_max = [s.max_coherence for s in summaries]
    taus = [s.intersection_time for s in summaries]
    record(8, "C_max strictly increasing in lambda", strictly_increasing(c_max),
           " ".join(f"{c:.4f}" for c in c_max))
    ok = None not in taus and strictly_increasing([-t for t in taus])
    record(8, "tau strictly decreasing in lambda", ok,
           " ".join("none" if t is None else f"{t:.4f}" for t in taus))


@pytest.mark.slow
def test_criterion_08b_lambda_qc_grid():
    preset = figure_preset("fig6")
    axes = dict(preset.plan.axes)
    big_gammas, gammas = axes["Gamma"], axes["gamma"]
    grid = {}
    for bg, g in itertools.product(big_gammas, gammas):
        res = find_lambda_qc(ChainSpec(lam=1.0, **{**REF, "big_gamma": bg, "gamma": g}),
                             bracket=preset.bracket, tol=preset.tol)
        for s in res.evaluations:
            log_summary(f"c8b Gamma={bg} gamma={g} lambda={s.spec.lam:.4f}", s)
        grid[bg, g] = res.value
    in_gamma = all(strictly_increasing([grid[bg, g] for g in gammas]) for bg in big_gammas)
    in_big = all(strictly_increasing([grid[bg, g] for bg in big_gammas]) for g in gammas)
    table = "; ".join(f"Gamma={bg}: " + " ".join(f"{grid[bg, g]:.3f}" for g in gammas) for bg in big_gammas)
    record(8, "lambda_QC strictly increasing in gamma", in_gamma, table)
    record(8, "lambda_QC strictly increasing in Gamma", in_big, "same grid")


@pytest.mark.slow
def test_criterion_08c_fig7_eta_diff_monotone_in_i():
    plan = figure_preset("fig7").plan
    summaries = run_sweep(plan)
    bad = []
    for s in summaries:
        log_summary(f"c8c lambda={s.spec.lam} gamma={s.spec.gamma}", s)
    for lam in dict(plan.axes)["lambda"]:
        curve = sorted((s.integrated_coherence, s.eta_diff) for s in summaries if s.spec.lam == lam)
        if not all(b[1] > a[1] for a, b in zip(curve, curve[1:])):
            bad.append(lam)
    record(8, "eta_Q-eta_C increasing in I along each fig7 curve", not bad and all(s.converged for s in summaries),
           f"{len(summaries)} points, non-monotone curves: {bad or 'none'}")


def test_criterion_08d_chain_length():
    summaries = [run_point(ChainSpec(n=n, lam=3.0, big_gamma=0.5, gamma=0.25, gamma_sink=1.0)) for n in (2, 3, 4, 5)]
    for s in summaries:
        log_summary(f"c8d N={s.spec.n}", s)
    eta_q = [s.eta_q for s in summaries]
    diff = [s.eta_diff for s in summaries]
    record(8, "eta_Q decreasing in N", strictly_increasing([-x for x in eta_q]),
           " ".join(f"{x:.4f}" for x in eta_q))
    record(8, "eta_Q-eta_C increasing in N", strictly_increasing(diff), " ".join(f"{x:.4f}" for x in diff))
    elapsed = time.perf_counter() - C8_START[0] if C8_START else float("nan")
    record(8, "runtime", elapsed < 900, f"{elapsed:.1f}s (limit 900s)")


# --- criterion 9 -------------------------------------------------------------

def test_criterion_09_flux_identity():
    converged = [r for r in FLUX if r.converged]
    worst = max(converged, key=lambda r: abs(r.discrepancy), default=None)
    ok = bool(converged) and abs(worst.discrepancy) <= 1e-5
    record(9, f"{len(converged)} converged runs from criteria 1-8", ok,
           "no runs recorded" if worst is None else
           f"max |eta - r_s int rho_NN dt| = {abs(worst.discrepancy):.2e} ({worst.label}), tol 1e-5")


def test_criterion_09_literal_form_on_doubled_rates():
    # 2 * Gamma_s as the sink population rate is the doubled rate convention
    spec = ChainSpec(lam=1.5, convention=LindbladConvention.DOUBLED, **REF)
    worst = 0.0
    for scen in Scenario:
        traj = propagate(build_generator(spec.with_(scenario=scen), REDUCED), initial_state(3, REDUCED))
        t = np.append(traj.times, traj.termination_time)
        p = np.append(traj.last_site_population, traj.final_state.matrix[-2, -2].real)
        eta = traj.final_state.matrix[-1, -1].real
        worst = max(worst, abs(eta - 2 * spec.gamma_sink * np.trapezoid(p, t)))
    record(9, "literal 2*Gamma_s form, doubled convention", worst <= 1e-5, f"max discrepancy {worst:.2e}")


# --- criteria 10 and 11 --------------------------------------------------------

def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.mark.slow
def test_criterion_10_mhz_preset(tmp_path):
    preset = figure_preset("fig9")
    t0 = time.perf_counter()
    files = reproduce_figure(preset, tmp_path)
    elapsed = time.perf_counter() - t0
    rows = read_csv(files[0])
    header = list(rows[0])
    check = run_point(preset.plan.base.with_(lam=10.0, gamma=5.0))
    row = next(r for r in rows if float(r["lambda_MHz"]) == 10.0 and float(r["gamma_MHz"]) == 5.0)
    unit_ok = abs(float(row["I_ns"]) - 1000 * check.integrated_coherence) <= 1e-9 * max(1.0, float(row["I_ns"]))
    bad = []
    for lam in dict(preset.plan.axes)["lambda"]:
        curve = sorted((float(r["I_ns"]), float(r["eta_diff"])) for r in rows if float(r["lambda_MHz"]) == lam)
        if not all(b[1] > a[1] for a, b in zip(curve, curve[1:])):
            bad.append(lam)
    ok = ("lambda_MHz" in header and "I_ns" in header and unit_ok and not bad
          and all(r["converged"] == "true" for r in rows) and elapsed < 300)
    record(10, "fig9 dataset", ok,
           f"{len(rows)} rows, columns {','.join(header)}, I_ns = 1000*I: {unit_ok}, "
           f"non-monotone curves: {bad or 'none'}, {elapsed:.1f}s (limit 300s)")


@pytest.mark.slow
def test_criterion_11_worker_determinism(tmp_path):
    one = reproduce_figure("fig6", tmp_path / "w1", workers=1)[0].read_bytes()
    eight = reproduce_figure("fig6", tmp_path / "w8", workers=8)[0].read_bytes()
    record(11, "fig6 CSV, 1 vs 8 workers", one == eight,
           f"{len(one)} bytes, identical: {one == eight}")
