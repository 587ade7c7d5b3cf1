"""Parameter grids, figure presets and CSV/JSON emission."""

from __future__ import annotations

import csv
import itertools
import json
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy

from . import __version__
from .analysis import (
    CSV_COLUMNS,
    BracketError,
    LambdaQC,
    RunSummary,
    find_lambda_qc,
    run_point,
    run_point_detailed,
)
from .dynamics import PropagationControls
from .model import ChainSpec, LindbladConvention, Scenario

# axis name -> ChainSpec attribute
AXIS_ATTRS = {
    "lambda": "lam",
    "gamma": "gamma",
    "Gamma": "big_gamma",
    "bigGamma": "big_gamma",
    "Gamma_s": "gamma_sink",
    "gammaSink": "gamma_sink",
    "N": "n",
}
DEFAULT_MAX_POINTS = 10_000


def spec_to_dict(spec: ChainSpec) -> dict:
    return {
        "n": spec.n, "omega": spec.omega, "lambda": spec.lam, "gamma": spec.gamma,
        "big_gamma": spec.big_gamma, "gamma_sink": spec.gamma_sink,
        "convention": spec.convention.value,
    }


def spec_from_dict(d: dict) -> ChainSpec:
    return ChainSpec(
        n=d["n"], lam=d.get("lambda", 0.0), big_gamma=d["big_gamma"], gamma=d["gamma"],
        gamma_sink=d.get("gamma_sink", 1.0), omega=d.get("omega", 0.0),
        convention=LindbladConvention(d.get("convention", "standard")),
    )


def controls_to_dict(ctrl: PropagationControls) -> dict:
    d = asdict(ctrl)
    d["t_max"] = "auto" if ctrl.t_max is None else ctrl.t_max
    return d


def controls_from_dict(d: dict) -> PropagationControls:
    d = dict(d)
    if d.get("t_max") == "auto":
        d["t_max"] = None
    return PropagationControls(**d)


@dataclass(frozen=True)
class SweepPlan:
    """Cartesian grid over ``axes`` around ``base``; the first axis varies slowest."""

    base: ChainSpec
    axes: tuple[tuple[str, tuple[float, ...]], ...] = ()
    outputs: tuple[str, ...] = CSV_COLUMNS
    unit_label: str = "a.u."
    max_points: int = DEFAULT_MAX_POINTS

    def __post_init__(self) -> None:
        axes = []
        for name, values in self.axes:
            if name not in AXIS_ATTRS:
                raise ValueError(f"unknown sweep axis {name!r}; valid: {sorted(set(AXIS_ATTRS))}")
            vals = tuple(int(v) if name == "N" else float(v) for v in values)
            if not vals or not all(math.isfinite(v) for v in vals):
                raise ValueError(f"axis {name!r} needs a non-empty list of finite values")
            axes.append((name, vals))
        object.__setattr__(self, "axes", tuple(axes))
        bad = [c for c in self.outputs if c not in CSV_COLUMNS]
        if bad:
            raise ValueError(f"unknown output columns {bad}; valid: {list(CSV_COLUMNS)}")
        object.__setattr__(self, "outputs", tuple(self.outputs))
        if self.size > self.max_points:
            raise ValueError(f"sweep has {self.size} points, above the cap of {self.max_points}")

    @property
    def size(self) -> int:
        return math.prod(len(v) for _, v in self.axes)

    def points(self) -> list[ChainSpec]:
        names = [AXIS_ATTRS[n] for n, _ in self.axes]
        return [self.base.with_(**dict(zip(names, combo)))
                for combo in itertools.product(*(v for _, v in self.axes))]

    def to_dict(self) -> dict:
        return {
            "base": spec_to_dict(self.base),
            "axes": [{"name": n, "values": list(v)} for n, v in self.axes],
            "outputs": list(self.outputs),
            "unit_label": self.unit_label,
            "max_points": self.max_points,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepPlan":
        return cls(
            base=spec_from_dict(d["base"]),
            axes=tuple((a["name"], tuple(a["values"])) for a in d.get("axes", [])),
            outputs=tuple(d.get("outputs", CSV_COLUMNS)),
            unit_label=d.get("unit_label", "a.u."),
            max_points=d.get("max_points", DEFAULT_MAX_POINTS),
        )


def _safe_point(args: tuple[ChainSpec, PropagationControls]) -> RunSummary:
    spec, ctrl = args
    try:
        return run_point(spec, ctrl)
    except Exception as exc:  # a failed point must not abort the sweep
        return RunSummary.failed(spec.with_(scenario=Scenario.QUANTUM), f"{type(exc).__name__}: {exc}")


def _map(func: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items, chunksize=1))


def run_sweep(plan: SweepPlan, ctrl: PropagationControls | None = None, workers: int = 1) -> list[RunSummary]:
    """Evaluate every grid point; rows come back in grid order whatever the worker count."""
    ctrl = ctrl or PropagationControls()
    return _map(_safe_point, [(p, ctrl) for p in plan.points()], workers)


def _safe_lambda_qc(args) -> dict:
    spec, bracket, tol, ctrl = args
    row = {"N": spec.n, "Gamma": spec.big_gamma, "gamma": spec.gamma, "Gamma_s": spec.gamma_sink}
    try:
        res: LambdaQC = find_lambda_qc(spec, bracket, tol, ctrl)
        row.update(lambda_QC=res.value, residual=res.residual, evaluations=len(res.evaluations), ok=True)
    except (BracketError, RuntimeError, ValueError) as exc:
        row.update(lambda_QC=math.nan, residual=math.nan, evaluations=0, ok=False, error=str(exc))
    return row


def run_lambda_qc_sweep(plan: SweepPlan, bracket: tuple[float, float], tol: float = 1e-3,
                        ctrl: PropagationControls | None = None, workers: int = 1) -> list[dict]:
    ctrl = ctrl or PropagationControls()
    return _map(_safe_lambda_qc, [(p, bracket, tol, ctrl) for p in plan.points()], workers)


def format_value(v: object) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[dict]) -> int:
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_value(row.get(c)) for c in columns])
            n += 1
    return n


def summary_rows(summaries: Iterable[RunSummary]) -> list[dict]:
    return [s.row() for s in summaries]


# ---------------------------------------------------------------------------
# figure presets

REFERENCE_NOISE = dict(n=3, big_gamma=0.5, gamma=0.25, gamma_sink=1.0, lam=1.0)
FIGURE_IDS = ("fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9")

# derived CSV columns: header -> (source column, multiplier)
DERIVED_COLUMNS = {
    "lambda_MHz": ("lambda", 1.0),
    "gamma_MHz": ("gamma", 1.0),
    "Gamma_MHz": ("Gamma", 1.0),
    "Gamma_s_MHz": ("Gamma_s", 1.0),
    "I_ns": ("I", 1000.0),  # rates in MHz -> time in microseconds; 1 us = 1000 ns
    "t_Cmax_ns": ("t_Cmax", 1000.0),
}


@dataclass(frozen=True)
class FigurePreset:
    id: str
    kind: str  # "trajectories" | "points" | "lambda_qc"
    plan: SweepPlan
    columns: tuple[str, ...]
    bracket: tuple[float, float] = (0.1, 10.0)
    tol: float = 1e-3
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "id": self.id, "kind": self.kind, "plan": self.plan.to_dict(),
            "columns": list(self.columns), "bracket": list(self.bracket),
            "tol": self.tol, "note": self.note,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FigurePreset":
        return cls(
            id=d["id"], kind=d["kind"], plan=SweepPlan.from_dict(d["plan"]),
            columns=tuple(d["columns"]), bracket=tuple(d.get("bracket", (0.1, 10.0))),
            tol=d.get("tol", 1e-3), note=d.get("note", ""),
        )


def _linspace(lo: float, hi: float, n: int) -> tuple[float, ...]:
    return tuple(float(x) for x in np.linspace(lo, hi, n))


GAMMA_SWEEP = _linspace(0.0, 2.0, 41)
FIG_LAMBDAS = (0.5, 1.0, 1.5, 3.0)


def figure_preset(fig_id: str) -> FigurePreset:
    fig_id = fig_id.lower()
    base = ChainSpec(**REFERENCE_NOISE)
    if fig_id == "fig2":
        return FigurePreset(
            "fig2", "trajectories", SweepPlan(base, (("lambda", (0.84, 1.0, 1.5, 3.0)),)),
            ("lambda", "t", "p_q", "p_c", "coherence"),
            note="panel couplings: 0.84 (threshold) plus three larger values chosen for this preset")
    if fig_id == "fig3":
        return FigurePreset(
            "fig3", "points", SweepPlan(base, (("lambda", _linspace(0.85, 3.0, 30)),)),
            ("lambda", "C_max", "t_Cmax", "tau", "eta_diff", "converged"))
    if fig_id == "fig4":
        return FigurePreset(
            "fig4", "points", SweepPlan(base, (("lambda", _linspace(0.1, 3.0, 30)),)),
            ("lambda", "C_max", "t_Cmax", "converged"))
    if fig_id == "fig5":
        return FigurePreset(
            "fig5", "points",
            SweepPlan(base, (("gamma", (0.25, 0.5, 0.75, 1.0)), ("lambda", _linspace(0.1, 4.0, 30)))),
            ("gamma", "lambda", "eta_Q", "eta_C", "eta_diff", "converged"))
    if fig_id == "fig6":
        return FigurePreset(
            "fig6", "lambda_qc",
            SweepPlan(base, (("Gamma", (0.5, 0.75, 1.0, 1.5)), ("gamma", (0.25, 0.5, 0.75, 1.0)))),
            ("Gamma", "gamma", "lambda_QC", "residual", "evaluations", "ok"),
            bracket=(0.1, 10.0), tol=1e-3)
    if fig_id == "fig7":
        return FigurePreset(
            "fig7", "points", SweepPlan(base, (("lambda", FIG_LAMBDAS), ("gamma", GAMMA_SWEEP))),
            ("lambda", "gamma", "I", "eta_diff", "eta_Q", "eta_C", "converged"))
    if fig_id == "fig8":
        return FigurePreset(
            "fig8", "points",
            SweepPlan(base, (("N", (2, 3, 4, 5)), ("lambda", FIG_LAMBDAS), ("gamma", GAMMA_SWEEP))),
            ("N", "lambda", "gamma", "eta_Q", "eta_C", "eta_diff", "I", "converged"))
    if fig_id == "fig9":
        mhz = ChainSpec(n=2, lam=1.0, big_gamma=5.0, gamma=0.0, gamma_sink=10.0)
        return FigurePreset(
            "fig9", "points",
            SweepPlan(mhz, (("lambda", (2.5, 5.0, 10.0, 15.0)), ("gamma", _linspace(0.0, 20.0, 41))),
                      unit_label="MHz"),
            ("lambda_MHz", "gamma_MHz", "I_ns", "eta_diff", "eta_Q", "eta_C", "converged"),
            note="rates in MHz, so times are in microseconds; I is reported in nanoseconds")
    raise KeyError(f"unknown figure {fig_id!r}; valid ids: {', '.join(FIGURE_IDS)}")


def _project(row: dict, columns: Sequence[str]) -> dict:
    out = {}
    for c in columns:
        if c in DERIVED_COLUMNS:
            src, scale = DERIVED_COLUMNS[c]
            v = row.get(src)
            out[c] = None if v is None else v * scale
        else:
            out[c] = row.get(c)
    return out


def build_info() -> dict:
    return {
        "package": "chaintransport", "version": __version__,
        "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
    }


def _trajectory_rows(preset: FigurePreset, ctrl: PropagationControls, workers: int):
    specs = preset.plan.points()
    panels = _map(_panel, [(s, ctrl) for s in specs], workers)
    return specs, panels


def _panel(args) -> dict:
    spec, ctrl = args
    runs = run_point_detailed(spec, ctrl)
    tq, tc = runs.quantum, runs.classical
    length = max(len(tq), len(tc))
    times = tq.times if len(tq) >= len(tc) else tc.times

    def pad(v):
        return np.concatenate([v, np.full(length - len(v), v[-1])])
    return {
        "t": times, "p_q": pad(tq.sink_population), "p_c": pad(tc.sink_population),
        "coherence": pad(tq.coherence), "summary": runs.summary.row(),
    }


def reproduce_figure(preset: FigurePreset | str, out_dir: Path | str,
                     ctrl: PropagationControls | None = None, workers: int = 1) -> list[Path]:
    """Compute a figure dataset and write ``<id>_data.csv`` and ``<id>_meta.json``."""
    if isinstance(preset, str):
        preset = figure_preset(preset)
    ctrl = ctrl or PropagationControls()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data_path = out / f"{preset.id}_data.csv"
    files = [data_path]
    if preset.kind == "points":
        rows = summary_rows(run_sweep(preset.plan, ctrl, workers))
        n_rows = write_csv(data_path, preset.columns, (_project(r, preset.columns) for r in rows))
    elif preset.kind == "lambda_qc":
        rows = run_lambda_qc_sweep(preset.plan, preset.bracket, preset.tol, ctrl, workers)
        n_rows = write_csv(data_path, preset.columns, rows)
    elif preset.kind == "trajectories":
        specs, panels = _trajectory_rows(preset, ctrl, workers)
        long_rows = []
        for spec, panel in zip(specs, panels):
            cols = ("t", "p_q", "p_c", "coherence")
            per = [dict(zip(cols, vals)) for vals in zip(*(panel[c] for c in cols))]
            panel_path = out / f"{preset.id}_lambda_{format_value(spec.lam)}.csv"
            write_csv(panel_path, cols, per)
            files.append(panel_path)
            long_rows.extend({"lambda": spec.lam, **r} for r in per)
        n_rows = write_csv(data_path, preset.columns, long_rows)
    else:
        raise ValueError(f"unknown preset kind {preset.kind!r}")
    meta_path = out / f"{preset.id}_meta.json"
    meta = {
        "figure": preset.id,
        "preset": preset.to_dict(),
        "controls": controls_to_dict(ctrl),
        "rows": n_rows,
        "files": [p.name for p in files],
        "build": build_info(),
    }
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return files + [meta_path]


def reproduce_from_meta(meta_path: Path | str, out_dir: Path | str, workers: int = 1) -> list[Path]:
    meta = json.loads(Path(meta_path).read_text(encoding="utf-8"))
    return reproduce_figure(FigurePreset.from_dict(meta["preset"]), out_dir,
                            controls_from_dict(meta["controls"]), workers)


def write_sweep(plan: SweepPlan, out_dir: Path | str, ctrl: PropagationControls | None = None,
                workers: int = 1, name: str = "sweep") -> tuple[list[Path], int]:
    ctrl = ctrl or PropagationControls()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = summary_rows(run_sweep(plan, ctrl, workers))
    data_path = out / f"{name}_data.csv"
    n = write_csv(data_path, plan.outputs, rows)
    meta_path = out / f"{name}_meta.json"
    meta = {"plan": plan.to_dict(), "controls": controls_to_dict(ctrl), "rows": n, "build": build_info()}
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return [data_path, meta_path], n
