"""Command-line front end.

Exit codes: 0 ok, 2 usage/configuration error, 3 non-convergence, 4 bracket failure.

Configuration files are JSON objects with the optional sections ``chain``,
``controls``, ``sweep`` and the key ``representation`` (see ``CONFIG_SCHEMA``);
command-line flags override file values.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import jsonschema

from .analysis import (
    CSV_COLUMNS,
    BracketError,
    PropagationError,
    find_lambda_qc,
    integrated_coherence,
    max_coherence,
    run_point_detailed,
)
from .dynamics import PropagationControls, efficiency, propagate
from .model import ChainSpec, LindbladConvention, Scenario, build_generator
from .operators import Representation, initial_state
from .sweep import (
    FIGURE_IDS,
    SweepPlan,
    controls_from_dict,
    controls_to_dict,
    figure_preset,
    format_value,
    reproduce_figure,
    reproduce_from_meta,
    spec_from_dict,
    write_csv,
    write_sweep,
)

EXIT_OK, EXIT_USAGE, EXIT_NOT_CONVERGED, EXIT_BRACKET = 0, 2, 3, 4

_NUMBER = {"type": "number"}
CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "chaintransport configuration",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "representation": {"enum": ["reduced", "full"]},
        "chain": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n": {"type": "integer"},
                "omega": _NUMBER,
                "lambda": _NUMBER,
                "gamma": _NUMBER,
                "big_gamma": _NUMBER,
                "gamma_sink": _NUMBER,
                "convention": {"enum": [c.value for c in LindbladConvention]},
            },
        },
        "controls": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rel_tol": _NUMBER,
                "abs_tol": _NUMBER,
                "t_max": {"anyOf": [{"const": "auto"}, _NUMBER]},
                "steady_eps": _NUMBER,
                "record_every": {"anyOf": [{"type": "null"}, _NUMBER]},
                "dt_initial": {"anyOf": [{"type": "null"}, _NUMBER]},
                "auto_horizon": _NUMBER,
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "axes": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["name", "values"],
                        "properties": {
                            "name": {"enum": ["lambda", "gamma", "Gamma", "bigGamma", "Gamma_s", "gammaSink", "N"]},
                            "values": {"type": "array", "items": _NUMBER, "minItems": 1},
                        },
                    },
                },
                "outputs": {"type": "array", "items": {"enum": list(CSV_COLUMNS)}},
                "unit_label": {"type": "string"},
                "max_points": {"type": "integer", "minimum": 1},
            },
        },
    },
}

DEFAULT_CHAIN = {"omega": 0.0, "gamma_sink": 1.0, "convention": "standard"}


class UsageError(Exception):
    pass


def load_config(path: str | Path | None) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise UsageError(f"invalid config at {where}: {exc.message}") from exc


# flag dest -> config key
_CHAIN_FLAGS = {
    "n": "n", "omega": "omega", "lam": "lambda", "gamma": "gamma",
    "big_gamma": "big_gamma", "gamma_sink": "gamma_sink", "convention": "convention",
}
_CONTROL_FLAGS = {
    "rel_tol": "rel_tol", "abs_tol": "abs_tol", "t_max": "t_max",
    "steady_eps": "steady_eps", "record_every": "record_every",
}


def merged_config(args: argparse.Namespace) -> dict:
    cfg = load_config(getattr(args, "config", None))
    chain = {**DEFAULT_CHAIN, **cfg.get("chain", {})}
    for dest, key in _CHAIN_FLAGS.items():
        v = getattr(args, dest, None)
        if v is not None:
            chain[key] = v
    controls = dict(cfg.get("controls", {}))
    for dest, key in _CONTROL_FLAGS.items():
        v = getattr(args, dest, None)
        if v is not None:
            controls[key] = v
    out = {"chain": chain, "controls": controls}
    rep = getattr(args, "representation", None) or cfg.get("representation")
    if rep:
        out["representation"] = rep
    if "sweep" in cfg:
        out["sweep"] = cfg["sweep"]
    validate_config(out)
    return out


def _spec(cfg: dict, need_lambda: bool = True) -> ChainSpec:
    chain = dict(cfg["chain"])
    required = ["n", "gamma", "big_gamma"] + (["lambda"] if need_lambda else [])
    missing = [k for k in required if k not in chain]
    if missing:
        raise UsageError(f"missing chain parameter(s): {', '.join(missing)}")
    chain.setdefault("lambda", 0.0)
    try:
        return spec_from_dict(chain)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _controls(cfg: dict) -> PropagationControls:
    try:
        return controls_from_dict(cfg.get("controls", {}))
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid controls: {exc}") from exc


def _representation(cfg: dict) -> Representation:
    return Representation(cfg.get("representation", "reduced"))


def _t_max(text: str) -> float | str:
    if text == "auto":
        return "auto"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("expected 'auto' or a number") from None


def _bracket(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("expected 'lo,hi'") from None
    return lo, hi


def _add_chain_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("chain parameters")
    g.add_argument("--n", type=int, help="number of chain sites (sink excluded)")
    g.add_argument("--lambda", dest="lam", type=float, help="hopping strength")
    g.add_argument("--gamma", type=float, help="local dephasing rate")
    g.add_argument("--big-gamma", dest="big_gamma", type=float, help="local dissipation rate")
    g.add_argument("--gamma-sink", dest="gamma_sink", type=float, help="sink rate (default 1)")
    g.add_argument("--omega", type=float, help="site energy (default 0; results do not depend on it)")
    g.add_argument("--convention", choices=[c.value for c in LindbladConvention],
                   help="rate convention of the dissipators (default standard)")
    c = p.add_argument_group("integration")
    c.add_argument("--t-max", dest="t_max", type=_t_max, help="'auto' (default) or a final time")
    c.add_argument("--rel-tol", dest="rel_tol", type=float)
    c.add_argument("--abs-tol", dest="abs_tol", type=float)
    c.add_argument("--steady-eps", dest="steady_eps", type=float)
    c.add_argument("--record-every", dest="record_every", type=float)
    p.add_argument("--representation", choices=[r.value for r in Representation])
    p.add_argument("--config", help="JSON configuration file; flags override its values")
    p.add_argument("--dump-config", action="store_true", help="print the effective configuration and exit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chaintransport", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="propagate one parameter point")
    _add_chain_flags(sim)
    sim.add_argument("--scenario", choices=["quantum", "classical", "both"], default="both",
                     help="'both' shares one time grid and is required for the intersection time")
    sim.add_argument("--out", help="trajectory CSV path (t,p_sink,coherence)")

    fl = sub.add_parser("find-lambda-qc", help="coupling where both scenarios are equally efficient")
    _add_chain_flags(fl)
    fl.add_argument("--bracket", type=_bracket, default=(0.1, 2.0), help="lo,hi (default 0.1,2.0)")
    fl.add_argument("--tol", type=float, default=1e-3)
    fl.add_argument("--out", help="CSV of every evaluated coupling")

    sw = sub.add_parser("sweep", help="run a parameter grid from a config file")
    _add_chain_flags(sw)
    sw.add_argument("--out-dir", default=".")
    sw.add_argument("--name", default="sweep", help="file prefix (default 'sweep')")
    sw.add_argument("--workers", type=int, default=1)

    rp = sub.add_parser("reproduce", help="write the dataset behind a figure")
    rp.add_argument("--figure", help=f"one of: {', '.join(FIGURE_IDS)}")
    rp.add_argument("--from-meta", dest="from_meta", help="re-run from a *_meta.json file")
    rp.add_argument("--out-dir", default=".")
    rp.add_argument("--workers", type=int, default=1)
    rp.add_argument("--config", help="JSON file whose 'controls' section overrides the defaults")
    rp.add_argument("--dump-config", action="store_true")
    return parser


def _print_config(cfg: dict) -> None:
    print(json.dumps(cfg, indent=2, sort_keys=True))


def _trajectory_rows(traj):
    return ({"t": t, "p_sink": p, "coherence": c}
            for t, p, c in zip(traj.times, traj.sink_population, traj.coherence))


def _fmt(x) -> str:
    return "none" if x is None else f"{x:.6f}"


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = merged_config(args)
    if args.dump_config:
        _print_config(cfg)
        return EXIT_OK
    spec, ctrl, rep = _spec(cfg), _controls(cfg), _representation(cfg)
    out = Path(args.out) if args.out else None
    if args.scenario == "both":
        runs = run_point_detailed(spec, ctrl, rep)
        s = runs.summary
        if out:
            write_csv(out.with_name(f"{out.stem}_quantum{out.suffix or '.csv'}"),
                      ("t", "p_sink", "coherence"), _trajectory_rows(runs.quantum))
            write_csv(out.with_name(f"{out.stem}_classical{out.suffix or '.csv'}"),
                      ("t", "p_sink", "coherence"), _trajectory_rows(runs.classical))
        print(f"eta_Q={s.eta_q:.6f} eta_C={s.eta_c:.6f} eta_diff={s.eta_diff:.6f} "
              f"I={s.integrated_coherence:.6f} C_max={s.max_coherence:.6f} "
              f"t_Cmax={s.max_coherence_time:.6f} tau={_fmt(s.intersection_time)} "
              f"converged={format_value(s.converged)}")
        converged = s.converged
        end = max(runs.quantum.termination_time, runs.classical.termination_time)
    else:
        scen = Scenario(args.scenario)
        s1 = spec.with_(scenario=scen)
        traj = propagate(build_generator(s1, rep), initial_state(s1.n, rep), ctrl)
        if out:
            write_csv(out, ("t", "p_sink", "coherence"), _trajectory_rows(traj))
        converged = traj.converged
        end = traj.termination_time
        c_max, t_cmax = max_coherence(traj)
        if converged:
            print(f"scenario={scen.value} eta={efficiency(traj):.6f} I={integrated_coherence(traj):.6f} "
                  f"C_max={c_max:.6f} t_Cmax={t_cmax:.6f} converged=true")
        else:
            print(f"scenario={scen.value} p_sink={traj.sink_population[-1]:.6f} C_max={c_max:.6f} "
                  f"t_Cmax={t_cmax:.6f} converged=false")
    if not converged:
        print(f"error: not converged by t={end:g}: excitation left in the chain exceeds "
              f"steady_eps={ctrl.steady_eps:g}; raise --t-max or use --t-max auto", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_find_lambda_qc(args: argparse.Namespace) -> int:
    cfg = merged_config(args)
    if args.dump_config:
        _print_config(cfg)
        return EXIT_OK
    spec, ctrl, rep = _spec(cfg, need_lambda=False), _controls(cfg), _representation(cfg)
    if args.tol <= 0:
        raise UsageError("--tol must be positive")
    try:
        res = find_lambda_qc(spec, args.bracket, args.tol, ctrl, rep)
    except BracketError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BRACKET
    if args.out:
        rows = sorted((s.row() for s in res.evaluations), key=lambda r: r["lambda"])
        write_csv(Path(args.out), ("lambda", "eta_Q", "eta_C", "eta_diff", "converged"), rows)
    print(f"lambda_QC={res.value:.6f} residual={res.residual:.3e} evaluations={len(res.evaluations)}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = merged_config(args)
    if args.dump_config:
        _print_config(cfg)
        return EXIT_OK
    sweep_cfg = cfg.get("sweep", {"axes": []})
    chain = dict(cfg["chain"])
    chain.setdefault("lambda", 0.0)
    _spec({"chain": chain}, need_lambda=False)  # parameter-specific validation messages
    try:
        plan = SweepPlan.from_dict({**sweep_cfg, "base": chain})
    except (ValueError, KeyError) as exc:
        raise UsageError(f"invalid sweep: {exc}") from exc
    t0 = time.perf_counter()
    files, n = write_sweep(plan, args.out_dir, _controls(cfg), args.workers, args.name)
    print(f"rows={n} elapsed={time.perf_counter() - t0:.2f}s files={','.join(str(f) for f in files)}")
    return EXIT_OK


def cmd_reproduce(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    ctrl = _controls(cfg)
    if args.from_meta:
        if args.dump_config:
            print(Path(args.from_meta).read_text(encoding="utf-8"), end="")
            return EXIT_OK
        t0 = time.perf_counter()
        files = reproduce_from_meta(args.from_meta, args.out_dir, args.workers)
    else:
        if not args.figure:
            raise UsageError(f"--figure or --from-meta is required; valid figures: {', '.join(FIGURE_IDS)}")
        try:
            preset = figure_preset(args.figure)
        except KeyError:
            raise UsageError(f"unknown figure {args.figure!r}; valid figures: {', '.join(FIGURE_IDS)}") from None
        if args.dump_config:
            _print_config({"preset": preset.to_dict(), "controls": controls_to_dict(ctrl)})
            return EXIT_OK
        t0 = time.perf_counter()
        files = reproduce_figure(preset, args.out_dir, ctrl, args.workers)
    meta = json.loads(files[-1].read_text(encoding="utf-8"))
    print(f"rows={meta['rows']} elapsed={time.perf_counter() - t0:.2f}s "
          f"files={','.join(str(f) for f in files)}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "find-lambda-qc": cmd_find_lambda_qc,
    "sweep": cmd_sweep,
    "reproduce": cmd_reproduce,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with 2 on malformed flags
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PropagationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
