"""Command-line front end.

    pseudobearing crlb-sweep  [--steps N] [--angles LIST]
    pseudobearing simulate    [--method M] [--planner P]
    pseudobearing batch       [--tracks N] [--runs N] [--methods LIST] [--sigma-q LIST]
    pseudobearing convergence [--zetas LIST]

Shared flags: --config PATH | --preset NAME, --seed N, --out DIR, --force, --jobs N.
Exit status: 0 on success (mission timeouts included), 2 on usage or
configuration errors, 1 on anything else.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import traceback
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import METHODS, PRESETS, ScenarioConfig
from .crlb import CrlbScenario, crlb_det_trace, dual_antenna_fim, sweep_rotation
from .errors import ConfigError, DomainError
from .experiments import (
    RUN_FIELDS,
    BatchRunError,
    format_table,
    rotation_speed_convergence,
    run_monte_carlo,
    summarize,
)
from .mission import run_mission

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE = 0, 1, 2
DEFAULT_SWEEP = tuple(float(a) for a in range(0, 361, 5))
DEFAULT_TRACE_ZETAS = (0.0, 20.0, 40.0)


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunManifest:
    config_path: Optional[str]
    seed: int
    command: str
    output_dir: str
    tool_version: str = __version__
    config_hash: str = ""

    def header(self) -> str:
        return (f"# pseudobearing {self.tool_version} command={self.command} "
                f"seed={self.seed} config={self.config_hash}")

    def as_dict(self) -> dict:
        return {
            "tool_version": self.tool_version,
            "command": self.command,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "config_path": self.config_path,
        }


# ---------------------------------------------------------------------------
# output helpers

def _fmt(value) -> str:
    # repr round-trips floats exactly, so re-aggregating a CSV reproduces the summary
    if value is None:
        return ""
    if isinstance(value, float):
        return "nan" if math.isnan(value) else repr(float(value))
    return str(value)


class _Outputs:
    """Refuses to clobber existing files unless ``force`` is set."""

    def __init__(self, out_dir: Path, manifest: RunManifest, force: bool):
        self.dir = out_dir
        self.manifest = manifest
        self.force = force

    def check(self, names: Sequence[str]) -> None:
        if self.dir.exists() and not self.dir.is_dir():
            raise UsageError(f"--out {self.dir} is not a directory")
        clash = [n for n in names if (self.dir / n).exists()]
        if clash and not self.force:
            raise UsageError(f"refusing to overwrite {', '.join(clash)} in {self.dir} (use --force)")
        self.dir.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, fields: Sequence[str], rows) -> Path:
        path = self.dir / name
        with path.open("w", newline="") as fh:
            fh.write(self.manifest.header() + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(fields)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        return path

    def json(self, name: str, payload: dict) -> Path:
        # JSON has no comments, so the manifest travels as a top-level key
        path = self.dir / name
        doc = {"manifest": self.manifest.as_dict(), **payload}
        with path.open("w", newline="") as fh:
            fh.write(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n")
        return path


def _float_list(text: str, flag: str) -> list[float]:
    if text is None:
        return None
    parts = [p.strip() for p in text.split(",") if p.strip()]
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise UsageError(f"{flag}: expected comma-separated numbers, got {text!r}") from None


def _name_list(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


# ---------------------------------------------------------------------------
# config

def load_config(args) -> ScenarioConfig:
    if args.config and args.preset:
        raise UsageError("--config and --preset are mutually exclusive")
    if args.config:
        config = ScenarioConfig.load(args.config)
    else:
        config = PRESETS[args.preset or "simulation"]()
    method = getattr(args, "method", None)
    if method is not None:
        if method not in METHODS:
            raise UsageError(f"--method: unknown method {method!r} (choose from {', '.join(METHODS)})")
        config = replace(config, method=method)
    if getattr(args, "planner", None):
        config = replace(config, planner=replace(config.planner, mode=args.planner))
    return config


def _manifest(args, config: ScenarioConfig) -> RunManifest:
    return RunManifest(args.config, args.seed, args.command, str(args.out), __version__, config.config_hash())


# ---------------------------------------------------------------------------
# commands

def cmd_crlb_sweep(args) -> int:
    config = load_config(args)
    angles = _float_list(args.angles, "--angles") if args.angles else list(DEFAULT_SWEEP)
    trace_zetas = _float_list(args.trace_zetas, "--trace-zetas")
    if trace_zetas is None:
        trace_zetas = list(DEFAULT_TRACE_ZETAS)
    if not angles:
        raise UsageError("--angles: at least one angle is required")
    angles = sorted(angles)
    for z in trace_zetas:
        if not 0.0 <= z <= 720.0:
            raise UsageError(f"--trace-zetas: {z} outside [0, 720]")
    if args.steps is not None and args.steps < 1:
        raise UsageError("--steps must be >= 1")
    scenario = CrlbScenario(pattern=config.gain_pattern())
    if args.steps is not None:
        scenario = replace(scenario, steps=args.steps)
    out = _Outputs(Path(args.out), _manifest(args, config), args.force)
    out.check(["crlb_sweep.csv", "crlb_trace.csv"])

    dual = dual_antenna_fim(scenario)
    sweep = sweep_rotation(scenario, angles)
    out.csv("crlb_sweep.csv", ("angle_deg", "det_crlb", "dual_antenna_det"),
            ((a, d, dual) for a, d in sweep))
    rows = []
    for z in trace_zetas:
        s = replace(scenario, self_rotation=math.radians(z) / scenario.sample_period)
        rows.extend((z, step, det) for step, det in crlb_det_trace(s))
    out.csv("crlb_trace.csv", ("zeta_deg", "step", "det_crlb"), rows)
    return EXIT_OK


def cmd_simulate(args) -> int:
    config = load_config(args)
    out = _Outputs(Path(args.out), _manifest(args, config), args.force)
    out.check(["trajectory.csv", "belief_trace.csv", "summary.json"])
    result = run_mission(config, args.seed)
    out.csv("trajectory.csv", ("t_s", "x_m", "y_m", "z_m", "heading_rad"),
            ((k * config.truth_radio.pulse_period, *u.position, u.heading)
             for k, u in enumerate(result.trajectory)))
    out.csv("belief_trace.csv", ("source_id", "t_s", "det_cov"),
            ((sid, t, det) for sid, trace in sorted(result.belief_det_trace.items()) for t, det in trace))
    out.json("summary.json", _json_safe(result.summary()))
    s = result.summary()
    print(f"{config.method}/{config.planner.mode}: total time {s['total_time_s']:.0f} s, "
          f"{s['timeouts']} timeout(s), mean error "
          + ("n/a" if s["mean_error_m"] is None else f"{s['mean_error_m']:.1f} m"))
    return EXIT_OK


def cmd_batch(args) -> int:
    config = load_config(args)
    methods = _name_list(args.methods) if args.methods else [config.method]
    for m in methods:
        if m not in METHODS:
            raise UsageError(f"--methods: unknown method {m!r} (choose from {', '.join(METHODS)})")
    sigma_qs = _float_list(args.sigma_q, "--sigma-q")
    if sigma_qs is not None and (not sigma_qs or min(sigma_qs) < 0):
        raise UsageError("--sigma-q: expected non-negative values")
    if args.tracks < 1 or args.runs < 1:
        raise UsageError("--tracks and --runs must be >= 1")
    out = _Outputs(Path(args.out), _manifest(args, config), args.force)
    out.check(["batch_runs.csv", "batch_summary.csv"])
    records = run_monte_carlo(config, args.tracks, args.runs, args.seed, methods, sigma_qs, args.jobs)
    out.csv("batch_runs.csv", RUN_FIELDS, ([getattr(r, f) for f in RUN_FIELDS] for r in records))
    rows = summarize(records)
    fields = ("method", "planner", "sigma_q", "n_runs", "mean_time_s", "std_time_s",
              "mean_error_m", "std_error_m", "timeouts", "mean_detection_rate")
    out.csv("batch_summary.csv", fields, ([getattr(r, f) for f in fields] for r in rows))
    print(format_table(rows))
    return EXIT_OK


def cmd_convergence(args) -> int:
    config = load_config(args)
    zetas = _float_list(args.zetas, "--zetas")
    if zetas is None:
        zetas = list(config.transect.zetas_deg)
    if not zetas:
        raise UsageError("--zetas: at least one rate is required")
    out = _Outputs(Path(args.out), _manifest(args, config), args.force)
    out.check(["convergence.csv"])
    traces = rotation_speed_convergence(config, zetas, args.seed)
    out.csv("convergence.csv", ("t_s", "zeta_deg_s", "det_cov"),
            ((t, z, det) for z, trace in traces.items() for t, det in trace))
    return EXIT_OK


COMMANDS = {
    "crlb-sweep": cmd_crlb_sweep,
    "simulate": cmd_simulate,
    "batch": cmd_batch,
    "convergence": cmd_convergence,
}


# ---------------------------------------------------------------------------
# argument parsing

def _seed(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="scenario JSON file")
    common.add_argument("--preset", choices=sorted(PRESETS), help="built-in scenario (default: simulation)")
    common.add_argument("--seed", type=_seed, default=0, help="64-bit root seed (default 0)")
    common.add_argument("--out", default=".", metavar="DIR", help="output directory (default .)")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")
    common.add_argument("--jobs", type=_positive_int, default=1, help="worker processes (default 1)")

    parser = argparse.ArgumentParser(prog="pseudobearing", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"pseudobearing {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("crlb-sweep", parents=[common], help="CRLB versus gyration rate")
    p.add_argument("--steps", type=int, help="time steps per scenario (default 10000)")
    p.add_argument("--angles", help="rotation angles per sample, deg (default 0..360 step 5)")
    p.add_argument("--trace-zetas", help="rates for crlb_trace.csv, deg per sample (default 0,20,40)")

    planner_choices = ["discrete", "discretized", "continuous"]
    p = sub.add_parser("simulate", parents=[common], help="one closed-loop mission")
    p.add_argument("--method", help=f"one of {', '.join(METHODS)}")
    p.add_argument("--planner", choices=planner_choices)

    p = sub.add_parser("batch", parents=[common], help="Monte Carlo over tracks and runs")
    p.add_argument("--tracks", type=int, default=10)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--methods", "--method", dest="methods", help="comma-separated methods")
    p.add_argument("--sigma-q", dest="sigma_q", help="comma-separated source process-noise values, m")
    p.add_argument("--planner", choices=planner_choices)

    p = sub.add_parser("convergence", parents=[common], help="det(C) on the fixed transect per yaw rate")
    p.add_argument("--zetas", help="comma-separated yaw rates, deg/s (default 0..60 step 10)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, DomainError) as exc:
        print(f"pseudobearing {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BatchRunError as exc:
        print(f"pseudobearing {args.command}: run failed: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
