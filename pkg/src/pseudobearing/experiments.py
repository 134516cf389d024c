"""Monte Carlo harness and the fixed-transect convergence experiment."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .config import METHODS, ScenarioConfig
from .errors import ConfigError
from .filter import TransitionModel, covariance_det, initialize, predict, reweight
from .geometry import SourceState, UavState
from .measurement import RollingWindow, difference_window, log_likelihood_many
from .mission import generate_ground_truth, n_ticks, run_mission
from .propagation import synthesize_rssi
from .rng import derive_seed, stream

RUN_FIELDS = (
    "track", "run", "method", "planner", "sigma_q",
    "total_time_s", "mean_error_m", "timeouts", "detection_rate",
)


class BatchRunError(RuntimeError):
    """A single Monte Carlo run failed; carries enough to replay it."""

    def __init__(self, track: int, run: int, method: str, seed: int, cause):
        self.track, self.run, self.method, self.seed = track, run, method, seed
        self.cause = cause if isinstance(cause, str) else repr(cause)
        super().__init__(f"track {track} run {run} method {method} seed {seed}: {self.cause}")

    def __reduce__(self):
        # plain-data form so the error survives a process pool
        return (BatchRunError, (self.track, self.run, self.method, self.seed, self.cause))


@dataclass(frozen=True)
class RunRecord:
    track: int
    run: int
    method: str
    planner: str
    sigma_q: float
    total_time_s: float
    mean_error_m: float  # nan when no source was localized
    timeouts: int
    detection_rate: float

    def row(self) -> dict:
        return {name: getattr(self, name) for name in RUN_FIELDS}


@dataclass(frozen=True)
class SummaryRow:
    method: str
    planner: str
    sigma_q: float
    n_runs: int
    mean_time_s: float
    std_time_s: float
    mean_error_m: float
    std_error_m: float
    timeouts: int
    mean_detection_rate: float


def _fmean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values) if values else math.nan


def _fstd(values: Sequence[float]) -> float:
    if len(values) < 2:
        return 0.0 if values else math.nan
    mu = _fmean(values)
    return math.sqrt(math.fsum((v - mu) ** 2 for v in values) / (len(values) - 1))


def _run_track(args) -> list[RunRecord]:
    config, track, track_seed, runs, methods, sigma_q, seed = args
    cfg = replace(config, source_sigma_q=sigma_q)
    # one trajectory per track, reused by every run and method
    truth = generate_ground_truth(cfg, stream(track_seed, "ground_truth"))
    records = []
    for r in range(runs):
        run_seed = derive_seed(seed, "run", sigma_q, track, r)
        for method in methods:
            try:
                res = run_mission(replace(cfg, method=method), run_seed, truth=truth, record_trajectory=False)
            except Exception as exc:
                raise BatchRunError(track, r, method, run_seed, exc) from exc
            records.append(RunRecord(
                track, r, method, cfg.planner.mode, sigma_q, res.total_time,
                res.mean_error, res.timeouts, res.detection_rate,
            ))
    return records


def run_monte_carlo(config: ScenarioConfig, n_tracks: int, runs_per_track: int, seed: int,
                    methods: Iterable[str] = ("gyro",), sigma_qs: Optional[Iterable[float]] = None,
                    jobs: int = 1) -> list[RunRecord]:
    """Tracks x runs x methods missions; results do not depend on ``jobs``."""
    methods = tuple(methods)
    for m in methods:
        if m not in METHODS:
            raise ConfigError("methods", f"unknown method {m!r}")
    if n_tracks < 1 or runs_per_track < 1:
        raise ConfigError("tracks", "tracks and runs must be >= 1")
    sigma_qs = (config.source_sigma_q,) if sigma_qs is None else tuple(float(q) for q in sigma_qs)
    tasks = [
        (config, k, derive_seed(seed, "track", q, k), runs_per_track, methods, q, seed)
        for q in sigma_qs
        for k in range(n_tracks)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_track, tasks))
    else:
        chunks = [_run_track(t) for t in tasks]
    records = [rec for chunk in chunks for rec in chunk]
    order = {m: i for i, m in enumerate(methods)}
    records.sort(key=lambda r: (r.sigma_q, r.track, r.run, order[r.method]))
    return records


def summarize(records: Sequence[RunRecord]) -> list[SummaryRow]:
    groups: dict[tuple, list[RunRecord]] = {}
    for r in records:
        groups.setdefault((r.method, r.planner, r.sigma_q), []).append(r)
    out = []
    for (method, planner, q), rs in groups.items():
        times = [r.total_time_s for r in rs]
        errors = [r.mean_error_m for r in rs if not math.isnan(r.mean_error_m)]
        out.append(SummaryRow(
            method, planner, q, len(rs), _fmean(times), _fstd(times), _fmean(errors), _fstd(errors),
            sum(r.timeouts for r in rs), _fmean([r.detection_rate for r in rs]),
        ))
    return out


def format_table(rows: Sequence[SummaryRow]) -> str:
    head = f"{'method':<15} {'planner':<12} {'sigma_q':>7} {'runs':>5} {'time_s':>15} {'error_m':>13} {'timeouts':>8}"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(
            f"{r.method:<15} {r.planner:<12} {r.sigma_q:>7.2f} {r.n_runs:>5d} "
            f"{r.mean_time_s:>7.1f} ± {r.std_time_s:<5.1f} {r.mean_error_m:>6.1f} ± {r.std_error_m:<4.1f} "
            f"{r.timeouts:>8d}"
        )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# rotation-speed convergence on a fixed transect

def transect_pose(config: ScenarioConfig, t: float, zeta: float) -> UavState:
    tr = config.transect
    start, end = np.array(tr.start), np.array(tr.end)
    length = float(np.hypot(*(end - start)))
    s = min(tr.speed * t, length)
    xy = start + (end - start) * (s / length if length > 0 else 0.0)
    return UavState((float(xy[0]), float(xy[1]), config.altitude), zeta * t)


def convergence_trace(config: ScenarioConfig, zeta_deg: float, seed: int) -> list[tuple[float, float]]:
    """(t, det C) for a gyro filter on the transect at yaw rate ``zeta_deg`` deg/s.

    The source is static at ``transect.source``; the UAV path is fixed, so
    only the gyration rate differs between calls with the same seed.
    """
    tr = config.transect
    env = config.environment()
    pattern = config.gain_pattern()
    radio = config.truth_radio
    dt = radio.pulse_period
    zeta = math.radians(zeta_deg)
    z = float(env.ground_height(*tr.source)) + config.source_height
    source = SourceState((tr.source[0], tr.source[1], z))
    meas_rng = stream(seed, "measurement")
    filt_rng = stream(seed, "filter")
    transition = TransitionModel(config.effective_filter_sigma_q, dt)
    belief = initialize(config.bounds, config.n_particles, filt_rng, 0)
    window = RollingWindow(config.window_m, config.max_gap_factor * dt)
    trace = []
    for k in range(int(math.floor(tr.duration / dt)) + 1):
        t = k * dt
        if k > 0:
            belief = predict(belief, transition, filt_rng)
        uav = transect_pose(config, t, zeta)
        rssi = synthesize_rssi(radio, pattern, env, source, uav, meas_rng)
        if rssi is not None:
            full = window.push(t, rssi, uav)
            if full is not None:
                ll = log_likelihood_many(difference_window(full), belief.particles, pattern,
                                         config.effective_filter_sigma)
                belief = reweight(belief, ll, filt_rng)
        trace.append((t, covariance_det(belief)))
    return trace


def crossing_time(trace: Sequence[tuple[float, float]], threshold: float) -> Optional[float]:
    for t, det in trace:
        if det < threshold:
            return t
    return None


def rotation_speed_convergence(config: ScenarioConfig, zetas_deg: Optional[Sequence[float]] = None,
                               seed: int = 0) -> dict[float, list[tuple[float, float]]]:
    zetas = config.transect.zetas_deg if zetas_deg is None else zetas_deg
    return {float(z): convergence_trace(config, z, seed) for z in zetas}


__all__ = [
    "RUN_FIELDS", "BatchRunError", "RunRecord", "SummaryRow", "run_monte_carlo", "summarize", "format_table",
    "transect_pose", "convergence_trace", "crossing_time", "rotation_speed_convergence", "n_ticks",
]
