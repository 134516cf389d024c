"""Closed-loop mission simulation for the four measurement strategies.

All methods share ground truth, propagation, the particle filter and the
planner; only the observation and its likelihood differ:

``gyro``            rolling-window RSSI differences from a yawing UAV
``dual_antenna``    directional minus omnidirectional RSSI, per pulse
``rotate_bearing``  stop, rotate in place, report one noisy bearing
``rssi_ideal``      absolute RSSI with the exact truth propagation model
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import ScenarioConfig
from .errors import MissionComplete
from .filter import (
    ParticleBelief,
    TransitionModel,
    covariance_det,
    estimate_mean,
    initialize,
    latch_localization,
    predict,
    reweight,
)
from .geometry import GainPattern, SourceState, UavState, wrap_angle, wrap_to_pi
from .measurement import DifferentialMeasurement, RollingWindow, difference_window, log_likelihood_many
from .planner import Action, plan, propagate_uav
from .propagation import (
    EnvironmentModel,
    mean_rssi_many,
    received_power,
    synthesize_rssi,
    terrain_loss_many,
)
from .rng import stream


@dataclass
class SourceOutcome:
    id: int
    localization_time: Optional[float]  # None on timeout
    error: Optional[float]  # m, frozen estimate vs truth at declaration
    final_error: float  # m, posterior mean vs truth when the mission ends

    @property
    def timed_out(self) -> bool:
        return self.localization_time is None


@dataclass
class MissionResult:
    per_source: list[SourceOutcome]
    total_time: float
    detection_rate: float
    method: str = "gyro"
    planner: str = "continuous"
    seed: int = 0
    trajectory: list[UavState] = field(default_factory=list)
    belief_det_trace: dict[int, list[tuple[float, float]]] = field(default_factory=dict)
    detections: int = 0
    pulses: int = 0

    @property
    def timeouts(self) -> int:
        return sum(s.timed_out for s in self.per_source)

    @property
    def mean_error(self) -> float:
        errs = [s.error for s in self.per_source if s.error is not None]
        return math.fsum(errs) / len(errs) if errs else math.nan

    def summary(self) -> dict:
        return {
            "method": self.method,
            "planner": self.planner,
            "seed": self.seed,
            "total_time_s": self.total_time,
            "mean_error_m": None if math.isnan(self.mean_error) else self.mean_error,
            "timeouts": self.timeouts,
            "detection_rate": self.detection_rate,
            "detections": self.detections,
            "pulses": self.pulses,
            "per_source": [
                {
                    "id": s.id,
                    "localization_time_s": s.localization_time,
                    "timed_out": s.timed_out,
                    "error_m": s.error,
                    "final_error_m": s.final_error,
                }
                for s in self.per_source
            ],
        }


def n_ticks(config: ScenarioConfig) -> int:
    return int(math.ceil(config.mission_timeout / config.truth_radio.pulse_period))


def random_source_positions(config: ScenarioConfig, rng: np.random.Generator, n: Optional[int] = None) -> np.ndarray:
    n = config.source_count if n is None else n
    b, m = config.bounds, config.source_margin
    lo = np.array([b.xmin + m, b.ymin + m])
    hi = np.array([b.xmax - m, b.ymax - m])
    return rng.uniform(lo, hi, size=(n, 2))


def _reflect(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    span = hi - lo
    v = np.mod(values - lo, 2 * span)
    return lo + np.where(v > span, 2 * span - v, v)


def generate_ground_truth(config: ScenarioConfig, rng: np.random.Generator,
                          initial_xy: Optional[np.ndarray] = None) -> np.ndarray:
    """Source positions for every pulse tick, shape ``(ticks + 1, n_sources, 3)``.

    Independent x-y Gaussian random walks with per-tick std ``source_sigma_q``,
    reflected at the search-area bounds; z follows the terrain plus
    ``source_height``.
    """
    if initial_xy is None:
        if config.sources:
            initial_xy = np.array([s.position for s in config.sources], dtype=float)
        else:
            initial_xy = random_source_positions(config, rng)
    initial_xy = np.asarray(initial_xy, dtype=float).reshape(-1, 2)
    steps = n_ticks(config)
    n = initial_xy.shape[0]
    increments = rng.normal(0.0, 1.0, size=(steps, n, 2)) * config.source_sigma_q
    xy = np.concatenate([initial_xy[None], initial_xy[None] + np.cumsum(increments, axis=0)])
    b = config.bounds
    xy[..., 0] = _reflect(xy[..., 0], b.xmin, b.xmax)
    xy[..., 1] = _reflect(xy[..., 1], b.ymin, b.ymax)
    env = config.environment()
    z = np.asarray(env.ground_height(xy[..., 0], xy[..., 1])) + config.source_height
    return np.concatenate([xy, np.broadcast_to(z, xy.shape[:-1])[..., None]], axis=-1)


# ---------------------------------------------------------------------------
# measurement strategies

class _Strategy:
    """Per-pulse observation and matching per-particle log-likelihood."""

    rotates_in_place = False

    def __init__(self, config: ScenarioConfig, env: EnvironmentModel, pattern: GainPattern):
        self.config = config
        self.env = env
        self.pattern = pattern
        self.sigma = config.effective_filter_sigma

    def observe(self, sid: int, t: float, uav: UavState, source: SourceState, rng):
        raise NotImplementedError

    def log_likelihood(self, obs, particles: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class GyroStrategy(_Strategy):
    def __init__(self, config, env, pattern):
        super().__init__(config, env, pattern)
        max_gap = config.max_gap_factor * config.truth_radio.pulse_period
        self.windows: dict[int, RollingWindow] = {}
        self._max_gap = max_gap

    def observe(self, sid, t, uav, source, rng) -> tuple[bool, Optional[DifferentialMeasurement]]:
        z = synthesize_rssi(self.config.truth_radio, self.pattern, self.env, source, uav, rng)
        if z is None:
            return False, None
        window = self.windows.setdefault(sid, RollingWindow(self.config.window_m, self._max_gap))
        full = window.push(t, z, uav)
        return True, None if full is None else difference_window(full)

    def log_likelihood(self, obs, particles):
        return log_likelihood_many(obs, particles, self.pattern, self.sigma)


class DualAntennaStrategy(_Strategy):
    """Directional minus omnidirectional RSSI from the same pulse.

    The omni reference has gain ``-dual_antenna_offset``, so the noiseless
    measurement is ``G(phi) + offset``; two receiver chains give noise
    variance ``2 sigma^2``.
    """

    def __init__(self, config, env, pattern):
        super().__init__(config, env, pattern)
        self.offset = config.dual_antenna_offset
        self.omni = GainPattern.omni(-self.offset)

    def observe(self, sid, t, uav, source, rng):
        z_dir = synthesize_rssi(self.config.truth_radio, self.pattern, self.env, source, uav, rng)
        noise = rng.normal(0.0, self.config.truth_radio.noise_std)
        if z_dir is None:
            return False, None
        z_omni = received_power(self.config.truth_radio, self.omni, self.env, source, uav) + noise
        return True, (z_dir - z_omni, uav)

    def log_likelihood(self, obs, particles):
        z, uav = obs
        dx = particles[:, 0] - uav.position[0]
        dy = particles[:, 1] - uav.position[1]
        pred = self.pattern.gain(np.arctan2(dx, dy) - uav.heading) + self.offset
        var = 2.0 * self.sigma ** 2
        return -0.5 * (z - pred) ** 2 / var - 0.5 * math.log(2 * math.pi * var)


class RssiIdealStrategy(_Strategy):
    """Absolute RSSI scored with the exact truth model, terrain included."""

    def __init__(self, config, env, pattern):
        super().__init__(config, env, pattern)
        self.sigma = config.truth_radio.noise_std if config.truth_radio.noise_std > 0 else 1e-3

    def observe(self, sid, t, uav, source, rng):
        z = synthesize_rssi(self.config.truth_radio, self.pattern, self.env, source, uav, rng)
        return (z is not None), (None if z is None else (z, uav))

    def particle_positions(self, particles: np.ndarray) -> np.ndarray:
        xy = particles
        terrain = self.env.terrain
        if terrain is not None:
            e = terrain.extent
            xy = np.column_stack([np.clip(xy[:, 0], e.xmin, e.xmax), np.clip(xy[:, 1], e.ymin, e.ymax)])
            z = terrain.height_at(xy[:, 0], xy[:, 1])
        else:
            z = np.zeros(len(xy))
        return np.column_stack([xy, z + self.config.source_height])

    def log_likelihood(self, obs, particles):
        z, uav = obs
        pts = self.particle_positions(particles)
        pred = mean_rssi_many(self.config.truth_radio, self.pattern, pts, uav)
        if self.env.terrain is not None:
            pred = pred - terrain_loss_many(self.env, pts, np.asarray(uav.position))
        pred = pred - self.env.extra_loss
        return -0.5 * ((z - pred) / self.sigma) ** 2 - math.log(self.sigma * math.sqrt(2 * math.pi))


class RotateBearingStrategy(_Strategy):
    """Bearing from a full in-place rotation; the pulses only count detections."""

    rotates_in_place = True

    def __init__(self, config, env, pattern):
        super().__init__(config, env, pattern)
        self.std = math.radians(config.rotate_bearing.bearing_std_deg)
        self.hits: dict[int, int] = {}

    def observe(self, sid, t, uav, source, rng):
        detected = rng.random() < self.env.detection_prob
        if detected:
            self.hits[sid] = self.hits.get(sid, 0) + 1
        return detected, None

    def reset(self):
        self.hits.clear()

    def bearing(self, sid: int, uav: UavState, source: SourceState, rng) -> Optional[float]:
        """World-frame bearing with wrapped Gaussian noise, or None if too few pulses were heard."""
        noise = rng.normal(0.0, self.std) if self.std > 0 else 0.0
        if self.hits.get(sid, 0) < self.config.rotate_bearing.min_detections:
            return None
        return rotate_bearing_measurement(uav, source, noise)

    def log_likelihood(self, obs, particles):
        bearing, uav = obs
        return bearing_log_likelihood(bearing, uav, particles, self.std)


def rotate_bearing_measurement(uav: UavState, source: SourceState, noise: float = 0.0) -> float:
    true = math.atan2(source.position[0] - uav.position[0], source.position[1] - uav.position[1])
    return wrap_angle(true + noise)


def bearing_log_likelihood(bearing: float, uav: UavState, particles: np.ndarray, std: float) -> np.ndarray:
    """Gaussian on the residual wrapped into (-pi, pi]."""
    pred = np.arctan2(particles[:, 0] - uav.position[0], particles[:, 1] - uav.position[1])
    resid = wrap_to_pi(bearing - pred)
    return -0.5 * (resid / std) ** 2 - math.log(std * math.sqrt(2 * math.pi))


STRATEGIES = {
    "gyro": GyroStrategy,
    "dual_antenna": DualAntennaStrategy,
    "rotate_bearing": RotateBearingStrategy,
    "rssi_ideal": RssiIdealStrategy,
}


# ---------------------------------------------------------------------------
# mission loop

def run_mission(config: ScenarioConfig, seed: int, truth: Optional[np.ndarray] = None,
                record_trajectory: bool = True) -> MissionResult:
    """Simulate one mission at pulse-period ticks; deterministic in (config, seed, truth)."""
    env = config.environment()
    pattern = config.gain_pattern()
    if truth is None:
        truth = generate_ground_truth(config, stream(seed, "ground_truth"))
    n_src = truth.shape[1]
    dt = config.truth_radio.pulse_period
    result = MissionResult([], 0.0, 0.0, config.method, config.planner.mode, seed)
    if n_src == 0:
        result.detection_rate = 0.0
        return result

    meas_rng = stream(seed, "measurement")
    filt_rng = stream(seed, "filter")
    strategy = STRATEGIES[config.method](config, env, pattern)
    transition = TransitionModel(config.effective_filter_sigma_q, dt)
    ids = [s.id for s in config.sources] if len(config.sources) == n_src else list(range(n_src))
    beliefs = [initialize(config.bounds, config.n_particles, filt_rng, sid) for sid in ids]
    loc_time: dict[int, float] = {}
    loc_error: dict[int, float] = {}
    traces: dict[int, list[tuple[float, float]]] = {sid: [] for sid in ids}

    uav = config.uav_initial_state
    gyration = config.planner.gyration_rate
    action: Optional[Action] = None
    action_left = 0.0
    rb = config.rotate_bearing
    phase, phase_left = "measure", rb.rotation_time  # rotate_bearing only
    detections = pulses = 0
    ticks = n_ticks(config)
    t = 0.0

    for k in range(ticks + 1):
        t = k * dt
        if record_trajectory:
            result.trajectory.append(uav)
        positions = truth[k]
        active = [i for i, b in enumerate(beliefs) if not b.localized]
        if k > 0:
            for i in active:
                beliefs[i] = predict(beliefs[i], transition, filt_rng)

        measuring = not strategy.rotates_in_place or phase == "measure"
        for i in active:
            src = SourceState(positions[i])
            if not measuring:
                continue
            pulses += 1
            detected, obs = strategy.observe(ids[i], t, uav, src, meas_rng)
            detections += detected
            if obs is not None:
                beliefs[i] = reweight(beliefs[i], strategy.log_likelihood(obs, beliefs[i].particles), filt_rng)

        if strategy.rotates_in_place and phase == "measure" and phase_left <= 1e-9:
            # rotation complete: one bearing per source heard during it
            for i in active:
                bearing = strategy.bearing(ids[i], uav, SourceState(positions[i]), meas_rng)
                if bearing is not None:
                    ll = strategy.log_likelihood((bearing, uav), beliefs[i].particles)
                    beliefs[i] = reweight(beliefs[i], ll, filt_rng)
            strategy.reset()
            phase, phase_left = "travel", rb.travel_leg
            action = None

        for i in active:
            beliefs[i] = latch_localization(beliefs[i], config.localized_threshold)
            det = covariance_det(beliefs[i])
            traces[ids[i]].append((t, det))
            if beliefs[i].localized:
                loc_time[ids[i]] = t
                loc_error[ids[i]] = float(np.hypot(*(beliefs[i].localized_estimate - positions[i][:2])))

        if all(b.localized for b in beliefs) or k == ticks:
            break

        # motion for the next tick
        try:
            if strategy.rotates_in_place:
                if phase == "measure":
                    uav = UavState(uav.position, uav.heading + 2 * math.pi * dt / rb.rotation_time)
                    phase_left -= dt
                else:
                    if action is None:
                        a = plan(uav, beliefs, config.planner, transition, config.bounds)
                        action = Action(a.velocity, rb.travel_leg)
                    uav = propagate_uav(uav, action, 0.0, dt, config.bounds)
                    phase_left -= dt
                    if phase_left <= 1e-9:
                        phase, phase_left = "measure", rb.rotation_time
                        action = None
            else:
                if action is None or action_left <= 1e-9:
                    action = plan(uav, beliefs, config.planner, transition, config.bounds)
                    action_left = action.duration
                uav = propagate_uav(uav, action, gyration, dt, config.bounds)
                action_left -= dt
        except MissionComplete:
            break

    result.per_source = [
        SourceOutcome(
            sid,
            loc_time.get(sid),
            loc_error.get(sid),
            float(np.hypot(*(
                (beliefs[i].localized_estimate if beliefs[i].localized else estimate_mean(beliefs[i]))
                - truth[min(k, ticks), i, :2]
            ))),
        )
        for i, sid in enumerate(ids)
    ]
    result.total_time = max(loc_time.values()) if len(loc_time) == n_src else ticks * dt
    result.detections = detections
    result.pulses = pulses
    result.detection_rate = detections / pulses if pulses else 0.0
    result.belief_det_trace = traces
    return result
