"""Task-based planning: fly towards the nearest source still to be localized."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError, MissionComplete
from .filter import ParticleBelief, TransitionModel, estimate_mean
from .geometry import Rect, UavState

DISCRETIZED = "discretized"
CONTINUOUS = "continuous"
HOVER_RADIUS = 1.0  # m
_TIE_TOL = 1e-9


@dataclass(frozen=True)
class PlannerConfig:
    mode: str = CONTINUOUS
    uav_speed: float = 10.0
    discrete_action_duration: float = 8.0
    discrete_heading_count: int = 8
    replan_period_continuous: float = 1.0
    gyration_rate: float = math.radians(40.0)

    def __post_init__(self):
        if self.mode == "discrete":
            object.__setattr__(self, "mode", DISCRETIZED)
        if self.mode not in (DISCRETIZED, CONTINUOUS):
            raise DomainError(f"unknown planner mode {self.mode!r}")
        if not self.uav_speed > 0:
            raise DomainError("uav_speed must be > 0")
        if self.discrete_heading_count < 2:
            raise DomainError("discrete_heading_count must be >= 2")
        if not (self.discrete_action_duration > 0 and self.replan_period_continuous > 0):
            raise DomainError("action durations must be > 0")

    @property
    def action_duration(self) -> float:
        return self.discrete_action_duration if self.mode == DISCRETIZED else self.replan_period_continuous


@dataclass(frozen=True)
class Action:
    velocity: tuple[float, float]
    duration: float

    def __post_init__(self):
        object.__setattr__(self, "velocity", (float(self.velocity[0]), float(self.velocity[1])))
        if not self.duration > 0:
            raise DomainError("action duration must be > 0")

    @classmethod
    def hover(cls, duration: float) -> "Action":
        return cls((0.0, 0.0), duration)

    @property
    def is_hover(self) -> bool:
        return self.velocity == (0.0, 0.0)


def _horizontal_distance(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def select_nearest_source(beliefs: Sequence[ParticleBelief], uav: UavState) -> int:
    """Id of the unlocalized source whose mean is closest; ties -> lowest id."""
    best = None
    for b in beliefs:
        if b.localized:
            continue
        key = (_horizontal_distance(estimate_mean(b), uav.position), b.source_id)
        if best is None or key < best:
            best = key
    if best is None:
        raise MissionComplete("all sources localized")
    return best[1]


def predicted_mean(belief: ParticleBelief, transition: TransitionModel) -> np.ndarray:
    # the random walk has zero-mean increments, so prediction leaves the mean unchanged
    return estimate_mean(belief)


def propagate_uav(uav: UavState, action: Action, gyration_rate: float, dt: float,
                  bounds: Optional[Rect] = None) -> UavState:
    """Constant-velocity translation with decoupled constant-rate yaw."""
    if not dt > 0:
        raise DomainError("dt must be > 0")
    x = uav.position[0] + action.velocity[0] * dt
    y = uav.position[1] + action.velocity[1] * dt
    if bounds is not None:
        x, y = bounds.clip((x, y))
    return UavState((x, y, uav.position[2]), uav.heading + gyration_rate * dt)


def heading_velocity(heading: float, speed: float) -> tuple[float, float]:
    """Velocity for a compass heading (clockwise from +y)."""
    return (speed * math.sin(heading), speed * math.cos(heading))


def plan_discrete(uav: UavState, target: ParticleBelief, config: PlannerConfig,
                  transition: TransitionModel, bounds: Optional[Rect] = None) -> Action:
    """Best of ``discrete_heading_count`` equally spaced headings held for ``discrete_action_duration``."""
    goal = predicted_mean(target, transition)
    duration = config.discrete_action_duration
    best_action, best_dist = None, math.inf
    for k in range(config.discrete_heading_count):
        heading = 2 * math.pi * k / config.discrete_heading_count
        action = Action(heading_velocity(heading, config.uav_speed), duration)
        end = propagate_uav(uav, action, 0.0, duration, bounds)
        dist = _horizontal_distance(end.position, goal)
        if best_action is None or dist < best_dist - _TIE_TOL * max(1.0, best_dist):
            best_action, best_dist = action, dist
    return best_action


def plan_continuous(uav: UavState, target: ParticleBelief, config: PlannerConfig,
                    transition: TransitionModel) -> Action:
    goal = predicted_mean(target, transition)
    delta = goal - uav.xy
    dist = float(np.hypot(*delta))
    duration = config.replan_period_continuous
    if dist < HOVER_RADIUS:
        return Action.hover(duration)
    return Action(tuple(config.uav_speed * delta / dist), duration)


def plan(uav: UavState, beliefs: Sequence[ParticleBelief], config: PlannerConfig,
         transition: TransitionModel, bounds: Optional[Rect] = None) -> Action:
    """Pick the nearest unlocalized source, then the action that closes on it."""
    sid = select_nearest_source(beliefs, uav)
    target = next(b for b in beliefs if b.source_id == sid)
    if config.mode == DISCRETIZED:
        return plan_discrete(uav, target, config, transition, bounds)
    return plan_continuous(uav, target, config, transition)
