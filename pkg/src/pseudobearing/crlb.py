"""Fisher information / CRLB analysis of the gyration rate.

Scenario: a static source at the origin, a UAV revolving around it at
radius ``r`` with angular rate ``revolve_rate`` while yawing at
``self_rotation``. With a static state (F = I) the information recursion
reduces to ``J_t = J_{t-1} + H_t^T H_t / R``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import DomainError
from .geometry import GainPattern, SourceState, UavState, bearing_gradient, bearings_to, two_element_pattern, wrap_angle

_ORIGIN = np.zeros(2)
# J with det(J) below this fraction of trace(J)^2 is treated as singular
SINGULAR_RTOL = 1e-10


@dataclass(frozen=True)
class CrlbScenario:
    radius: float = 50.0
    revolve_rate: float = math.radians(3.6)  # rad/s
    self_rotation: float = 0.0  # rad/s
    sample_period: float = 1.0
    sigma: float = 4.0
    pattern: GainPattern = field(default_factory=two_element_pattern)
    steps: int = 10_000

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError("radius must be > 0")
        if not self.sample_period > 0:
            raise DomainError("sample_period must be > 0")
        if self.steps < 1:
            raise DomainError("steps must be >= 1")
        if not self.sigma > 0:
            raise DomainError("sigma must be > 0")

    @property
    def initial_heading(self) -> float:
        # bearing from (0, r) to the origin
        return math.pi


@dataclass(frozen=True, eq=False)
class FisherState:
    J: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))
    step: int = 0


def uav_pose_at(scenario: CrlbScenario, step: int) -> UavState:
    if step < 0:
        raise DomainError("step must be >= 0")
    t = step * scenario.sample_period
    a = scenario.revolve_rate * t
    return UavState(
        (scenario.radius * math.sin(a), scenario.radius * math.cos(a), 0.0),
        scenario.initial_heading + scenario.self_rotation * t,
    )


def measurement_jacobian(source: SourceState, uav_prev: UavState, uav_curr: UavState,
                         pattern: GainPattern) -> np.ndarray:
    """d/dp [G(phi_t) - G(phi_{t-1})] as a length-2 row."""
    p = np.array(source.position[:2])
    rows = []
    for u in (uav_prev, uav_curr):
        phi = bearings_to(p, u)
        rows.append(pattern.slope(phi) * bearing_gradient(p, u.xy))
    return rows[1] - rows[0]


def fim_step(state: FisherState, H, r_scalar: float) -> FisherState:
    if not r_scalar > 0:
        raise DomainError("measurement variance must be > 0")
    H = np.asarray(H, dtype=float).reshape(1, 2)
    return FisherState(state.J + H.T @ H / r_scalar, state.step + 1)


def det_inverse(J) -> Optional[float]:
    """det(J^-1), or ``None`` when J is numerically singular."""
    J = np.asarray(J)
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    tr = J[0, 0] + J[1, 1]
    if not det > SINGULAR_RTOL * tr * tr or det <= 0:
        return None
    return float(1.0 / det)


def _poses(scenario: CrlbScenario, steps: int):
    t = np.arange(steps + 1) * scenario.sample_period
    a = scenario.revolve_rate * t
    xy = np.stack([scenario.radius * np.sin(a), scenario.radius * np.cos(a)], axis=1)
    heading = wrap_angle(scenario.initial_heading + scenario.self_rotation * t)
    return xy, np.atleast_1d(heading)


def _gain_gradients(scenario: CrlbScenario, steps: int) -> np.ndarray:
    """slope(phi_k) * grad phi_k for k = 0..steps, shape (steps+1, 2)."""
    xy, heading = _poses(scenario, steps)
    dx, dy = -xy[:, 0], -xy[:, 1]
    phi = wrap_angle(np.arctan2(dx, dy) - heading)
    d2 = dx * dx + dy * dy
    grad = np.stack([dy / d2, -dx / d2], axis=1)
    return scenario.pattern.slope(phi)[:, None] * grad


def jacobian_rows(scenario: CrlbScenario, steps: Optional[int] = None) -> np.ndarray:
    """Differential-measurement Jacobians for steps 1..steps, shape (steps, 2)."""
    g = _gain_gradients(scenario, scenario.steps if steps is None else steps)
    return g[1:] - g[:-1]


def _noise_var(scenario: CrlbScenario) -> float:
    # differenced pair of samples: 2 sigma^2
    return 2.0 * scenario.sigma ** 2


def _det_series(H: np.ndarray, r_scalar: float) -> np.ndarray:
    a = np.cumsum(H[:, 0] ** 2) / r_scalar
    b = np.cumsum(H[:, 0] * H[:, 1]) / r_scalar
    c = np.cumsum(H[:, 1] ** 2) / r_scalar
    det = a * c - b * b
    tr = a + c
    out = np.full(H.shape[0], np.nan)
    ok = (det > SINGULAR_RTOL * tr * tr) & (det > 0)
    out[ok] = 1.0 / det[ok]
    return out


def crlb_det_trace(scenario: CrlbScenario) -> list[tuple[int, Optional[float]]]:
    """(step, det(J^-1)) for steps 1..N; ``None`` while J is singular."""
    dets = _det_series(jacobian_rows(scenario), _noise_var(scenario))
    return [(k + 1, None if math.isnan(d) else float(d)) for k, d in enumerate(dets)]


def final_information(scenario: CrlbScenario, steps: Optional[int] = None) -> np.ndarray:
    H = jacobian_rows(scenario, steps)
    return H.T @ H / _noise_var(scenario)


def final_det(scenario: CrlbScenario, steps: Optional[int] = None) -> Optional[float]:
    return det_inverse(final_information(scenario, steps))


def sweep_rotation(template: CrlbScenario, rotation_angles_per_dt: Sequence[float],
                   steps: Optional[int] = None) -> list[tuple[float, Optional[float]]]:
    """Final det(J^-1) for each rotation angle (degrees per sample period)."""
    out = []
    for angle in rotation_angles_per_dt:
        if not 0.0 <= angle <= 720.0:
            raise DomainError(f"rotation angle {angle} outside [0, 720]")
        zeta = math.radians(angle) / template.sample_period
        scenario = replace(template, self_rotation=zeta, steps=steps or template.steps)
        out.append((float(angle), final_det(scenario)))
    return out


def dual_antenna_information(template: CrlbScenario, steps: Optional[int] = None,
                             second_offset: Optional[float] = None) -> np.ndarray:
    """FIM for single-instant directional-minus-reference measurements.

    With ``second_offset=None`` the reference is omnidirectional; otherwise
    it is a copy of the directional pattern rotated by ``second_offset`` rad.
    Both receiver chains add noise, so the variance is 2 sigma^2.
    """
    n = template.steps if steps is None else steps
    xy, heading = _poses(template, n)
    dx, dy = -xy[:, 0], -xy[:, 1]
    phi = wrap_angle(np.arctan2(dx, dy) - heading)[1:]
    d2 = (dx * dx + dy * dy)[1:]
    grad = np.stack([dy[1:] / d2, -dx[1:] / d2], axis=1)
    slope = template.pattern.slope(phi)
    if second_offset is not None:
        slope = slope - template.pattern.slope(phi - second_offset)
    H = slope[:, None] * grad
    return H.T @ H / _noise_var(template)


def dual_antenna_fim(template: CrlbScenario, steps: Optional[int] = None,
                     second_offset: Optional[float] = None) -> Optional[float]:
    """det(J^-1) of the dual-antenna baseline at the final step."""
    return det_inverse(dual_antenna_information(template, steps, second_offset))
