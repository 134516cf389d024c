"""Poses, bearings and azimuth-only antenna gain patterns.

Bearings follow the north-referenced, clockwise convention
``atan2(dx, dy)``: a source due east of a north-facing receiver sits at
``pi/2``. All angles are radians and wrapped to ``[0, 2*pi)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DomainError, GeometryError

TWO_PI = 2.0 * math.pi
FD_STEP = 1e-4


def wrap_angle(angle):
    """Wrap scalar or array angles into ``[0, 2*pi)``."""
    wrapped = np.mod(angle, TWO_PI)
    # np.mod can round tiny negatives up to exactly 2*pi
    wrapped = np.where(wrapped >= TWO_PI, 0.0, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def wrap_to_pi(angle):
    """Wrap into ``(-pi, pi]``."""
    wrapped = math.pi - np.mod(math.pi - np.asarray(angle, dtype=float), TWO_PI)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def _vec3(values, name: str) -> tuple[float, float, float]:
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.size == 2:
        arr = np.append(arr, 0.0)
    if arr.size != 3:
        raise DomainError(f"{name} must have 2 or 3 components, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite, got {arr.tolist()}")
    return (float(arr[0]), float(arr[1]), float(arr[2]))


@dataclass(frozen=True)
class UavState:
    """Sensor platform pose: position in metres and heading in radians."""

    position: tuple[float, float, float]
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position, "position"))
        if not math.isfinite(self.heading):
            raise DomainError("heading must be finite")
        object.__setattr__(self, "heading", wrap_angle(float(self.heading)))

    @property
    def xy(self) -> np.ndarray:
        return np.array(self.position[:2])

    def replace(self, position=None, heading=None) -> "UavState":
        return UavState(
            self.position if position is None else position,
            self.heading if heading is None else heading,
        )


@dataclass(frozen=True)
class SourceState:
    position: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position, "position"))

    @property
    def xy(self) -> np.ndarray:
        return np.array(self.position[:2])


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle ``[xmin, xmax] x [ymin, ymax]``."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        vals = (self.xmin, self.ymin, self.xmax, self.ymax)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError("rectangle bounds must be finite")
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise DomainError(f"degenerate rectangle {vals}")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def center(self) -> np.ndarray:
        return np.array([(self.xmin + self.xmax) / 2, (self.ymin + self.ymax) / 2])

    def contains(self, xy) -> bool:
        x, y = float(xy[0]), float(xy[1])
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax

    def clip(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        return np.array([
            min(max(xy[0], self.xmin), self.xmax),
            min(max(xy[1], self.ymin), self.ymax),
        ])

    def as_list(self) -> list[float]:
        return [self.xmin, self.ymin, self.xmax, self.ymax]


def bearings_to(points_xy, uav: UavState) -> np.ndarray:
    """Relative bearing from ``uav`` to each row of ``points_xy`` (no degeneracy check)."""
    pts = np.asarray(points_xy, dtype=float)
    dx = pts[..., 0] - uav.position[0]
    dy = pts[..., 1] - uav.position[1]
    return wrap_angle(np.arctan2(dx, dy) - uav.heading)


def relative_bearing(source: SourceState, uav: UavState) -> float:
    """Bearing of ``source`` in the receiver's body frame, in ``[0, 2*pi)``."""
    dx = source.position[0] - uav.position[0]
    dy = source.position[1] - uav.position[1]
    if dx == 0.0 and dy == 0.0:
        raise GeometryError("source and UAV share the same horizontal position")
    return wrap_angle(math.atan2(dx, dy) - uav.heading)


def bearing_gradient(points_xy, uav_xy) -> np.ndarray:
    """Gradient of the bearing w.r.t. the source position, shape ``(..., 2)``.

    ``d/dp atan2(dx, dy) = (dy, -dx) / d^2``; the heading does not enter.
    """
    pts = np.asarray(points_xy, dtype=float)
    dx = pts[..., 0] - uav_xy[0]
    dy = pts[..., 1] - uav_xy[1]
    d2 = dx * dx + dy * dy
    if np.any(d2 == 0.0):
        raise GeometryError("bearing gradient undefined at the receiver position")
    return np.stack([dy / d2, -dx / d2], axis=-1)


@dataclass(frozen=True, eq=False)
class GainPattern:
    """Azimuth gain pattern in dB.

    Kinds: ``parametric`` (raised cosine), ``two_element`` (endfire pair
    with filled nulls) and ``tabulated`` (wrapped linear interpolation).
    Build instances with :meth:`parametric`, :func:`two_element_pattern`,
    :meth:`tabulated` or :meth:`from_csv` rather than the raw constructor.
    """

    kind: str
    boresight_gain: float = 0.0
    front_to_back: float = 0.0
    angles: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gains: np.ndarray = field(default_factory=lambda: np.zeros(0))
    null_depth: float = 0.0

    def __post_init__(self):
        if self.kind in ("parametric", "two_element"):
            if not (math.isfinite(self.boresight_gain) and math.isfinite(self.front_to_back)):
                raise DomainError("pattern gains must be finite")
            if self.front_to_back < 0:
                raise DomainError("front_to_back must be >= 0")
        if self.kind == "parametric":
            pass
        elif self.kind == "two_element":
            if not 0 < self.front_to_back < self.null_depth:
                raise DomainError("need 0 < front_to_back < null_depth")
            # power pattern (cos^2 u + eps) / (1 + eps), u = kd (cos(phi) - 1) / 2;
            # eps fills the nulls, kd puts the back lobe front_to_back below boresight
            eps = 10 ** (-self.null_depth / 10)
            back = (1 + eps) * 10 ** (-self.front_to_back / 10) - eps
            object.__setattr__(self, "_eps", eps)
            object.__setattr__(self, "_kd", math.pi - math.acos(math.sqrt(back)))
        elif self.kind == "tabulated":
            angles = np.asarray(self.angles, dtype=float)
            gains = np.asarray(self.gains, dtype=float)
            if angles.ndim != 1 or angles.shape != gains.shape or angles.size < 2:
                raise DomainError("tabulated pattern needs >= 2 matching angle/gain samples")
            if angles[0] != 0.0:
                raise DomainError("first tabulated angle must be 0")
            if np.any(np.diff(angles) <= 0) or angles[-1] >= TWO_PI:
                raise DomainError("tabulated angles must increase strictly within [0, 2*pi)")
            if not np.all(np.isfinite(gains)):
                raise DomainError("tabulated gains must be finite")
            # closed copies for wrap-around interpolation
            object.__setattr__(self, "angles", angles)
            object.__setattr__(self, "gains", gains)
            object.__setattr__(self, "_xp", np.append(angles, TWO_PI))
            object.__setattr__(self, "_fp", np.append(gains, gains[0]))
        else:
            raise DomainError(f"unknown pattern kind {self.kind!r}")

    @classmethod
    def parametric(cls, boresight_gain: float = 6.15, front_to_back: float = 10.0) -> "GainPattern":
        return cls("parametric", float(boresight_gain), float(front_to_back))

    @classmethod
    def tabulated(cls, angles: Sequence[float], gains: Sequence[float]) -> "GainPattern":
        return cls("tabulated", angles=np.asarray(angles, float), gains=np.asarray(gains, float))

    @classmethod
    def omni(cls, gain: float = 0.0) -> "GainPattern":
        return cls.parametric(gain, 0.0)

    @classmethod
    def from_csv(cls, path) -> "GainPattern":
        """Load an ``angle_deg,gain_db`` table (first angle 0, ascending)."""
        angles, gains = [], []
        with open(path, newline="") as fh:
            reader = csv.reader(row for row in fh if not row.startswith("#"))
            header = [h.strip() for h in next(reader)]
            if header != ["angle_deg", "gain_db"]:
                raise DomainError(f"{path}: expected header 'angle_deg,gain_db', got {header}")
            for row in reader:
                if not row:
                    continue
                angles.append(math.radians(float(row[0])))
                gains.append(float(row[1]))
        return cls.tabulated(angles, gains)

    def to_csv(self, path, resolution_deg: float = 1.0) -> None:
        if self.kind == "tabulated":
            angles = self.angles
        else:
            angles = np.deg2rad(np.arange(0.0, 360.0, resolution_deg))
        with open(Path(path), "w", newline="") as fh:
            fh.write("angle_deg,gain_db\n")
            for a, g in zip(np.rad2deg(angles), self.gain(angles)):
                fh.write(f"{a:.10g},{g:.10g}\n")

    def gain(self, phi):
        """Gain in dB at body-frame bearing(s) ``phi``."""
        phi = np.asarray(phi, dtype=float)
        if self.kind == "parametric":
            out = self.boresight_gain - 0.5 * self.front_to_back * (1.0 - np.cos(phi))
        elif self.kind == "two_element":
            u = 0.5 * self._kd * (np.cos(phi) - 1.0)
            out = self.boresight_gain + 10 * np.log10((np.cos(u) ** 2 + self._eps) / (1 + self._eps))
        else:
            out = np.interp(np.mod(phi, TWO_PI), self._xp, self._fp)
        return float(out) if out.ndim == 0 else out

    def slope(self, phi):
        """dG/dphi in dB per radian."""
        phi = np.asarray(phi, dtype=float)
        if self.kind == "parametric":
            out = -0.5 * self.front_to_back * np.sin(phi)
        elif self.kind == "two_element":
            u = 0.5 * self._kd * (np.cos(phi) - 1.0)
            dpower = 0.5 * self._kd * np.sin(phi) * np.sin(2 * u)
            out = (10 / math.log(10)) * dpower / (np.cos(u) ** 2 + self._eps)
        else:
            out = (self.gain(phi + FD_STEP) - self.gain(phi - FD_STEP)) / (2 * FD_STEP)
        return float(out) if np.ndim(out) == 0 else out


def gain_db(pattern: GainPattern, phi):
    return pattern.gain(phi)


def gain_slope_db_per_rad(pattern: GainPattern, phi):
    return pattern.slope(phi)


def two_element_pattern(
    boresight_gain: float = 6.15,
    front_to_back: float = 10.0,
    null_depth: float = 20.0,
) -> GainPattern:
    """Two-element endfire array (H-antenna style), smooth in azimuth.

    Element spacing sets the back lobe ``front_to_back`` dB below
    boresight; the side nulls are filled to roughly ``null_depth`` dB
    below boresight, as coupling and ground reflections do in practice.
    """
    return GainPattern("two_element", float(boresight_gain), float(front_to_back),
                       null_depth=float(null_depth))
