"""Differential (pseudo-bearing) measurements built from rolling RSSI windows.

Differencing successive RSSI samples cancels every term that is constant
over the window: transmit power, path-loss offsets and unknown
attenuation. What remains depends only on antenna gain at the sampled
bearings, and the differenced noise has a tridiagonal covariance.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ContractError, DomainError, InsufficientDataError, StaleWindowError
from .geometry import GainPattern, SourceState, UavState, bearings_to, relative_bearing


@dataclass(frozen=True)
class MeasurementWindow:
    """Timestamped RSSI samples with the UAV pose at each sample."""

    times: tuple[float, ...]
    rssi: tuple[float, ...]
    uav_states: tuple[UavState, ...]
    max_gap: float = 1.5

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        object.__setattr__(self, "rssi", tuple(float(z) for z in self.rssi))
        object.__setattr__(self, "uav_states", tuple(self.uav_states))
        if not (len(self.times) == len(self.rssi) == len(self.uav_states)):
            raise ContractError("times, rssi and uav_states must have equal length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ContractError("window times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    def shifted(self, offset: float) -> "MeasurementWindow":
        """Same window with ``offset`` dB added to every sample."""
        return MeasurementWindow(self.times, tuple(z + offset for z in self.rssi),
                                 self.uav_states, self.max_gap)


@dataclass(frozen=True)
class DifferentialMeasurement:
    deltas: np.ndarray
    uav_states: tuple[UavState, ...]

    def __post_init__(self):
        deltas = np.asarray(self.deltas, dtype=float).reshape(-1)
        object.__setattr__(self, "deltas", deltas)
        if deltas.size != len(self.uav_states) - 1:
            raise ContractError("deltas must have one fewer entry than uav_states")

    @property
    def m(self) -> int:
        return len(self.uav_states)


def difference_window(window: MeasurementWindow) -> DifferentialMeasurement:
    if len(window) < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {len(window)}")
    gaps = np.diff(window.times)
    if np.any(gaps > window.max_gap):
        raise StaleWindowError(f"gap {gaps.max():.3g}s exceeds {window.max_gap:.3g}s")
    rssi = np.asarray(window.rssi)
    return DifferentialMeasurement(rssi[1:] - rssi[:-1], window.uav_states)


class RollingWindow:
    """Keeps the most recent ``m`` contiguous samples for one source.

    A gap longer than ``max_gap`` (e.g. after missed pulses) restarts the
    window, so a differential measurement never spans it.
    """

    def __init__(self, m: int, max_gap: float):
        if m < 2:
            raise DomainError("window length m must be >= 2")
        self.m = m
        self.max_gap = max_gap
        self._buf: deque = deque(maxlen=m)

    def push(self, t: float, rssi: float, uav: UavState) -> Optional[MeasurementWindow]:
        """Add a sample; return the full window if one is available."""
        if self._buf and t - self._buf[-1][0] > self.max_gap:
            self._buf.clear()
        self._buf.append((t, rssi, uav))
        if len(self._buf) < self.m:
            return None
        times, values, uavs = zip(*self._buf)
        return MeasurementWindow(times, values, uavs, self.max_gap)

    def clear(self) -> None:
        self._buf.clear()


def predicted_deltas(source: SourceState, uav_states: Sequence[UavState], pattern: GainPattern) -> np.ndarray:
    """Noise-free differential measurement for a source fixed over the window."""
    gains = np.array([pattern.gain(relative_bearing(source, u)) for u in uav_states])
    return np.diff(gains)


def predicted_deltas_many(points_xy, uav_states: Sequence[UavState], pattern: GainPattern) -> np.ndarray:
    """:func:`predicted_deltas` for ``(N, 2)`` candidate positions -> ``(N, m-1)``."""
    pts = np.asarray(points_xy, dtype=float)
    gains = np.stack([pattern.gain(bearings_to(pts, u)) for u in uav_states], axis=-1)
    return np.diff(gains, axis=-1)


def noise_covariance(m: int, sigma: float) -> np.ndarray:
    """Covariance of ``m - 1`` successive differences of i.i.d. N(0, sigma^2) noise."""
    if m < 2:
        raise DomainError("m must be >= 2")
    if not sigma > 0:
        raise DomainError("sigma must be > 0")
    n = m - 1
    s2 = float(sigma) ** 2
    cov = 2.0 * s2 * np.eye(n)
    idx = np.arange(n - 1)
    cov[idx, idx + 1] = -s2
    cov[idx + 1, idx] = -s2
    return cov


@lru_cache(maxsize=64)
def _factor(m: int, sigma: float):
    cov = noise_covariance(m, sigma)
    c = cho_factor(cov, lower=True)
    logdet = 2.0 * float(np.sum(np.log(np.diag(c[0]))))
    norm = -0.5 * ((m - 1) * math.log(2 * math.pi) + logdet)
    return c, norm


def gaussian_logpdf(residuals, m: int, sigma: float) -> np.ndarray:
    """Log N(r; 0, noise_covariance(m, sigma)) for residuals of shape ``(..., m-1)``."""
    r = np.asarray(residuals, dtype=float)
    if r.shape[-1] != m - 1:
        raise ContractError(f"residual length {r.shape[-1]} does not match m-1={m - 1}")
    c, norm = _factor(int(m), float(sigma))
    flat = r.reshape(-1, m - 1)
    sol = cho_solve(c, flat.T).T
    quad = np.einsum("ij,ij->i", flat, sol)
    out = norm - 0.5 * quad
    return out.reshape(r.shape[:-1])


def log_likelihood(meas: DifferentialMeasurement, source: SourceState, pattern: GainPattern,
                   sigma: float) -> float:
    pred = predicted_deltas(source, meas.uav_states, pattern)
    return float(gaussian_logpdf(meas.deltas - pred, meas.m, sigma))


def log_likelihood_many(meas: DifferentialMeasurement, points_xy, pattern: GainPattern,
                        sigma: float) -> np.ndarray:
    pred = predicted_deltas_many(points_xy, meas.uav_states, pattern)
    return gaussian_logpdf(meas.deltas[None, :] - pred, meas.m, sigma)
