"""Per-source bootstrap particle filter over the horizontal source position."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import DomainError
from .geometry import GainPattern, Rect
from .measurement import DifferentialMeasurement, log_likelihood_many

# log-likelihoods are clipped here; an update where every particle sits on
# the floor carries no usable information and is skipped
LOG_LIKELIHOOD_FLOOR = -700.0
MIN_PARTICLES = 100
BELIEF_FIELDS = ("particle_x", "particle_y", "weight")


@dataclass(frozen=True, eq=False)
class ParticleBelief:
    particles: np.ndarray  # (N, 2) metres
    weights: np.ndarray  # (N,)
    source_id: int = 0
    localized: bool = False
    localized_estimate: Optional[np.ndarray] = None
    skipped_updates: int = 0

    def __post_init__(self):
        if self.particles.ndim != 2 or self.particles.shape[1] != 2:
            raise DomainError("particles must have shape (N, 2)")
        if self.weights.shape != (self.particles.shape[0],):
            raise DomainError("one weight per particle required")
        if self.localized != (self.localized_estimate is not None):
            raise DomainError("localized_estimate must be set iff localized")

    @property
    def n_particles(self) -> int:
        return self.particles.shape[0]


@dataclass(frozen=True)
class TransitionModel:
    """Random walk: each axis gets N(0, sigma_q^2) per ``dt`` seconds."""

    sigma_q: float = 2.0
    dt: float = 1.0

    def __post_init__(self):
        if not self.sigma_q >= 0:
            raise DomainError("sigma_q must be >= 0")
        if not self.dt > 0:
            raise DomainError("dt must be > 0")


def initialize(bounds: Rect, n_particles: int, rng: np.random.Generator, source_id: int = 0,
               min_particles: int = MIN_PARTICLES) -> ParticleBelief:
    """Uniform prior over ``bounds`` with equal weights."""
    if n_particles < min_particles:
        raise DomainError(f"n_particles must be >= {min_particles}")
    lo = np.array([bounds.xmin, bounds.ymin])
    hi = np.array([bounds.xmax, bounds.ymax])
    particles = rng.uniform(lo, hi, size=(n_particles, 2))
    return ParticleBelief(particles, np.full(n_particles, 1.0 / n_particles), source_id)


def predict(belief: ParticleBelief, model: TransitionModel, rng: np.random.Generator) -> ParticleBelief:
    if model.sigma_q == 0:
        return belief
    noise = rng.normal(0.0, model.sigma_q, size=belief.particles.shape)
    return replace(belief, particles=belief.particles + noise)


def effective_sample_size(weights) -> float:
    w = np.asarray(weights)
    return 1.0 / float(np.sum(w * w))


def systematic_resample(weights, rng: np.random.Generator) -> np.ndarray:
    """Indices drawn by systematic resampling (one uniform offset)."""
    w = np.asarray(weights, dtype=float)
    n = w.size
    positions = (rng.random() + np.arange(n)) / n
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    return np.minimum(np.searchsorted(cdf, positions, side="right"), n - 1)


def reweight(belief: ParticleBelief, log_likelihoods, rng: np.random.Generator) -> ParticleBelief:
    """Bayes update from per-particle log-likelihoods, with ESS-triggered resampling.

    Works in the log domain with max subtraction. If every likelihood is at
    or below :data:`LOG_LIKELIHOOD_FLOOR` the belief is returned unchanged
    apart from ``skipped_updates``.
    """
    ll = np.maximum(np.asarray(log_likelihoods, dtype=float), LOG_LIKELIHOOD_FLOOR)
    ll = np.where(np.isnan(ll), LOG_LIKELIHOOD_FLOOR, ll)
    if np.all(ll <= LOG_LIKELIHOOD_FLOOR):
        return replace(belief, skipped_updates=belief.skipped_updates + 1)
    with np.errstate(divide="ignore"):
        logw = np.log(belief.weights) + ll
    logw -= logw.max()
    w = np.exp(logw)
    w /= w.sum()
    particles = belief.particles
    if effective_sample_size(w) < belief.n_particles / 2:
        idx = systematic_resample(w, rng)
        particles = particles[idx]
        w = np.full(belief.n_particles, 1.0 / belief.n_particles)
    return replace(belief, particles=particles, weights=w)


def update(belief: ParticleBelief, meas: DifferentialMeasurement, pattern: GainPattern, sigma: float,
           rng: np.random.Generator) -> ParticleBelief:
    """Weight particles by the differential-measurement likelihood."""
    if belief.localized:
        return belief
    return reweight(belief, log_likelihood_many(meas, belief.particles, pattern, sigma), rng)


def estimate_mean(belief: ParticleBelief) -> np.ndarray:
    return belief.weights @ belief.particles


def covariance(belief: ParticleBelief) -> np.ndarray:
    """Weighted 2x2 covariance of particle positions."""
    centred = belief.particles - estimate_mean(belief)
    return (centred * belief.weights[:, None]).T @ centred


def covariance_det(belief: ParticleBelief) -> float:
    c = covariance(belief)
    return float(c[0, 0] * c[1, 1] - c[0, 1] * c[1, 0])


def is_localized(belief: ParticleBelief, threshold: float) -> bool:
    """True once latched, or when det(cov) falls below ``threshold`` (m^4)."""
    return belief.localized or covariance_det(belief) < threshold


def latch_localization(belief: ParticleBelief, threshold: float) -> ParticleBelief:
    """Freeze the estimate the first time :func:`is_localized` holds."""
    if belief.localized or not is_localized(belief, threshold):
        return belief
    return replace(belief, localized=True, localized_estimate=estimate_mean(belief))


def write_belief_csv(belief: ParticleBelief, path, header: Optional[str] = None) -> None:
    """Snapshot as ``particle_x,particle_y,weight``; ``header`` is written first as a comment."""
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header.rstrip("\n") + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BELIEF_FIELDS)
        for (x, y), wt in zip(belief.particles.tolist(), belief.weights.tolist()):
            w.writerow((repr(x), repr(y), repr(wt)))


def read_belief_csv(path, source_id: int = 0) -> ParticleBelief:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#")) if r]
    if not rows or rows[0] != list(BELIEF_FIELDS):
        raise DomainError(f"{path}: expected header {','.join(BELIEF_FIELDS)}")
    arr = np.array(rows[1:], dtype=float).reshape(-1, 3)
    return ParticleBelief(arr[:, :2].copy(), arr[:, 2].copy(), source_id)
