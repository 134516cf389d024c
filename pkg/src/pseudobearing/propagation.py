"""Ground-truth RSSI generation.

Log-distance path loss plus receive antenna gain, single knife-edge
terrain diffraction (ITU style, ``Pd = -20 h/F1 + 10`` dB), a constant
extra attenuation, Gaussian receiver noise and Bernoulli missed pulses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DomainError, GeometryError, OutOfBoundsError
from .geometry import GainPattern, Rect, SourceState, UavState, bearings_to


@dataclass(frozen=True)
class RadioModel:
    ref_power: float  # dBm at ref_distance
    path_loss_exp: float
    ref_distance: float = 1.0
    noise_std: float = 2.0  # dB
    pulse_period: float = 1.0  # s

    def __post_init__(self):
        if not self.ref_distance > 0:
            raise DomainError("ref_distance must be > 0")
        if not self.path_loss_exp > 0:
            raise DomainError("path_loss_exp must be > 0")
        if not self.noise_std >= 0:
            raise DomainError("noise_std must be >= 0")
        if not self.pulse_period > 0:
            raise DomainError("pulse_period must be > 0")


class TerrainGrid:
    """Elevation samples on a regular grid with bilinear interpolation.

    ``heights[i, j]`` is the elevation at
    ``(origin[0] + j * cell_size, origin[1] + i * cell_size)``; row 0 is the
    southern edge.
    """

    def __init__(self, origin, cell_size: float, heights):
        heights = np.asarray(heights, dtype=float)
        if heights.ndim != 2 or min(heights.shape) < 2:
            raise DomainError("terrain heights must be a 2-D grid of at least 2x2")
        if not cell_size > 0:
            raise DomainError("cell_size must be > 0")
        if not np.all(np.isfinite(heights)):
            raise DomainError("terrain heights must be finite")
        self.origin = (float(origin[0]), float(origin[1]))
        self.cell_size = float(cell_size)
        self.heights = heights
        self.rows, self.cols = heights.shape

    @property
    def extent(self) -> Rect:
        x0, y0 = self.origin
        return Rect(x0, y0, x0 + (self.cols - 1) * self.cell_size, y0 + (self.rows - 1) * self.cell_size)

    def contains(self, x, y) -> np.ndarray:
        e = self.extent
        x = np.asarray(x)
        y = np.asarray(y)
        return (x >= e.xmin) & (x <= e.xmax) & (y >= e.ymin) & (y <= e.ymax)

    def height_at(self, x, y):
        """Bilinear elevation; raises :class:`OutOfBoundsError` outside the hull."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if not np.all(self.contains(x, y)):
            raise OutOfBoundsError("query point outside terrain grid")
        out = self._bilinear(x, y)
        return float(out) if out.ndim == 0 else out

    def _bilinear(self, x, y):
        gx = (x - self.origin[0]) / self.cell_size
        gy = (y - self.origin[1]) / self.cell_size
        j = np.clip(np.floor(gx).astype(int), 0, self.cols - 2)
        i = np.clip(np.floor(gy).astype(int), 0, self.rows - 2)
        fx = gx - j
        fy = gy - i
        h = self.heights
        return ((h[i, j] * (1 - fx) + h[i, j + 1] * fx) * (1 - fy)
                + (h[i + 1, j] * (1 - fx) + h[i + 1, j + 1] * fx) * fy)

    @classmethod
    def from_esri_ascii(cls, path) -> "TerrainGrid":
        """Read an ESRI ASCII raster (``ncols``/``nrows``/``xllcorner``/... header)."""
        header: dict[str, float] = {}
        with open(path) as fh:
            lines = fh.read().split("\n")
        n = 0
        while n < len(lines):
            parts = lines[n].split()
            if len(parts) == 2 and parts[0][0].isalpha():
                header[parts[0].lower()] = float(parts[1])
                n += 1
            else:
                break
        for key in ("ncols", "nrows", "cellsize"):
            if key not in header:
                raise DomainError(f"{path}: missing header field {key!r}")
        cell = header["cellsize"]
        if "xllcenter" in header:
            x0, y0 = header["xllcenter"], header["yllcenter"]
        elif "xllcorner" in header:
            x0, y0 = header["xllcorner"] + cell / 2, header["yllcorner"] + cell / 2
        else:
            raise DomainError(f"{path}: missing xllcorner/yllcorner")
        values = np.array(" ".join(lines[n:]).split(), dtype=float)
        ncols, nrows = int(header["ncols"]), int(header["nrows"])
        if values.size != ncols * nrows:
            raise DomainError(f"{path}: expected {ncols * nrows} values, found {values.size}")
        grid = values.reshape(nrows, ncols)[::-1]  # file is north-first
        nodata = header.get("nodata_value")
        if nodata is not None and np.any(grid == nodata):
            fill = np.nanmin(np.where(grid == nodata, np.nan, grid))
            grid = np.where(grid == nodata, fill, grid)
        return cls((x0, y0), cell, grid)

    def to_esri_ascii(self, path) -> None:
        with open(Path(path), "w") as fh:
            fh.write(f"ncols {self.cols}\nnrows {self.rows}\n")
            fh.write(f"xllcorner {self.origin[0] - self.cell_size / 2:.10g}\n")
            fh.write(f"yllcorner {self.origin[1] - self.cell_size / 2:.10g}\n")
            fh.write(f"cellsize {self.cell_size:.10g}\nNODATA_value -9999\n")
            for row in self.heights[::-1]:
                fh.write(" ".join(f"{v:.6g}" for v in row) + "\n")

    @classmethod
    def synthetic(
        cls,
        bounds: Rect,
        seed: int,
        cell_size: float = 20.0,
        amplitude: float = 40.0,
        n_waves: int = 6,
        margin: float = 300.0,
    ) -> "TerrainGrid":
        """Rolling hills: a seeded sum of 2-D sinusoids, shifted to be >= 0."""
        rng = np.random.default_rng(seed)
        x0, y0 = bounds.xmin - margin, bounds.ymin - margin
        cols = int(math.ceil((bounds.width + 2 * margin) / cell_size)) + 1
        rows = int(math.ceil((bounds.height + 2 * margin) / cell_size)) + 1
        xs = x0 + cell_size * np.arange(cols)
        ys = y0 + cell_size * np.arange(rows)
        X, Y = np.meshgrid(xs, ys)
        Z = np.zeros_like(X)
        for _ in range(n_waves):
            wavelength = rng.uniform(300.0, 1500.0)
            direction = rng.uniform(0, 2 * math.pi)
            phase = rng.uniform(0, 2 * math.pi)
            k = 2 * math.pi / wavelength
            Z += rng.uniform(0.3, 1.0) * np.sin(k * (X * math.cos(direction) + Y * math.sin(direction)) + phase)
        Z -= Z.min()
        if Z.max() > 0:
            Z *= amplitude / Z.max()
        return cls((x0, y0), cell_size, Z)


@dataclass(frozen=True)
class EnvironmentModel:
    terrain: Optional[TerrainGrid] = None
    extra_loss: float = 0.0  # dB, constant unknown attenuation
    carrier_freq: float = 0.15  # GHz
    detection_prob: float = 1.0

    def __post_init__(self):
        if not self.carrier_freq > 0:
            raise DomainError("carrier_freq must be > 0")
        if not 0.0 <= self.detection_prob <= 1.0:
            raise DomainError("detection_prob must be in [0, 1]")

    def ground_height(self, x, y):
        if self.terrain is None:
            return np.zeros(np.shape(x)) if np.ndim(x) else 0.0
        return self.terrain.height_at(x, y)


def path_loss_db(model: RadioModel, distance):
    return 10.0 * model.path_loss_exp * np.log10(np.asarray(distance, float) / model.ref_distance)


def mean_rssi(model: RadioModel, pattern: GainPattern, source: SourceState, uav: UavState) -> float:
    """Noise-free, terrain-free expected RSSI (dBm)."""
    d = math.dist(source.position, uav.position)
    if d == 0.0:
        raise GeometryError("source and receiver coincide")
    if source.position[0] == uav.position[0] and source.position[1] == uav.position[1]:
        raise GeometryError("bearing undefined: source directly below/above receiver")
    phi = bearings_to(np.array(source.position[:2]), uav)
    return float(model.ref_power - path_loss_db(model, d) + pattern.gain(phi))


def mean_rssi_many(model: RadioModel, pattern: GainPattern, points, uav: UavState) -> np.ndarray:
    """Vectorised :func:`mean_rssi` over an ``(N, 3)`` array of source positions."""
    pts = np.asarray(points, dtype=float)
    d = np.linalg.norm(pts - np.asarray(uav.position), axis=1)
    d = np.maximum(d, model.ref_distance * 1e-6)
    return model.ref_power - path_loss_db(model, d) + pattern.gain(bearings_to(pts[:, :2], uav))


def fresnel_radius(d1, d2, freq, total):
    """First Fresnel zone radius in metres; distances in km, ``freq`` in GHz."""
    for name, v in (("d1", d1), ("d2", d2), ("freq", freq), ("total", total)):
        if not np.all(np.asarray(v) > 0):
            raise DomainError(f"{name} must be > 0")
    if not np.all(np.abs(np.asarray(d1) + d2 - total) <= 0.01 * np.asarray(total)):
        raise DomainError("d1 + d2 must equal total within 1%")
    out = 17.3 * np.sqrt(np.asarray(d1) * d2 / (freq * np.asarray(total)))
    return float(out) if np.ndim(out) == 0 else out


def _axis_crossings(a0, a1, origin: float, cell: float):
    """Ray parameters where each segment ``a0 -> a1`` crosses grid lines ``origin + k*cell``."""
    lo = np.minimum(a0, a1)
    hi = np.maximum(a0, a1)
    kmin = np.ceil((lo - origin) / cell)
    kmax = np.floor((hi - origin) / cell)
    counts = np.maximum(kmax - kmin + 1, 0).astype(int)
    counts[a1 == a0] = 0
    kmax_count = int(counts.max()) if counts.size else 0
    if kmax_count == 0:
        return np.empty((a0.size, 0))
    k = kmin[:, None] + np.arange(kmax_count)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (origin + k * cell - a0[:, None]) / (a1 - a0)[:, None]
    t[np.arange(kmax_count)[None, :] >= counts[:, None]] = np.nan
    return t


def terrain_loss_many(env: EnvironmentModel, tx, rx) -> np.ndarray:
    """Knife-edge loss (dB, >= 0) from each row of ``tx`` (N, 3) to the point ``rx``.

    The path profile is sampled wherever the line of sight crosses a grid
    line; the sample with the smallest clearance-to-Fresnel-radius ratio is
    taken as the dominant obstruction. Endpoints are excluded because the
    Fresnel radius vanishes there.
    """
    tx = np.atleast_2d(np.asarray(tx, dtype=float))
    rx = np.asarray(rx, dtype=float)
    n = tx.shape[0]
    terrain = env.terrain
    if terrain is None:
        return np.zeros(n)
    if not (np.all(terrain.contains(tx[:, 0], tx[:, 1])) and terrain.contains(rx[0], rx[1])):
        raise OutOfBoundsError("link endpoint outside terrain grid")
    length = np.linalg.norm(tx - rx, axis=1)
    if np.any(length == 0):
        raise GeometryError("transmitter and receiver coincide")
    rxx = np.full(n, rx[0])
    rxy = np.full(n, rx[1])
    t = np.concatenate([
        _axis_crossings(tx[:, 0], rxx, terrain.origin[0], terrain.cell_size),
        _axis_crossings(tx[:, 1], rxy, terrain.origin[1], terrain.cell_size),
    ], axis=1)
    if t.shape[1] == 0:
        return np.zeros(n)
    valid = (t > 1e-9) & (t < 1 - 1e-9)
    t = np.where(valid, t, 0.5)
    px = tx[:, 0:1] + t * (rx[0] - tx[:, 0:1])
    py = tx[:, 1:2] + t * (rx[1] - tx[:, 1:2])
    los = tx[:, 2:3] + t * (rx[2] - tx[:, 2:3])
    clearance = los - terrain._bilinear(px, py)
    L = (length / 1000.0)[:, None]
    f1 = 17.3 * np.sqrt((t * L) * ((1 - t) * L) / (env.carrier_freq * L))
    ratio = np.where(valid, clearance / f1, np.inf)
    worst = ratio.min(axis=1)
    loss = np.where(np.isfinite(worst), -20.0 * worst + 10.0, 0.0)
    return np.maximum(loss, 0.0)


def terrain_loss(env: EnvironmentModel, tx, rx) -> float:
    """Single-link knife-edge terrain loss in dB; 0 without terrain."""
    tx = np.asarray(tx, dtype=float)
    rx = np.asarray(rx, dtype=float)
    if np.array_equal(tx, rx):
        raise GeometryError("transmitter and receiver coincide")
    return float(terrain_loss_many(env, tx[None, :], rx)[0])


def received_power(model: RadioModel, pattern: GainPattern, env: EnvironmentModel,
                   source: SourceState, uav: UavState) -> float:
    """Expected received power including terrain and extra attenuation (no noise)."""
    loss = terrain_loss(env, source.position, uav.position) if env.terrain is not None else 0.0
    return mean_rssi(model, pattern, source, uav) - loss - env.extra_loss


def synthesize_rssi(model: RadioModel, pattern: GainPattern, env: EnvironmentModel,
                    source: SourceState, uav: UavState, rng: np.random.Generator) -> Optional[float]:
    """One received pulse, or ``None`` on a missed detection.

    Draws the detection Bernoulli first, then the noise, so two generators
    with the same seed return identical sequences.
    """
    detected = rng.random() < env.detection_prob
    noise = rng.normal(0.0, model.noise_std) if model.noise_std > 0 else 0.0
    if not detected:
        return None
    return received_power(model, pattern, env, source, uav) + noise
