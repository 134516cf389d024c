"""Scenario configuration: dataclasses, JSON (de)serialisation and presets.

JSON documents mirror the dataclass field names in snake_case. Every
section is optional; omitted keys keep their defaults. Angles are given in
degrees in JSON (``*_deg`` keys) and stored in radians.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Any, Optional

from .errors import ConfigError, DomainError
from .geometry import GainPattern, Rect, UavState, two_element_pattern
from .planner import PlannerConfig
from .propagation import EnvironmentModel, RadioModel, TerrainGrid

METHODS = ("gyro", "dual_antenna", "rotate_bearing", "rssi_ideal")


@dataclass(frozen=True)
class TerrainSpec:
    """How to obtain the terrain: ``synthetic`` (seeded hills) or ``esri`` (file)."""

    kind: str = "synthetic"
    seed: int = 7
    cell_size: float = 20.0
    amplitude: float = 40.0
    margin: float = 300.0
    path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("synthetic", "esri"):
            raise ConfigError("terrain.kind", f"expected 'synthetic' or 'esri', got {self.kind!r}")
        if self.kind == "esri" and not self.path:
            raise ConfigError("terrain.path", "required for esri terrain")
        if not self.cell_size > 0:
            raise ConfigError("terrain.cell_size", "must be > 0")


@lru_cache(maxsize=8)
def _build_terrain(spec: TerrainSpec, bounds: Rect) -> TerrainGrid:
    if spec.kind == "esri":
        return TerrainGrid.from_esri_ascii(spec.path)
    return TerrainGrid.synthetic(bounds, spec.seed, spec.cell_size, spec.amplitude, margin=spec.margin)


@dataclass(frozen=True)
class PatternSpec:
    kind: str = "two_element"  # two_element | parametric | csv
    boresight_gain: float = 6.15
    front_to_back: float = 10.0
    null_depth: float = 20.0
    path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("two_element", "parametric", "csv"):
            raise ConfigError("pattern.kind", f"unknown pattern kind {self.kind!r}")
        if self.kind == "csv" and not self.path:
            raise ConfigError("pattern.path", "required for csv patterns")


@lru_cache(maxsize=8)
def build_pattern(spec: PatternSpec) -> GainPattern:
    if spec.kind == "parametric":
        return GainPattern.parametric(spec.boresight_gain, spec.front_to_back)
    if spec.kind == "csv":
        return GainPattern.from_csv(spec.path)
    return two_element_pattern(spec.boresight_gain, spec.front_to_back, spec.null_depth)


@dataclass(frozen=True)
class SourceSpec:
    id: int
    position: tuple[float, float]


@dataclass(frozen=True)
class RotateBearingConfig:
    rotation_time: float = 10.0
    bearing_std_deg: float = 9.0
    travel_leg: float = 8.0
    min_detections: int = 1


@dataclass(frozen=True)
class TransectConfig:
    """Fixed straight path used by the rotation-speed convergence experiment."""

    source: tuple[float, float] = (500.0, 500.0)
    start: tuple[float, float] = (100.0, 400.0)
    end: tuple[float, float] = (900.0, 400.0)
    speed: float = 3.0
    duration: float = 300.0
    zetas_deg: tuple[float, ...] = (0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0)


@dataclass(frozen=True)
class ScenarioConfig:
    bounds: Rect = Rect(0.0, 0.0, 1000.0, 1000.0)
    terrain: Optional[TerrainSpec] = TerrainSpec()
    sources: tuple[SourceSpec, ...] = ()
    n_random_sources: int = 5
    source_margin: float = 50.0
    source_sigma_q: float = 2.0
    filter_sigma_q: Optional[float] = None
    source_height: float = 1.0
    truth_radio: RadioModel = RadioModel(20.0, 3.0, noise_std=2.0)
    model_radio: RadioModel = RadioModel(10.0, 2.0, noise_std=2.0)
    # above the generation noise: differencing leaves the path-loss change between pulses unmodelled
    filter_sigma: Optional[float] = 3.0
    pattern: PatternSpec = PatternSpec()
    extra_loss: float = 0.0
    carrier_freq: float = 0.15
    detection_prob: float = 1.0
    method: str = "gyro"
    planner: PlannerConfig = PlannerConfig()
    window_m: int = 2
    max_gap_factor: float = 1.5
    localized_threshold: float = 2e4
    mission_timeout: float = 1500.0
    uav_start: tuple[float, float] = (500.0, 0.0)
    altitude: float = 80.0
    n_particles: int = 3000
    rotate_bearing: RotateBearingConfig = RotateBearingConfig()
    dual_antenna_offset: float = 0.0
    transect: TransectConfig = TransectConfig()

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError("method", f"expected one of {', '.join(METHODS)}; got {self.method!r}")
        if self.window_m < 2:
            raise ConfigError("window_m", "must be >= 2")
        for name in ("localized_threshold", "mission_timeout", "max_gap_factor"):
            if not getattr(self, name) > 0:
                raise ConfigError(name, "must be > 0")
        if self.source_sigma_q < 0:
            raise ConfigError("source_sigma_q", "must be >= 0")
        if self.filter_sigma_q is not None and self.filter_sigma_q < 0:
            raise ConfigError("filter_sigma_q", "must be >= 0")
        if self.filter_sigma is not None and not self.filter_sigma > 0:
            raise ConfigError("filter_sigma", "must be > 0")
        if self.n_particles < 100:
            raise ConfigError("n_particles", "must be >= 100")
        if self.n_random_sources < 0:
            raise ConfigError("n_random_sources", "must be >= 0")
        for s in self.sources:
            if not self.bounds.contains(s.position):
                raise ConfigError("sources", f"source {s.id} at {s.position} lies outside bounds")
        if len({s.id for s in self.sources}) != len(self.sources):
            raise ConfigError("sources", "source ids must be unique")
        if not self.bounds.contains(self.uav_start):
            raise ConfigError("uav_start", "must lie inside bounds")
        try:
            EnvironmentModel(None, self.extra_loss, self.carrier_freq, self.detection_prob)
        except DomainError as exc:
            raise ConfigError("environment", str(exc)) from None

    # derived objects -------------------------------------------------
    def terrain_grid(self) -> Optional[TerrainGrid]:
        return None if self.terrain is None else _build_terrain(self.terrain, self.bounds)

    def environment(self) -> EnvironmentModel:
        return EnvironmentModel(self.terrain_grid(), self.extra_loss, self.carrier_freq, self.detection_prob)

    def gain_pattern(self) -> GainPattern:
        return build_pattern(self.pattern)

    @property
    def effective_filter_sigma(self) -> float:
        return self.truth_radio.noise_std if self.filter_sigma is None else self.filter_sigma

    @property
    def effective_filter_sigma_q(self) -> float:
        # a floor keeps particle diversity when the truth is static
        if self.filter_sigma_q is not None:
            return self.filter_sigma_q
        return max(self.source_sigma_q, 1.0)

    @property
    def uav_initial_state(self) -> UavState:
        return UavState((self.uav_start[0], self.uav_start[1], self.altitude), 0.0)

    @property
    def source_count(self) -> int:
        return len(self.sources) if self.sources else self.n_random_sources

    def with_overrides(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)

    # serialisation ---------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        return _to_jsonable(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScenarioConfig":
        return _from_dict(cls, data, "")

    @classmethod
    def from_json(cls, text: str, source: str = "<config>") -> "ScenarioConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}", exc.msg) from None
        if not isinstance(data, dict):
            raise ConfigError(source, "top level must be a JSON object")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(str(path), exc.strerror or str(exc)) from None
        return cls.from_json(text, str(path))


# radians in memory, degrees in JSON
_DEGREE_FIELDS = {("PlannerConfig", "gyration_rate"): "gyration_rate_deg"}


def _to_jsonable(obj):
    if isinstance(obj, Rect):
        return obj.as_list()
    if dataclasses.is_dataclass(obj):
        out = {}
        for f in dataclasses.fields(obj):
            value = getattr(obj, f.name)
            key = _DEGREE_FIELDS.get((type(obj).__name__, f.name))
            if key:
                out[key] = math.degrees(value)
            else:
                out[f.name] = _to_jsonable(value)
        return out
    if isinstance(obj, (tuple, list)):
        return [_to_jsonable(v) for v in obj]
    return obj


_NESTED = {
    "terrain": TerrainSpec,
    "truth_radio": RadioModel,
    "model_radio": RadioModel,
    "pattern": PatternSpec,
    "planner": PlannerConfig,
    "rotate_bearing": RotateBearingConfig,
    "transect": TransectConfig,
}


def _from_dict(cls, data: dict[str, Any], prefix: str):
    if not isinstance(data, dict):
        raise ConfigError(prefix.rstrip(".") or "<root>", "expected a JSON object")
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        path = prefix + key
        deg_target = next((f for (c, f), k in _DEGREE_FIELDS.items() if c == cls.__name__ and k == key), None)
        if deg_target:
            kwargs[deg_target] = math.radians(_number(value, path))
            continue
        if key not in names:
            raise ConfigError(path, "unknown field")
        if cls is ScenarioConfig and key in _NESTED:
            if value is None and key == "terrain":
                kwargs[key] = None
            else:
                kwargs[key] = _from_dict(_NESTED[key], value, path + ".")
        elif cls is ScenarioConfig and key == "bounds":
            if not (isinstance(value, list) and len(value) == 4):
                raise ConfigError(path, "expected [xmin, ymin, xmax, ymax]")
            try:
                kwargs[key] = Rect(*(_number(v, path) for v in value))
            except DomainError as exc:
                raise ConfigError(path, str(exc)) from None
        elif cls is ScenarioConfig and key == "sources":
            if not isinstance(value, list):
                raise ConfigError(path, "expected a list of {id, position}")
            kwargs[key] = tuple(_source(v, f"{path}[{i}]") for i, v in enumerate(value))
        elif key in ("uav_start",) or (cls is TransectConfig and key in ("source", "start", "end")):
            kwargs[key] = _pair(value, path)
        elif cls is TransectConfig and key == "zetas_deg":
            if not isinstance(value, list):
                raise ConfigError(path, "expected a list of numbers")
            kwargs[key] = tuple(_number(v, path) for v in value)
        else:
            kwargs[key] = _coerce(cls, key, value, path)
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (DomainError, TypeError, ValueError) as exc:
        raise ConfigError(prefix.rstrip(".") or "<root>", str(exc)) from None


def _coerce(cls, key, value, path):
    f = next(f for f in dataclasses.fields(cls) if f.name == key)
    ann = str(f.type)
    if ann in ("str", "Optional[str]"):
        if value is None and ann.startswith("Optional"):
            return None
        if not isinstance(value, str):
            raise ConfigError(path, "expected a string")
        return value
    if ann in ("int",):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, "expected an integer")
        return value
    if ann in ("float", "Optional[float]"):
        if value is None and ann.startswith("Optional"):
            return None
        return _number(value, path)
    return value


def _number(value, path) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    return float(value)


def _pair(value, path) -> tuple[float, float]:
    if not (isinstance(value, list) and len(value) == 2):
        raise ConfigError(path, "expected [x, y]")
    return (_number(value[0], path), _number(value[1], path))


def _source(value, path) -> SourceSpec:
    if not isinstance(value, dict) or set(value) != {"id", "position"}:
        raise ConfigError(path, "expected {\"id\": int, \"position\": [x, y]}")
    if isinstance(value["id"], bool) or not isinstance(value["id"], int):
        raise ConfigError(path + ".id", "expected an integer")
    return SourceSpec(value["id"], _pair(value["position"], path + ".position"))


# presets ---------------------------------------------------------------

def simulation_preset(**overrides) -> ScenarioConfig:
    """Five mobile sources in a 1 km x 1 km hilly area, UAV at 10 m/s."""
    return replace(ScenarioConfig(), **overrides)


def field_preset(**overrides) -> ScenarioConfig:
    """Four static tags over ~41 ha, v = 5.5 m/s, 40 deg/s, filter sigma 5 dB."""
    side = 640.0
    base = ScenarioConfig(
        bounds=Rect(0.0, 0.0, side, side),
        sources=(
            SourceSpec(0, (120.0, 500.0)),
            SourceSpec(1, (520.0, 540.0)),
            SourceSpec(2, (480.0, 130.0)),
            SourceSpec(3, (160.0, 180.0)),
        ),
        source_sigma_q=0.0,
        filter_sigma=5.0,
        detection_prob=0.93,
        planner=PlannerConfig(uav_speed=5.5, gyration_rate=math.radians(40.0)),
        uav_start=(side / 2, 20.0),
        mission_timeout=900.0,
    )
    return replace(base, **overrides)


PRESETS = {"simulation": simulation_preset, "field": field_preset}
