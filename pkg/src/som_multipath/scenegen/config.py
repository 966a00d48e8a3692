"""Configuration objects for scene and dataset generation.

``ScenarioConfig`` describes one case of the urban/suburban x traffic-density
x band taxonomy; everything downstream (scene layout, ray tracing, sensor
rendering) is a deterministic function of a config plus a seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Any, Optional

from ..errors import ConfigurationError

SCENARIO_KINDS = ("urban", "suburban")
VTD_LEVELS = ("low", "high")

# Vehicles per 100 m of road for each traffic-density level.
VTD_VEHICLES_PER_100M = {"low": 4, "high": 16}

DEFAULT_SNAPSHOT_INTERVAL_S = 0.03333


@dataclass(frozen=True)
class BandConfig:
    """Carrier/bandwidth pair, e.g. 5.9 GHz / 20 MHz or 60 GHz / 2 GHz."""

    carrier_frequency_hz: float
    bandwidth_hz: float

    def __post_init__(self) -> None:
        if self.carrier_frequency_hz <= 0:
            raise ConfigurationError("carrier_frequency_hz must be > 0")
        if self.bandwidth_hz <= 0:
            raise ConfigurationError("bandwidth_hz must be > 0")


SUB6_BAND = BandConfig(carrier_frequency_hz=5.9e9, bandwidth_hz=20e6)
MMWAVE_BAND = BandConfig(carrier_frequency_hz=60e9, bandwidth_hz=2e9)


@dataclass(frozen=True)
class BuildingRows:
    """Building-row layout along the road: row count per side plus size ranges."""

    rows_per_side: int
    width_range_m: tuple[float, float]
    depth_range_m: tuple[float, float]
    height_range_m: tuple[float, float]
    gap_range_m: tuple[float, float]
    setback_m: float = 10.0  # distance from road centerline to the first row
    row_spacing_m: float = 6.0

    def __post_init__(self) -> None:
        if self.rows_per_side < 0:
            raise ConfigurationError("rows_per_side must be >= 0")
        for name in ("width_range_m", "depth_range_m", "height_range_m", "gap_range_m"):
            lo, hi = getattr(self, name)
            if lo <= 0 or hi < lo:
                raise ConfigurationError(f"{name} must be positive with max >= min")
        if self.setback_m <= 0:
            raise ConfigurationError("setback_m must be > 0")


def default_building_rows(scenario_kind: str) -> BuildingRows:
    if scenario_kind == "urban":
        return BuildingRows(
            rows_per_side=2,
            width_range_m=(10.0, 20.0),
            depth_range_m=(8.0, 14.0),
            height_range_m=(10.0, 30.0),
            gap_range_m=(2.0, 6.0),
        )
    return BuildingRows(
        rows_per_side=1,
        width_range_m=(8.0, 14.0),
        depth_range_m=(7.0, 12.0),
        height_range_m=(4.0, 8.0),
        gap_range_m=(10.0, 25.0),
    )


@dataclass(frozen=True)
class TracerConfig:
    """Image-method oracle knobs.

    ``reflection_coeff`` is an amplitude coefficient; received power picks up
    a factor ``reflection_coeff ** (2 * bounces)``.
    """

    reflection_coeff: float = 0.6
    max_order: int = 2
    tx_power_w: float = 1.0
    n_max: int = 6

    def __post_init__(self) -> None:
        if not 0 < self.reflection_coeff <= 1:
            raise ConfigurationError("reflection_coeff must be in (0, 1]")
        if self.max_order not in (0, 1, 2):
            raise ConfigurationError("max_order must be 0, 1, or 2")
        if self.tx_power_w <= 0:
            raise ConfigurationError("tx_power_w must be > 0")
        if self.n_max < 1:
            raise ConfigurationError("n_max must be >= 1")


@dataclass(frozen=True)
class SensorConfig:
    """Desk-scale sensor stand-in parameters.

    Defaults are a 64x36 depth/albedo camera with 90 deg horizontal FOV, a
    16-ring spinning lidar, and a surround radar that samples points on
    visible box faces. Paper-scale image resolutions work through the same
    fields.
    """

    image_width: int = 64
    image_height: int = 36
    fov_deg: float = 90.0
    max_range_m: float = 150.0
    lidar_rings: int = 16
    lidar_azimuth_steps: int = 64
    lidar_elev_min_deg: float = -15.0
    lidar_elev_max_deg: float = 15.0
    radar_points_per_face: int = 2
    radar_max_range_m: float = 150.0

    def __post_init__(self) -> None:
        if self.image_width < 1 or self.image_height < 1:
            raise ConfigurationError("image dimensions must be >= 1")
        if not 0 < self.fov_deg < 180:
            raise ConfigurationError("fov_deg must be in (0, 180)")
        if self.max_range_m <= 0 or self.radar_max_range_m <= 0:
            raise ConfigurationError("sensor ranges must be > 0")
        if self.lidar_rings < 1 or self.lidar_azimuth_steps < 1:
            raise ConfigurationError("lidar grid must be >= 1 in both axes")
        if self.lidar_elev_max_deg <= self.lidar_elev_min_deg:
            raise ConfigurationError("lidar elevation range must be non-empty")
        if self.radar_points_per_face < 1:
            raise ConfigurationError("radar_points_per_face must be >= 1")


@dataclass(frozen=True)
class ScenarioConfig:
    """One generation case: scenario kind, traffic density, band, layout, seed."""

    scenario_kind: str
    vtd: str
    band: BandConfig
    road_length_m: float = 150.0
    building_rows: Optional[BuildingRows] = None
    vehicle_count: Optional[int] = None  # None derives from vtd and road length
    vehicle_speed_mps: float = 10.0
    snapshot_interval_s: float = DEFAULT_SNAPSHOT_INTERVAL_S
    snapshots: int = 100
    seed: int = 0
    sensor: SensorConfig = field(default_factory=SensorConfig)
    tracer: TracerConfig = field(default_factory=TracerConfig)

    def __post_init__(self) -> None:
        if self.scenario_kind not in SCENARIO_KINDS:
            raise ConfigurationError(f"scenario_kind must be one of {SCENARIO_KINDS}")
        if self.vtd not in VTD_LEVELS:
            raise ConfigurationError(f"vtd must be one of {VTD_LEVELS}")
        if self.road_length_m <= 0:
            raise ConfigurationError("road_length_m must be > 0")
        if self.snapshot_interval_s <= 0:
            raise ConfigurationError("snapshot_interval_s must be > 0")
        if self.snapshots < 1:
            raise ConfigurationError("snapshots must be >= 1")
        if self.vehicle_speed_mps < 0:
            raise ConfigurationError("vehicle_speed_mps must be >= 0")
        if self.resolved_vehicle_count() < 1:
            raise ConfigurationError("vehicle_count must be >= 1 (the Tx vehicle)")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must fit in 64 unsigned bits")

    def resolved_vehicle_count(self) -> int:
        if self.vehicle_count is not None:
            return self.vehicle_count
        rate = VTD_VEHICLES_PER_100M[self.vtd]
        return max(1, round(rate * self.road_length_m / 100.0))

    def resolved_building_rows(self) -> BuildingRows:
        return self.building_rows or default_building_rows(self.scenario_kind)

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["building_rows"] = asdict(self.resolved_building_rows())
        out["vehicle_count"] = self.resolved_vehicle_count()
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ScenarioConfig":
        data = dict(data)
        try:
            band = BandConfig(**data.pop("band"))
            rows = data.pop("building_rows", None)
            sensor = data.pop("sensor", None)
            tracer = data.pop("tracer", None)
            return cls(
                band=band,
                building_rows=BuildingRows(**_tuplify(rows)) if rows else None,
                sensor=SensorConfig(**sensor) if sensor else SensorConfig(),
                tracer=TracerConfig(**tracer) if tracer else TracerConfig(),
                **data,
            )
        except TypeError as exc:
            raise ConfigurationError(f"bad scenario config: {exc}") from exc


def _tuplify(rows: dict[str, Any]) -> dict[str, Any]:
    out = dict(rows)
    for key, value in out.items():
        if isinstance(value, list):
            out[key] = tuple(value)
    return out
