"""Parametric street scenes: axis-aligned boxes on a ground plane.

A scene is a flat array-of-boxes representation (min corner, max corner,
velocity, material id) plus the Tx/Rx poses. ``build_scene`` lays out
building rows along a straight road and vehicles in four lanes;
``advance_scene`` moves the dynamic boxes by ``velocity * dt`` with a
periodic wrap on the road axis so long snapshot sequences stay inside the
built-up corridor.

Conventions: the road runs along +x with centerline y = 0, the ground plane
is z = 0, and all sizes are meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterator, Optional

import numpy as np

from ..errors import ConfigurationError, GeometryError
from .config import ScenarioConfig

# Material id ranges: 0 ground, 1..4 buildings, 5..7 vehicles.
MATERIAL_GROUND = 0
_BUILDING_MATERIALS = (1, 2, 3, 4)
_VEHICLE_MATERIALS = (5, 6, 7)

TX_ANTENNA_HEIGHT_M = 1.5
RX_ANTENNA_HEIGHT_M = 6.0
RX_LATERAL_OFFSET_M = 8.0

_LANE_YS = (1.75, 5.25, -1.75, -5.25)
_LANE_SPEED_FACTORS = (1.0, 0.8, -0.95, -0.7)
_SLOT_LENGTH_M = 12.0
_TRUCK_FRACTION = 0.35
_CAR_SIZE = ((4.2, 4.8), (1.7, 1.9), (1.38, 1.48))  # (length, width, height) ranges
_TRUCK_SIZE = ((6.5, 9.0), (2.1, 2.4), (3.4, 4.6))
_TX_VEHICLE_HEIGHT_M = 1.45  # antenna sits just above the roof


@dataclass(frozen=True)
class Pose:
    """Sensor/antenna pose: position plus yaw (about +z) and pitch."""

    position: tuple[float, float, float]
    yaw: float = 0.0
    pitch: float = 0.0

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in self.position):
            raise GeometryError("pose position must be finite")
        if self.position[2] <= 0:
            raise GeometryError("pose must be above the ground plane")

    def forward(self) -> np.ndarray:
        cp = math.cos(self.pitch)
        return np.array(
            [cp * math.cos(self.yaw), cp * math.sin(self.yaw), math.sin(self.pitch)]
        )


@dataclass(frozen=True)
class Box:
    """One axis-aligned box (read-only view over the scene arrays)."""

    min_corner: tuple[float, float, float]
    max_corner: tuple[float, float, float]
    velocity: tuple[float, float, float]
    material_id: int


@dataclass(frozen=True)
class Scene:
    """Immutable scene snapshot.

    ``box_min``/``box_max``/``box_velocity`` are (N, 3) float arrays and
    ``box_material`` is (N,) int. ``tx_box_index`` names the vehicle box the
    Tx antenna rides on (None for hand-built scenes). ``wrap_x_m`` enables
    the periodic road wrap during advancement.
    """

    box_min: np.ndarray
    box_max: np.ndarray
    box_velocity: np.ndarray
    box_material: np.ndarray
    tx_pose: Pose
    rx_pose: Pose
    has_ground: bool = True
    tx_box_index: Optional[int] = None
    wrap_x_m: Optional[float] = None

    def __post_init__(self) -> None:
        for name in ("box_min", "box_max", "box_velocity"):
            arr = getattr(self, name)
            if arr.shape != (self.n_boxes, 3):
                raise GeometryError(f"{name} must have shape (n_boxes, 3)")
        if np.any(self.box_max <= self.box_min):
            raise GeometryError("degenerate box: max must exceed min componentwise")
        for label, pose in (("tx", self.tx_pose), ("rx", self.rx_pose)):
            if self.contains_point(np.asarray(pose.position)):
                raise GeometryError(f"{label} pose lies inside scene geometry")

    @property
    def n_boxes(self) -> int:
        return self.box_min.shape[0]

    @property
    def boxes(self) -> Iterator[Box]:
        for i in range(self.n_boxes):
            yield Box(
                tuple(self.box_min[i]),
                tuple(self.box_max[i]),
                tuple(self.box_velocity[i]),
                int(self.box_material[i]),
            )

    def contains_point(self, point: np.ndarray) -> bool:
        """Strict interior test against all boxes."""
        if self.n_boxes == 0:
            return False
        inside = np.all((point > self.box_min) & (point < self.box_max), axis=1)
        return bool(inside.any())

    @staticmethod
    def from_boxes(
        boxes: list[Box],
        tx_pose: Pose,
        rx_pose: Pose,
        has_ground: bool = True,
        tx_box_index: Optional[int] = None,
        wrap_x_m: Optional[float] = None,
    ) -> "Scene":
        n = len(boxes)
        return Scene(
            box_min=np.array([b.min_corner for b in boxes], dtype=float).reshape(n, 3),
            box_max=np.array([b.max_corner for b in boxes], dtype=float).reshape(n, 3),
            box_velocity=np.array([b.velocity for b in boxes], dtype=float).reshape(n, 3),
            box_material=np.array([b.material_id for b in boxes], dtype=int).reshape(n),
            tx_pose=tx_pose,
            rx_pose=rx_pose,
            has_ground=has_ground,
            tx_box_index=tx_box_index,
            wrap_x_m=wrap_x_m,
        )


def _aim(position: np.ndarray, target: np.ndarray) -> tuple[float, float]:
    d = target - position
    yaw = math.atan2(d[1], d[0])
    pitch = math.atan2(d[2], math.hypot(d[0], d[1]))
    return yaw, pitch


def _building_row(
    rng: np.random.Generator,
    rows_cfg,
    road_length: float,
    side: float,
    row: int,
    mins: list,
    maxs: list,
    materials: list,
) -> None:
    y_inner = rows_cfg.setback_m + row * (rows_cfg.row_spacing_m + rows_cfg.depth_range_m[1])
    x = float(rng.uniform(0.0, rows_cfg.gap_range_m[1]))
    count = 0
    while x < road_length:
        width = float(rng.uniform(*rows_cfg.width_range_m))
        depth = float(rng.uniform(*rows_cfg.depth_range_m))
        height = float(rng.uniform(*rows_cfg.height_range_m))
        y0, y1 = (y_inner, y_inner + depth) if side > 0 else (-y_inner - depth, -y_inner)
        mins.append((x, y0, 0.0))
        maxs.append((x + width, y1, height))
        materials.append(_BUILDING_MATERIALS[count % len(_BUILDING_MATERIALS)])
        x += width + float(rng.uniform(*rows_cfg.gap_range_m))
        count += 1


def build_scene(config: ScenarioConfig, seed: Optional[int] = None) -> Scene:
    """Lay out one deterministic scene for ``config``.

    Buildings line both roadsides (dense double rows for urban, sparse low
    rows for suburban); vehicles occupy four lanes with per-lane speeds so
    same-lane spacing never collapses. Box index 0 is the Tx (lead) vehicle;
    the Rx base station stands at the road midpoint, ``RX_LATERAL_OFFSET_M``
    off the centerline at 6 m height.
    """
    rng = np.random.default_rng(config.seed if seed is None else seed)
    rows_cfg = config.resolved_building_rows()
    road_length = config.road_length_m

    veh_mins: list[tuple] = []
    veh_maxs: list[tuple] = []
    veh_vels: list[tuple] = []
    veh_materials: list[int] = []

    # Tx vehicle first so its box index is 0.
    tx_x = 0.25 * road_length
    tx_lane = 0
    length, width, height = 4.6, 1.8, _TX_VEHICLE_HEIGHT_M
    speed = config.vehicle_speed_mps * _LANE_SPEED_FACTORS[tx_lane]
    lane_y = _LANE_YS[tx_lane]
    veh_mins.append((tx_x - length / 2, lane_y - width / 2, 0.0))
    veh_maxs.append((tx_x + length / 2, lane_y + width / 2, height))
    veh_vels.append((speed, 0.0, 0.0))
    veh_materials.append(_VEHICLE_MATERIALS[0])

    # Remaining vehicles go into jittered slots so same-lane boxes never touch.
    n_slots = int(road_length // _SLOT_LENGTH_M)
    slots = [
        (lane, (k + 0.5) * _SLOT_LENGTH_M)
        for lane in range(len(_LANE_YS))
        for k in range(n_slots)
        if not (lane == tx_lane and abs((k + 0.5) * _SLOT_LENGTH_M - tx_x) < _SLOT_LENGTH_M)
    ]
    n_vehicles = config.resolved_vehicle_count()
    if n_vehicles - 1 > len(slots):
        raise ConfigurationError(
            f"vehicle_count {n_vehicles} exceeds lane capacity {len(slots) + 1}"
        )
    order = rng.permutation(len(slots))
    for i in range(n_vehicles - 1):
        lane, slot_x = slots[int(order[i])]
        is_truck = bool(rng.uniform() < _TRUCK_FRACTION)
        size = _TRUCK_SIZE if is_truck else _CAR_SIZE
        length = float(rng.uniform(*size[0]))
        width = float(rng.uniform(*size[1]))
        height = float(rng.uniform(*size[2]))
        x = slot_x + float(rng.uniform(-1.0, 1.0))
        lane_y = _LANE_YS[lane]
        veh_mins.append((x - length / 2, lane_y - width / 2, 0.0))
        veh_maxs.append((x + length / 2, lane_y + width / 2, height))
        veh_vels.append((config.vehicle_speed_mps * _LANE_SPEED_FACTORS[lane], 0.0, 0.0))
        veh_materials.append(_VEHICLE_MATERIALS[(i + 1) % len(_VEHICLE_MATERIALS)])

    bld_mins: list[tuple] = []
    bld_maxs: list[tuple] = []
    bld_materials: list[int] = []
    for side in (1.0, -1.0):
        for row in range(rows_cfg.rows_per_side):
            _building_row(rng, rows_cfg, road_length, side, row, bld_mins, bld_maxs, bld_materials)

    mins = np.array(veh_mins + bld_mins, dtype=float)
    maxs = np.array(veh_maxs + bld_maxs, dtype=float)
    vels = np.array(veh_vels + [(0.0, 0.0, 0.0)] * len(bld_mins), dtype=float)
    materials = np.array(veh_materials + bld_materials, dtype=int)

    tx_pose = Pose(position=(tx_x, _LANE_YS[tx_lane], TX_ANTENNA_HEIGHT_M), yaw=0.0, pitch=0.0)
    rx_position = np.array([road_length / 2, RX_LATERAL_OFFSET_M, RX_ANTENNA_HEIGHT_M])
    rx_yaw, rx_pitch = _aim(rx_position, np.array([road_length / 2, 0.0, 1.0]))
    rx_pose = Pose(position=tuple(rx_position), yaw=rx_yaw, pitch=rx_pitch)

    return Scene(
        box_min=mins,
        box_max=maxs,
        box_velocity=vels,
        box_material=materials,
        tx_pose=tx_pose,
        rx_pose=rx_pose,
        has_ground=True,
        tx_box_index=0,
        wrap_x_m=road_length,
    )


def advance_scene(scene: Scene, dt: float) -> Scene:
    """Move every dynamic box by ``velocity * dt``; Tx rides its vehicle.

    With ``wrap_x_m`` set, moving boxes wrap periodically on x so their
    centers stay in [0, wrap). Static boxes are untouched. Advancement is
    always computed from the given scene, so ``advance_scene(base, t * dt)``
    is exact for any t (no accumulation).
    """
    if dt == 0.0:
        return scene
    shift = scene.box_velocity * dt
    new_min = scene.box_min + shift
    new_max = scene.box_max + shift
    wrap_offsets = np.zeros(scene.n_boxes)
    if scene.wrap_x_m is not None:
        moving = scene.box_velocity[:, 0] != 0.0
        centers = 0.5 * (new_min[:, 0] + new_max[:, 0])
        wrap_offsets[moving] = -np.floor(centers[moving] / scene.wrap_x_m) * scene.wrap_x_m
        new_min[:, 0] += wrap_offsets
        new_max[:, 0] += wrap_offsets

    tx_pose = scene.tx_pose
    if scene.tx_box_index is not None:
        i = scene.tx_box_index
        dx = shift[i] + np.array([wrap_offsets[i], 0.0, 0.0])
        pos = np.asarray(tx_pose.position) + dx
        tx_pose = replace(tx_pose, position=tuple(pos))

    return replace(scene, box_min=new_min, box_max=new_max, tx_pose=tx_pose)
