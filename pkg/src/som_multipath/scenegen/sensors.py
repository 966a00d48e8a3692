"""Multi-modal sensor rendering: depth/albedo camera, lidar, radar.

Each link end renders the same suite from its own pose. The camera is a
pinhole model over the box geometry (the road surface is not imaged): depth
in meters with the configured max range as far-plane sentinel, plus a
per-material albedo map in [0, 1]. The lidar is a ring scanner mounted
level (yaw only) that intersects boxes and the ground; hits carry the
surface albedo as a fourth intensity column and misses are dropped. The
radar samples candidate returns on box faces, keeps those with a clear line
of sight inside range, and reports per-point rcs_proxy (projected facet
area toward the sensor) and doppler (radial velocity of the owning box).

All renders are exact geometric computations; the only randomness is the
radar's face sampling, driven by the generator or seed passed in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ..errors import GeometryError
from .config import SensorConfig
from .scene import Pose, Scene

# Surface reflectivity by material id (ground, four building, three vehicle).
MATERIAL_ALBEDO = {0: 0.2, 1: 0.35, 2: 0.45, 3: 0.55, 4: 0.65, 5: 0.75, 6: 0.85, 7: 0.95}


@dataclass(frozen=True, eq=False)
class SensorFrame:
    """One agent's sensor outputs for a snapshot.

    depth, albedo: (H, W) float32. lidar: (M, 4) float32 rows of
    (x, y, z, intensity) in the sensor frame, hits only. radar: (K, 5)
    float32 rows of (x, y, z, rcs_proxy, doppler_mps) in the sensor frame.
    """

    depth: np.ndarray
    albedo: np.ndarray
    lidar: np.ndarray
    radar: np.ndarray


def _albedo_of(material_ids: np.ndarray) -> np.ndarray:
    return np.array([MATERIAL_ALBEDO.get(int(v), 0.0) if v >= 0 else 0.0 for v in material_ids])


def _raycast(
    origins: np.ndarray,
    dirs: np.ndarray,
    scene: Scene,
    exclude_box: Optional[int],
    max_range: float,
    include_ground: bool,
) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-hit distances and material ids for unit-direction rays.

    Returns (distance, material) arrays of length M; misses get
    ``max_range`` and material -1.
    """
    m = dirs.shape[0]
    best_t = np.full(m, np.inf)
    best_mat = np.full(m, -1, dtype=int)

    keep = np.ones(scene.n_boxes, dtype=bool)
    if exclude_box is not None and scene.n_boxes:
        keep[exclude_box] = False
    bmin, bmax = scene.box_min[keep], scene.box_max[keep]
    mats = scene.box_material[keep]
    if bmin.shape[0]:
        with np.errstate(divide="ignore", invalid="ignore"):
            t0 = (bmin[None, :, :] - origins[:, None, :]) / dirs[:, None, :]
            t1 = (bmax[None, :, :] - origins[:, None, :]) / dirs[:, None, :]
        parallel = np.broadcast_to((dirs == 0.0)[:, None, :], t0.shape)
        inside = (origins[:, None, :] >= bmin[None, :, :]) & (origins[:, None, :] <= bmax[None, :, :])
        tlo = np.where(parallel, np.where(inside, -np.inf, np.inf), np.fmin(t0, t1))
        thi = np.where(parallel, np.where(inside, np.inf, -np.inf), np.fmax(t0, t1))
        tmin = tlo.max(axis=2)
        tmax = thi.min(axis=2)
        hit = (tmin < tmax) & (tmax > 0.0) & (tmin > 0.0)
        tmin = np.where(hit, tmin, np.inf)
        idx = tmin.argmin(axis=1)
        rows = np.arange(m)
        box_t = tmin[rows, idx]
        better = box_t < best_t
        best_t = np.where(better, box_t, best_t)
        best_mat = np.where(better, mats[idx], best_mat)

    if include_ground and scene.has_ground:
        with np.errstate(divide="ignore", invalid="ignore"):
            tg = -origins[:, 2] / dirs[:, 2]
        ground_hit = (dirs[:, 2] < 0.0) & (tg > 0.0) & (tg < best_t)
        best_t = np.where(ground_hit, tg, best_t)
        best_mat = np.where(ground_hit, 0, best_mat)

    missed = best_t > max_range
    best_t = np.where(missed, max_range, best_t)
    best_mat = np.where(missed, -1, best_mat)
    return best_t, best_mat


def _camera_axes(yaw: float, pitch: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    forward = np.array([cp * cy, cp * sy, sp])
    right = np.array([sy, -cy, 0.0])
    up = np.cross(right, forward)
    return forward, right, up


def _render_camera(scene: Scene, cfg: SensorConfig, pose: Pose, exclude_box):
    h, w = cfg.image_height, cfg.image_width
    forward, right, up = _camera_axes(pose.yaw, pose.pitch)
    tan_half = math.tan(math.radians(cfg.fov_deg) / 2.0)
    xs = (np.arange(w) + 0.5) / w * 2.0 - 1.0
    ys = 1.0 - (np.arange(h) + 0.5) / h * 2.0
    gx, gy = np.meshgrid(xs, ys)
    dirs = (
        forward[None, None, :]
        + gx[:, :, None] * tan_half * right[None, None, :]
        + gy[:, :, None] * tan_half * (h / w) * up[None, None, :]
    ).reshape(-1, 3)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    origins = np.broadcast_to(np.asarray(pose.position, dtype=float), dirs.shape)
    dist, mat = _raycast(origins, dirs, scene, exclude_box, cfg.max_range_m, include_ground=False)
    return (
        dist.reshape(h, w).astype(np.float32),
        _albedo_of(mat).reshape(h, w).astype(np.float32),
    )


def _render_lidar(scene: Scene, cfg: SensorConfig, pose: Pose, exclude_box) -> np.ndarray:
    elevs = np.radians(np.linspace(cfg.lidar_elev_min_deg, cfg.lidar_elev_max_deg, cfg.lidar_rings))
    azims = pose.yaw + np.arange(cfg.lidar_azimuth_steps) * (2.0 * np.pi / cfg.lidar_azimuth_steps)
    el, az = np.meshgrid(elevs, azims, indexing="ij")
    dirs = np.stack(
        [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=-1
    ).reshape(-1, 3)
    origins = np.broadcast_to(np.asarray(pose.position, dtype=float), dirs.shape)
    dist, mat = _raycast(origins, dirs, scene, exclude_box, cfg.max_range_m, include_ground=True)
    hits = mat >= 0
    points_world = origins[hits] + dist[hits, None] * dirs[hits]
    local = _to_sensor_frame(points_world, pose)
    intensity = _albedo_of(mat[hits])
    return np.concatenate([local, intensity[:, None]], axis=1).astype(np.float32)


def _to_sensor_frame(points_world: np.ndarray, pose: Pose) -> np.ndarray:
    rel = points_world - np.asarray(pose.position, dtype=float)
    cy, sy = math.cos(pose.yaw), math.sin(pose.yaw)
    rot = np.array([[cy, sy, 0.0], [-sy, cy, 0.0], [0.0, 0.0, 1.0]])
    return rel @ rot.T


def _render_radar(
    scene: Scene,
    cfg: SensorConfig,
    pose: Pose,
    exclude_box: Optional[int],
    rng: np.random.Generator,
) -> np.ndarray:
    sensor = np.asarray(pose.position, dtype=float)
    samples, normals, areas, velocities = [], [], [], []
    for i in range(scene.n_boxes):
        if i == exclude_box:
            continue
        bmin, bmax = scene.box_min[i], scene.box_max[i]
        extent = bmax - bmin
        for axis in range(3):
            u, v = [a for a in range(3) if a != axis]
            face_area = extent[u] * extent[v]
            for offset in (bmin[axis], bmax[axis]):
                uv = rng.uniform(size=(cfg.radar_points_per_face, 2))
                pts = np.empty((cfg.radar_points_per_face, 3))
                pts[:, axis] = offset
                pts[:, u] = bmin[u] + uv[:, 0] * extent[u]
                pts[:, v] = bmin[v] + uv[:, 1] * extent[v]
                normal = np.zeros(3)
                normal[axis] = 1.0
                samples.append(pts)
                normals.append(np.broadcast_to(normal, pts.shape))
                areas.append(np.full(cfg.radar_points_per_face, face_area))
                velocities.append(np.broadcast_to(scene.box_velocity[i], pts.shape))
    if not samples:
        return np.zeros((0, 5), dtype=np.float32)
    points = np.concatenate(samples)
    normals = np.concatenate(normals)
    areas = np.concatenate(areas)
    velocities = np.concatenate(velocities)

    rel = points - sensor
    ranges = np.linalg.norm(rel, axis=1)
    ok = (ranges > 0.0) & (ranges <= cfg.radar_max_range_m)
    # Visibility: a sample survives when the nearest surface along its ray is
    # the sample itself (within tolerance).
    dirs = rel[ok] / ranges[ok, None]
    origins = np.broadcast_to(sensor, dirs.shape)
    dist, _ = _raycast(origins, dirs, scene, exclude_box, cfg.radar_max_range_m, include_ground=False)
    visible = np.abs(dist - ranges[ok]) < 1e-6
    points = points[ok][visible]
    normals = normals[ok][visible]
    areas = areas[ok][visible]
    velocities = velocities[ok][visible]
    rel = rel[ok][visible]
    ranges = ranges[ok][visible]
    if points.shape[0] == 0:
        return np.zeros((0, 5), dtype=np.float32)
    unit = rel / ranges[:, None]
    rcs_proxy = areas * np.abs(np.einsum("ij,ij->i", normals, unit))
    doppler = np.einsum("ij,ij->i", velocities, unit)
    local = _to_sensor_frame(points, pose)
    return np.concatenate([local, rcs_proxy[:, None], doppler[:, None]], axis=1).astype(np.float32)


def render_sensors(
    scene: Scene,
    pose: Pose,
    cfg: Optional[SensorConfig] = None,
    rng: Union[np.random.Generator, int, None] = None,
    exclude_box: Optional[int] = None,
) -> SensorFrame:
    """Render one sensor suite from ``pose``.

    ``exclude_box`` drops the sensing platform's own box (ego geometry is
    not sensed). ``rng`` (generator or seed) drives radar face sampling;
    everything else is exact geometry, so outputs are deterministic given
    (scene, pose, cfg, rng state).
    """
    cfg = cfg or SensorConfig()
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(0 if rng is None else rng)
    if scene.contains_point(np.asarray(pose.position, dtype=float)):
        raise GeometryError("sensor pose lies inside scene geometry")
    depth, albedo = _render_camera(scene, cfg, pose, exclude_box)
    lidar = _render_lidar(scene, cfg, pose, exclude_box)
    radar = _render_radar(scene, cfg, pose, exclude_box, rng)
    return SensorFrame(depth=depth, albedo=albedo, lidar=lidar, radar=radar)
