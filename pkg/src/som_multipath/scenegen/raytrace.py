"""Image-method multipath tracing over axis-aligned scene geometry.

Specular paths up to two reflections are found by mirroring the receiver
across candidate facet planes (box faces plus the ground plane), intersecting
the straight line to the mirrored image with each plane, and keeping
candidates whose reflection points fall inside their facets and whose
segments are unobstructed. Free-space power follows the Friis kernel with a
fixed amplitude reflection coefficient per bounce:

    P = P_tx * (lambda / (4 pi d))^2 * gamma^(2 k)

for total path length d and k reflections. ``trace_paths`` returns every
resolved path (useful for geometric validation); ``trace_multipath`` reduces
them to the fixed-size strongest-N summary used as regression ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import SPEED_OF_LIGHT
from ..errors import DomainError
from .config import BandConfig
from .scene import Scene

_SHRINK_M = 1e-6  # endpoint pull-back so occlusion tests skip the facet itself
_FACET_TOL = 1e-9
_GROUND_EXTENT_M = 1e9

DEFAULT_REFLECTION_COEFF = 0.6
DEFAULT_N_MAX = 6


@dataclass(frozen=True, eq=False)
class TracedPath:
    """One resolved specular path from Tx to Rx.

    ``points`` has shape (bounces + 2, 3): Tx, reflection points in order,
    Rx. ``facet_planes`` lists (axis, offset) per reflection so geometric
    invariants (point on plane, mirror symmetry) can be checked directly.
    """

    points: np.ndarray
    facet_planes: tuple[tuple[int, float], ...]
    length_m: float
    delay_s: float
    power_w: float

    @property
    def bounces(self) -> int:
        return len(self.facet_planes)

    @property
    def is_los(self) -> bool:
        return self.bounces == 0


@dataclass(frozen=True, eq=False)
class MultipathSet:
    """Fixed-size strongest-N path summary for one snapshot.

    Arrays all have length ``n_max``. Valid entries come first, sorted by
    descending power; ``power_ratio`` is normalized over the kept paths (sums
    to 1 when any path is valid) and ``total_power_w`` restores absolute
    scale. Invalid (padding) entries have zero ratio and delay.
    """

    power_ratio: np.ndarray
    delay_s: np.ndarray
    valid: np.ndarray
    los_present: bool
    total_power_w: float

    def __post_init__(self) -> None:
        n = self.power_ratio.shape[0]
        if self.delay_s.shape != (n,) or self.valid.shape != (n,):
            raise DomainError("multipath arrays must share one length")
        if np.any(self.power_ratio < 0) or np.any(self.delay_s < 0):
            raise DomainError("power ratios and delays must be non-negative")
        if self.valid.any():
            if abs(float(self.power_ratio[self.valid].sum()) - 1.0) > 1e-9:
                raise DomainError("valid power ratios must sum to 1")
            if np.any(self.delay_s[self.valid] <= 0):
                raise DomainError("valid delays must be positive")
        if np.any(self.power_ratio[~self.valid] != 0) or np.any(self.delay_s[~self.valid] != 0):
            raise DomainError("padded entries must have zero power ratio and delay")
        kept = self.power_ratio[self.valid]
        if kept.size and np.any(np.diff(kept) > 1e-12):
            raise DomainError("valid paths must be sorted by descending power")

    @property
    def n_max(self) -> int:
        return self.power_ratio.shape[0]

    @property
    def n_paths(self) -> int:
        return int(self.valid.sum())

    @property
    def powers_w(self) -> np.ndarray:
        """Absolute per-path powers (zeros on padding entries)."""
        return self.power_ratio * self.total_power_w

    @staticmethod
    def from_paths(paths: list[TracedPath], n_max: int) -> "MultipathSet":
        if n_max < 1:
            raise DomainError("n_max must be positive")
        order = sorted(range(len(paths)), key=lambda i: -paths[i].power_w)
        kept = [paths[i] for i in order[:n_max]]
        ratio = np.zeros(n_max)
        delay = np.zeros(n_max)
        valid = np.zeros(n_max, dtype=bool)
        total = float(sum(p.power_w for p in kept))
        for slot, path in enumerate(kept):
            ratio[slot] = path.power_w / total if total > 0 else 0.0
            delay[slot] = path.delay_s
            valid[slot] = True
        return MultipathSet(
            power_ratio=ratio,
            delay_s=delay,
            valid=valid,
            los_present=any(p.is_los for p in paths),
            total_power_w=total,
        )


def _collect_facets(scene: Scene):
    """Flatten scene geometry into plane-aligned facet arrays.

    Returns (axis, offset, u_axis, v_axis, lo_u, hi_u, lo_v, hi_v) arrays.
    Box bottom faces flush with the ground are dropped (unreachable); the
    ground itself becomes one large facet when present.
    """
    axes, offs, uax, vax, lou, hiu, lov, hiv = [], [], [], [], [], [], [], []
    for i in range(scene.n_boxes):
        bmin, bmax = scene.box_min[i], scene.box_max[i]
        for axis in range(3):
            u, v = [a for a in range(3) if a != axis]
            for offset, is_min in ((bmin[axis], True), (bmax[axis], False)):
                if axis == 2 and is_min and scene.has_ground and abs(offset) < _FACET_TOL:
                    continue
                axes.append(axis)
                offs.append(offset)
                uax.append(u)
                vax.append(v)
                lou.append(bmin[u])
                hiu.append(bmax[u])
                lov.append(bmin[v])
                hiv.append(bmax[v])
    if scene.has_ground:
        axes.append(2)
        offs.append(0.0)
        uax.append(0)
        vax.append(1)
        lou.append(-_GROUND_EXTENT_M)
        hiu.append(_GROUND_EXTENT_M)
        lov.append(-_GROUND_EXTENT_M)
        hiv.append(_GROUND_EXTENT_M)
    return (
        np.array(axes, dtype=int),
        np.array(offs, dtype=float),
        np.array(uax, dtype=int),
        np.array(vax, dtype=int),
        np.array(lou, dtype=float),
        np.array(hiu, dtype=float),
        np.array(lov, dtype=float),
        np.array(hiv, dtype=float),
    )


def _segments_occluded(starts: np.ndarray, ends: np.ndarray, scene: Scene) -> np.ndarray:
    """Open-interval slab test of (M, 3) segments against every scene box."""
    m = starts.shape[0]
    if m == 0 or scene.n_boxes == 0:
        return np.zeros(m, dtype=bool)
    d = ends - starts
    s3 = starts[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t0 = (scene.box_min[None, :, :] - s3) / d[:, None, :]
        t1 = (scene.box_max[None, :, :] - s3) / d[:, None, :]
    parallel = np.broadcast_to((d == 0.0)[:, None, :], t0.shape)
    inside = (s3 >= scene.box_min[None, :, :]) & (s3 <= scene.box_max[None, :, :])
    tlo = np.where(parallel, np.where(inside, -np.inf, np.inf), np.fmin(t0, t1))
    thi = np.where(parallel, np.where(inside, np.inf, -np.inf), np.fmax(t0, t1))
    tmin = tlo.max(axis=2)
    tmax = thi.min(axis=2)
    hit = (tmin < tmax) & (tmax > 0.0) & (tmin < 1.0)
    return hit.any(axis=1)


def _shrink(points_a: np.ndarray, points_b: np.ndarray) -> np.ndarray:
    """Move each a-point ``_SHRINK_M`` along a->b (a assumed on a facet)."""
    d = points_b - points_a
    norm = np.linalg.norm(d, axis=-1, keepdims=True)
    return points_a + _SHRINK_M * d / np.maximum(norm, _SHRINK_M)


def trace_paths(
    scene: Scene,
    carrier_frequency_hz: float = 5.9e9,
    tx_power_w: float = 1.0,
    reflection_coeff: float = DEFAULT_REFLECTION_COEFF,
    max_order: int = 2,
) -> list[TracedPath]:
    """Enumerate specular paths from the scene Tx to Rx.

    Returns LoS first (when clear), then single-bounce, then double-bounce
    paths, each fully validated: reflection points inside their facets,
    endpoints on the same side of every reflecting plane, and every segment
    unobstructed. Order within a bounce class follows facet enumeration
    order, so results are deterministic for a given scene.
    """
    if carrier_frequency_hz <= 0:
        raise DomainError("carrier frequency must be positive")
    if not 0 < reflection_coeff <= 1:
        raise DomainError("reflection_coeff must be in (0, 1]")
    wavelength = SPEED_OF_LIGHT / carrier_frequency_hz
    tx = np.asarray(scene.tx_pose.position, dtype=float)
    rx = np.asarray(scene.rx_pose.position, dtype=float)
    paths: list[TracedPath] = []

    def emit(points: np.ndarray, planes: tuple[tuple[int, float], ...]) -> None:
        length = float(np.linalg.norm(np.diff(points, axis=0), axis=1).sum())
        spread = (wavelength / (4.0 * np.pi * length)) ** 2
        paths.append(
            TracedPath(
                points=points,
                facet_planes=planes,
                length_m=length,
                delay_s=length / SPEED_OF_LIGHT,
                power_w=tx_power_w * spread * reflection_coeff ** (2 * len(planes)),
            )
        )

    if not _segments_occluded(tx[None, :], rx[None, :], scene)[0]:
        emit(np.stack([tx, rx]), ())

    axes, offs, uax, vax, lou, hiu, lov, hiv = _collect_facets(scene)
    n_facets = axes.shape[0]
    if n_facets == 0 or max_order < 1:
        return paths

    def in_facet(p: np.ndarray, idx: np.ndarray) -> np.ndarray:
        rows = np.arange(p.shape[0])
        pu = p[rows, uax[idx]]
        pv = p[rows, vax[idx]]
        return (
            (pu >= lou[idx] - _FACET_TOL)
            & (pu <= hiu[idx] + _FACET_TOL)
            & (pv >= lov[idx] - _FACET_TOL)
            & (pv <= hiv[idx] + _FACET_TOL)
        )

    def mirror(points: np.ndarray, idx: np.ndarray) -> np.ndarray:
        out = points.copy()
        rows = np.arange(points.shape[0])
        out[rows, axes[idx]] = 2.0 * offs[idx] - points[rows, axes[idx]]
        return out

    # --- single bounce ------------------------------------------------
    idx1 = np.arange(n_facets)
    tx_a = tx[axes]
    rx_a = rx[axes]
    same_side = (tx_a - offs) * (rx_a - offs) > 0.0
    rx_img = mirror(np.broadcast_to(rx, (n_facets, 3)).copy(), idx1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (offs - tx_a) / (rx_img[idx1, axes] - tx_a)
    ok = same_side & np.isfinite(t) & (t > 0.0) & (t < 1.0)
    p1 = tx + t[:, None] * (rx_img - tx)
    ok &= in_facet(p1, idx1)
    cand = np.flatnonzero(ok)
    if cand.size:
        pts = p1[cand]
        seg_starts = np.concatenate([np.broadcast_to(tx, (cand.size, 3)), _shrink(pts, rx)])
        seg_ends = np.concatenate([_shrink(pts, np.broadcast_to(tx, (cand.size, 3))), np.broadcast_to(rx, (cand.size, 3))])
        blocked = _segments_occluded(seg_starts, seg_ends, scene)
        blocked = blocked[: cand.size] | blocked[cand.size :]
        for k, f in enumerate(cand):
            if not blocked[k]:
                emit(np.stack([tx, pts[k], rx]), ((int(axes[f]), float(offs[f])),))

    if max_order < 2:
        return paths

    # --- double bounce ------------------------------------------------
    fi, fj = np.meshgrid(idx1, idx1, indexing="ij")
    fi, fj = fi.ravel(), fj.ravel()
    distinct_plane = (axes[fi] != axes[fj]) | (np.abs(offs[fi] - offs[fj]) > _FACET_TOL)
    pick = np.flatnonzero(distinct_plane)
    fi, fj = fi[pick], fj[pick]

    img2 = mirror(np.broadcast_to(rx, (fj.size, 3)).copy(), fj)  # Rx mirrored over plane j
    img1 = mirror(img2, fi)  # then over plane i
    a_i, o_i = axes[fi], offs[fi]
    a_j, o_j = axes[fj], offs[fj]
    rows = np.arange(fi.size)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (o_i - tx[a_i]) / (img1[rows, a_i] - tx[a_i])
    ok = np.isfinite(t1) & (t1 > 0.0) & (t1 < 1.0)
    q1 = tx + t1[:, None] * (img1 - tx)
    ok &= in_facet(q1, fi)
    with np.errstate(divide="ignore", invalid="ignore"):
        t2 = (o_j - q1[rows, a_j]) / (img2[rows, a_j] - q1[rows, a_j])
    ok &= np.isfinite(t2) & (t2 > 0.0) & (t2 < 1.0)
    q2 = q1 + np.where(ok, t2, 0.0)[:, None] * (img2 - q1)
    ok &= in_facet(q2, fj)
    ok &= (tx[a_i] - o_i) * (q2[rows, a_i] - o_i) > 0.0
    ok &= (q1[rows, a_j] - o_j) * (rx[a_j] - o_j) > 0.0
    cand = np.flatnonzero(ok)
    if cand.size:
        c1, c2 = q1[cand], q2[cand]
        txs = np.broadcast_to(tx, (cand.size, 3))
        rxs = np.broadcast_to(rx, (cand.size, 3))
        seg_starts = np.concatenate([txs, _shrink(c1, c2), _shrink(c2, rxs)])
        seg_ends = np.concatenate([_shrink(c1, txs), _shrink(c2, c1), rxs])
        blocked = _segments_occluded(seg_starts, seg_ends, scene)
        n = cand.size
        blocked = blocked[:n] | blocked[n : 2 * n] | blocked[2 * n :]
        seen: set[tuple] = set()
        for k, pair in enumerate(cand):
            if blocked[k]:
                continue
            sig = tuple(np.round(np.concatenate([c1[k], c2[k]]), 6))
            if sig in seen:
                continue
            seen.add(sig)
            emit(
                np.stack([tx, c1[k], c2[k], rx]),
                (
                    (int(axes[fi[pair]]), float(offs[fi[pair]])),
                    (int(axes[fj[pair]]), float(offs[fj[pair]])),
                ),
            )
    return paths


def trace_multipath(
    scene: Scene,
    band: Optional[BandConfig] = None,
    n_max: int = DEFAULT_N_MAX,
    tx_power_w: float = 1.0,
    reflection_coeff: float = DEFAULT_REFLECTION_COEFF,
    max_order: int = 2,
) -> MultipathSet:
    """Trace and reduce to the strongest-``n_max`` summary for one snapshot.

    A fully blocked link with no reflections yields an all-padding set with
    ``n_paths == 0`` and ``los_present`` false rather than an error.
    """
    band = band or BandConfig(carrier_frequency_hz=5.9e9, bandwidth_hz=20e6)
    paths = trace_paths(
        scene,
        carrier_frequency_hz=band.carrier_frequency_hz,
        tx_power_w=tx_power_w,
        reflection_coeff=reflection_coeff,
        max_order=max_order,
    )
    return MultipathSet.from_paths(paths, n_max)
