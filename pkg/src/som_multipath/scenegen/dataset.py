"""Dataset generation and on-disk layout.

A dataset directory holds one ``manifest.json`` plus one directory per
snapshot::

    out/
      manifest.json
      snapshots/000000/
        tx_depth.arr  tx_albedo.arr  tx_lidar.arr  tx_radar.arr
        rx_depth.arr  rx_albedo.arr  rx_lidar.arr  rx_radar.arr
        paths.csv     prompt.json

Snapshots advance a single built scene by ``snapshot_interval_s`` steps
(each step computed from the base scene, never cumulatively), so generation
is deterministic: the same config and seed produce byte-identical trees.
Splits are contiguous in time with a 3:1:1 ratio (val and test each get
``n // 5`` snapshots, train gets the rest).
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .. import ndar
from ..errors import CompatibilityError, OutputExistsError
from ..prompt import PropagationPrompt
from .config import ScenarioConfig
from .raytrace import MultipathSet, trace_multipath
from .scene import Scene, advance_scene, build_scene
from .sensors import SensorFrame, render_sensors

FORMAT_VERSION = 1
_ARRAY_KEYS = ("depth", "albedo", "lidar", "radar")
_CSV_FIELDS = ("index", "power_ratio", "delay_ns", "valid", "los_present", "total_power_w")


@dataclass(frozen=True)
class DatasetManifest:
    """Top-level dataset description stored as ``manifest.json``."""

    config: ScenarioConfig
    n_snapshots: int
    splits: dict[str, tuple[int, int]]
    format_version: int = FORMAT_VERSION

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "n_snapshots": self.n_snapshots,
            "splits": {k: list(v) for k, v in self.splits.items()},
            "config": self.config.to_dict(),
        }

    def split_indices(self, split: str) -> range:
        lo, hi = self.splits[split]
        return range(lo, hi)


@dataclass(frozen=True, eq=False)
class SnapshotRecord:
    """Everything stored for one snapshot, loaded back into memory."""

    tx: SensorFrame
    rx: SensorFrame
    multipath: MultipathSet
    prompt: PropagationPrompt


def compute_splits(n_snapshots: int) -> dict[str, tuple[int, int]]:
    """Contiguous 3:1:1 time split; val and test each take ``n // 5``."""
    n_hold = n_snapshots // 5
    n_train = n_snapshots - 2 * n_hold
    return {
        "train": (0, n_train),
        "val": (n_train, n_train + n_hold),
        "test": (n_train + n_hold, n_snapshots),
    }


def _snapshot_dir(root: Path, index: int) -> Path:
    return root / "snapshots" / f"{index:06d}"


def _prompt_for(scene: Scene, config: ScenarioConfig) -> PropagationPrompt:
    d = np.asarray(scene.tx_pose.position) - np.asarray(scene.rx_pose.position)
    return PropagationPrompt(
        carrier_frequency_hz=config.band.carrier_frequency_hz,
        bandwidth_hz=config.band.bandwidth_hz,
        distance_m=float(np.linalg.norm(d)),
        azimuth_deg=float(np.degrees(np.arctan2(d[1], d[0]))),
        elevation_deg=float(np.degrees(np.arctan2(d[2], np.hypot(d[0], d[1])))),
    )


def _paths_csv_bytes(mp: MultipathSet) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_CSV_FIELDS)
    for i in range(mp.n_max):
        writer.writerow(
            [
                i,
                repr(float(mp.power_ratio[i])),
                repr(float(mp.delay_s[i] * 1e9)),
                int(mp.valid[i]),
                int(mp.los_present),
                repr(float(mp.total_power_w)),
            ]
        )
    return buf.getvalue().encode("utf-8")


def _read_paths_csv(path: Path) -> MultipathSet:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    n = len(rows)
    ratio = np.zeros(n)
    delay = np.zeros(n)
    valid = np.zeros(n, dtype=bool)
    los = False
    total = 0.0
    for row in rows:
        i = int(row["index"])
        ratio[i] = float(row["power_ratio"])
        delay[i] = float(row["delay_ns"]) * 1e-9
        valid[i] = bool(int(row["valid"]))
        los = bool(int(row["los_present"]))
        total = float(row["total_power_w"])
    return MultipathSet(
        power_ratio=ratio, delay_s=delay, valid=valid, los_present=los, total_power_w=total
    )


def read_paths_csv(path: str | Path) -> MultipathSet:
    """Load one snapshot's ``paths.csv`` back into a MultipathSet."""
    return _read_paths_csv(Path(path))


def _json_bytes(data: dict) -> bytes:
    return (json.dumps(data, sort_keys=True, indent=2) + "\n").encode("utf-8")


def _write_snapshot(root: Path, index: int, config: ScenarioConfig, base: Scene) -> None:
    scene = advance_scene(base, index * config.snapshot_interval_s)
    tx_frame = render_sensors(
        scene,
        scene.tx_pose,
        config.sensor,
        rng=np.random.default_rng((config.seed, index, 0)),
        exclude_box=scene.tx_box_index,
    )
    rx_frame = render_sensors(
        scene,
        scene.rx_pose,
        config.sensor,
        rng=np.random.default_rng((config.seed, index, 1)),
    )
    mp = trace_multipath(
        scene,
        config.band,
        n_max=config.tracer.n_max,
        tx_power_w=config.tracer.tx_power_w,
        reflection_coeff=config.tracer.reflection_coeff,
        max_order=config.tracer.max_order,
    )
    prompt = _prompt_for(scene, config)

    snap = _snapshot_dir(root, index)
    snap.mkdir(parents=True, exist_ok=True)
    for side, frame in (("tx", tx_frame), ("rx", rx_frame)):
        for key in _ARRAY_KEYS:
            ndar.write(snap / f"{side}_{key}.arr", getattr(frame, key))
    (snap / "paths.csv").write_bytes(_paths_csv_bytes(mp))
    (snap / "prompt.json").write_bytes(_json_bytes(prompt.to_dict()))


def generate_dataset(
    config: ScenarioConfig,
    out_dir: str | Path,
    overwrite: bool = False,
    threads: int = 1,
) -> DatasetManifest:
    """Generate the full snapshot tree plus manifest under ``out_dir``.

    Refuses to touch a directory that already holds a manifest unless
    ``overwrite`` is set. ``threads`` parallelizes snapshot rendering;
    snapshots are independent, so the output is identical at any thread
    count. The manifest is written last and doubles as a completion marker.
    """
    root = Path(out_dir)
    manifest_path = root / "manifest.json"
    if manifest_path.exists() and not overwrite:
        raise OutputExistsError(f"{manifest_path} exists; pass overwrite to regenerate")
    root.mkdir(parents=True, exist_ok=True)

    base = build_scene(config)
    indices = range(config.snapshots)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda i: _write_snapshot(root, i, config, base), indices))
    else:
        for i in indices:
            _write_snapshot(root, i, config, base)

    manifest = DatasetManifest(
        config=config, n_snapshots=config.snapshots, splits=compute_splits(config.snapshots)
    )
    manifest_path.write_bytes(_json_bytes(manifest.to_dict()))
    return manifest


def load_manifest(root: str | Path) -> DatasetManifest:
    path = Path(root) / "manifest.json"
    data = json.loads(path.read_text())
    if data.get("format_version") != FORMAT_VERSION:
        raise CompatibilityError(
            f"dataset format_version {data.get('format_version')} unsupported"
        )
    return DatasetManifest(
        config=ScenarioConfig.from_dict(data["config"]),
        n_snapshots=int(data["n_snapshots"]),
        splits={k: (int(v[0]), int(v[1])) for k, v in data["splits"].items()},
        format_version=int(data["format_version"]),
    )


def read_snapshot(root: str | Path, index: int) -> SnapshotRecord:
    """Load one snapshot's frames, paths, and prompt back from disk."""
    snap = _snapshot_dir(Path(root), index)
    frames = {}
    for side in ("tx", "rx"):
        arrays = {key: ndar.read(snap / f"{side}_{key}.arr") for key in _ARRAY_KEYS}
        frames[side] = SensorFrame(**arrays)
    prompt = PropagationPrompt.from_dict(json.loads((snap / "prompt.json").read_text()))
    return SnapshotRecord(
        tx=frames["tx"],
        rx=frames["rx"],
        multipath=_read_paths_csv(snap / "paths.csv"),
        prompt=prompt,
    )
