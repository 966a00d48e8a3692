"""Scene construction, multipath oracle, sensor stand-ins, dataset writer."""

from .config import (
    BandConfig,
    BuildingRows,
    MMWAVE_BAND,
    SUB6_BAND,
    ScenarioConfig,
    SensorConfig,
    TracerConfig,
    default_building_rows,
)
from .scene import Box, Pose, Scene, advance_scene, build_scene
from .raytrace import MultipathSet, TracedPath, trace_multipath, trace_paths
from .sensors import SensorFrame, render_sensors
from .dataset import DatasetManifest, generate_dataset, load_manifest, read_snapshot

__all__ = [
    "BandConfig",
    "BuildingRows",
    "Box",
    "MMWAVE_BAND",
    "SUB6_BAND",
    "DatasetManifest",
    "MultipathSet",
    "Pose",
    "ScenarioConfig",
    "Scene",
    "SensorConfig",
    "SensorFrame",
    "TracedPath",
    "TracerConfig",
    "advance_scene",
    "build_scene",
    "default_building_rows",
    "generate_dataset",
    "load_manifest",
    "read_snapshot",
    "render_sensors",
    "trace_multipath",
    "trace_paths",
]
