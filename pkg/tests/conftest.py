"""Shared fixtures: deterministic seeds and small prebuilt scenes/datasets."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from som_multipath.scenegen.config import (
    SUB6_BAND,
    ScenarioConfig,
    SensorConfig,
    TracerConfig,
)
from som_multipath.scenegen.scene import Box, Pose, Scene


@pytest.fixture(autouse=True)
def _seed_torch():
    torch.manual_seed(0)
    yield


@pytest.fixture
def free_space_scene():
    """No boxes, no ground: a single LoS path is the only candidate."""
    d = 299.792458  # meters; delay is exactly 1 us
    return Scene(
        box_min=np.zeros((0, 3)),
        box_max=np.zeros((0, 3)),
        box_velocity=np.zeros((0, 3)),
        box_material=np.zeros((0,), dtype=int),
        tx_pose=Pose(position=(0.0, 0.0, 2.0)),
        rx_pose=Pose(position=(d, 0.0, 2.0)),
        has_ground=False,
    )


@pytest.fixture
def wall_scene():
    """Tx(0,0,2) / Rx(10,0,2) with one large wall at y=5 and no ground."""
    wall = Box(min_corner=(-50.0, 5.0, 0.0), max_corner=(60.0, 6.0, 50.0),
               velocity=(0.0, 0.0, 0.0), material_id=1)
    return Scene.from_boxes(
        [wall],
        tx_pose=Pose(position=(0.0, 0.0, 2.0)),
        rx_pose=Pose(position=(10.0, 0.0, 2.0)),
        has_ground=False,
    )


@pytest.fixture
def tiny_config():
    """Smallest practical dataset config (urban/high/sub-6, 5 snapshots)."""
    return ScenarioConfig(
        scenario_kind="urban",
        vtd="high",
        band=SUB6_BAND,
        road_length_m=60.0,
        snapshots=5,
        seed=11,
        sensor=SensorConfig(image_width=16, image_height=9, lidar_azimuth_steps=16),
        tracer=TracerConfig(),
    )


@pytest.fixture
def tiny_dataset(tmp_path, tiny_config):
    from som_multipath.scenegen.dataset import generate_dataset

    out = tmp_path / "data"
    manifest = generate_dataset(tiny_config, out)
    return out, manifest


@pytest.fixture(scope="session")
def session_dataset(tmp_path_factory):
    """One shared 5-snapshot dataset for trainer/eval/CLI tests."""
    from som_multipath.scenegen.dataset import generate_dataset

    cfg = ScenarioConfig(
        scenario_kind="urban",
        vtd="high",
        band=SUB6_BAND,
        road_length_m=60.0,
        snapshots=5,
        seed=11,
        sensor=SensorConfig(image_width=16, image_height=9, lidar_azimuth_steps=16),
        tracer=TracerConfig(),
    )
    out = tmp_path_factory.mktemp("shared") / "data"
    manifest = generate_dataset(cfg, out)
    return out, manifest


@pytest.fixture
def tiny_model_config():
    """Down-scaled model matching the 16x9 session dataset images."""
    from som_multipath.backbone import BackboneConfig
    from som_multipath.encoders import EncoderConfig
    from som_multipath.heads import HeadConfig
    from som_multipath.model import ModelConfig

    return ModelConfig(
        encoder=EncoderConfig(
            image_width=16,
            image_height=9,
            image_patch_size=1,
            image_dim=16,
            lidar_dim=16,
            radar_dim=16,
            attn_heads=2,
            attn_layers=1,
            lidar_levels=2,
            lidar_points_per_level=(16, 4),
        ),
        backbone=BackboneConfig(d_model=32, n_layers=1, n_heads=2, ffn_width=64),
        head=HeadConfig(d_model=32, adapter_hidden=32),
        lora_rank=2,
    )


@pytest.fixture
def short_train_config():
    from som_multipath.trainer import TrainConfig

    return TrainConfig(
        batch_size=2,
        epochs=4,
        warmup_epochs=1,
        lora_activation_epoch=2,
        lr_max=1e-4,
        lr_warmup_start=1e-5,
        lr_min=1e-6,
        cosine_period_epochs=3,
        seed=1,
    )
