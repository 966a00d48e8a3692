"""End-to-end multipath model: encoders, fusion, backbone, and heads.

One :class:`MultipathModel` covers every ablation variant. Modality
ablations swap the missing branches for learned null embeddings so the
fusion width never changes; ``no_prompt`` drops the byte prompt (the
sequence is the fused token alone); ``no_backbone`` feeds the projected
fusion token straight to the heads as a length-one sequence. The
``frozen_backbone`` and ``no_pretrain`` variants share the full forward
pass — they differ only in the training regime.

Batches carry variable-size point sets as per-sample tensors; images are
stacked. :func:`collate_snapshots` builds a batch from dataset records.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np
import torch
from torch import Tensor, nn

from .backbone import Backbone, BackboneConfig
from .encoders import EncoderConfig, ImageEncoder, LidarEncoder, RadarEncoder
from .errors import ConfigurationError, ShapeError
from .fusion import EcaConfig, ViewFusion
from .heads import HeadConfig, OutputHeads, TaskOutputs
from .prompt import PAD_ID, encode_prompt

VARIANTS = (
    "full",
    "camera_only",
    "lidar_only",
    "radar_only",
    "no_prompt",
    "no_backbone",
    "frozen_backbone",
    "no_pretrain",
)

_MODALITIES = ("image", "lidar", "radar")

_VARIANT_MODALITIES = {
    "camera_only": ("image",),
    "lidar_only": ("lidar",),
    "radar_only": ("radar",),
}


def active_modalities(variant: str) -> tuple[str, ...]:
    if variant not in VARIANTS:
        raise ConfigurationError(f"unknown variant {variant!r}")
    return _VARIANT_MODALITIES.get(variant, _MODALITIES)


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters for the full stack, serializable for checkpoints."""

    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    eca: EcaConfig = field(default_factory=EcaConfig)
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    head: HeadConfig = field(default_factory=HeadConfig)
    lora_rank: int = 8
    lora_alpha: float = 32.0
    variant: str = "full"

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}")
        if self.lora_rank < 1:
            raise ConfigurationError("lora_rank must be >= 1")
        if self.head.d_model != self.backbone.d_model:
            raise ConfigurationError("head width must match the backbone width")

    def to_dict(self) -> dict:
        return {
            "encoder": dataclasses.asdict(self.encoder),
            "eca": dataclasses.asdict(self.eca),
            "backbone": dataclasses.asdict(self.backbone),
            "head": dataclasses.asdict(self.head),
            "lora_rank": self.lora_rank,
            "lora_alpha": self.lora_alpha,
            "variant": self.variant,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        enc = dict(data["encoder"])
        enc["lidar_points_per_level"] = tuple(enc["lidar_points_per_level"])
        return cls(
            encoder=EncoderConfig(**enc),
            eca=EcaConfig(**data["eca"]),
            backbone=BackboneConfig(**data["backbone"]),
            head=HeadConfig(**data["head"]),
            lora_rank=int(data["lora_rank"]),
            lora_alpha=float(data["lora_alpha"]),
            variant=data["variant"],
        )


@dataclass(frozen=True, eq=False)
class SnapshotBatch:
    """Collated training/eval batch; point clouds stay ragged per sample."""

    tx_depth: Tensor
    tx_albedo: Tensor
    rx_depth: Tensor
    rx_albedo: Tensor
    tx_lidar: tuple[Tensor, ...]
    tx_radar: tuple[Tensor, ...]
    rx_lidar: tuple[Tensor, ...]
    rx_radar: tuple[Tensor, ...]
    token_ids: Tensor
    lengths: Tensor
    power_truth: Tensor
    delay_truth: Tensor
    valid: Tensor
    los_labels: Tensor

    @property
    def size(self) -> int:
        return self.tx_depth.shape[0]


def collate_snapshots(records: Sequence, tau_max_ns: float, n_paths: int) -> SnapshotBatch:
    """Build a batch from dataset snapshot records.

    Power targets are the kept-set ratios; delays normalize to
    ``tau_max_ns``; slots beyond each record's path count are invalid.
    """
    if not records:
        raise ShapeError("cannot collate an empty batch")
    t32 = lambda a: torch.as_tensor(np.ascontiguousarray(a), dtype=torch.float32)

    tokens = [encode_prompt(r.prompt) for r in records]
    lengths = torch.tensor([len(t) for t in tokens], dtype=torch.long)
    width = max(len(t) for t in tokens)
    token_ids = torch.full((len(records), width), PAD_ID, dtype=torch.long)
    for i, t in enumerate(tokens):
        token_ids[i, : len(t)] = torch.tensor(t, dtype=torch.long)

    power = torch.zeros(len(records), n_paths)
    delay = torch.zeros(len(records), n_paths)
    valid = torch.zeros(len(records), n_paths, dtype=torch.bool)
    labels = torch.zeros(len(records), dtype=torch.long)
    for i, r in enumerate(records):
        mp = r.multipath
        k = min(mp.n_paths, n_paths)
        if k:
            power[i, :k] = t32(mp.power_ratio[:k])
            delay[i, :k] = t32(mp.delay_s[:k] * 1e9 / tau_max_ns)
            valid[i, :k] = True
        labels[i] = int(mp.los_present)

    return SnapshotBatch(
        tx_depth=torch.stack([t32(r.tx.depth) for r in records]),
        tx_albedo=torch.stack([t32(r.tx.albedo) for r in records]),
        rx_depth=torch.stack([t32(r.rx.depth) for r in records]),
        rx_albedo=torch.stack([t32(r.rx.albedo) for r in records]),
        tx_lidar=tuple(t32(r.tx.lidar) for r in records),
        tx_radar=tuple(t32(r.tx.radar) for r in records),
        rx_lidar=tuple(t32(r.rx.lidar) for r in records),
        rx_radar=tuple(t32(r.rx.radar) for r in records),
        token_ids=token_ids,
        lengths=lengths,
        power_truth=power,
        delay_truth=delay,
        valid=valid,
        los_labels=labels,
    )


class MultipathModel(nn.Module):
    """Fused multi-modal encoder + decoder backbone + task heads."""

    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        self.config = config
        enc = config.encoder
        self.active = active_modalities(config.variant)
        self.image_encoder = ImageEncoder(enc) if "image" in self.active else None
        self.lidar_encoder = LidarEncoder(enc) if "lidar" in self.active else None
        self.radar_encoder = RadarEncoder(enc) if "radar" in self.active else None
        self.null_embeddings = nn.ParameterDict(
            {
                name: nn.Parameter(torch.zeros(dim))
                for name, dim in (
                    ("image", enc.image_dim),
                    ("lidar", enc.lidar_dim),
                    ("radar", enc.radar_dim),
                )
                if name not in self.active
            }
        )
        self.fusion = ViewFusion(
            image_dim=enc.image_dim,
            lidar_dim=enc.lidar_dim,
            radar_dim=enc.radar_dim,
            d_model=config.backbone.d_model,
            eca=config.eca,
        )
        self.backbone = (
            Backbone(config.backbone) if config.variant != "no_backbone" else None
        )
        self.heads = OutputHeads(config.head)

    # -- parameter groups ------------------------------------------------
    def encoder_parameters(self) -> Iterator[nn.Parameter]:
        for mod in (self.image_encoder, self.lidar_encoder, self.radar_encoder):
            if mod is not None:
                yield from mod.parameters()
        yield from self.null_embeddings.parameters()
        yield from self.fusion.parameters()

    def head_parameters(self) -> Iterator[nn.Parameter]:
        yield from self.heads.parameters()

    def activate_lora(self) -> None:
        if self.backbone is not None:
            self.backbone.activate_lora(self.config.lora_rank, self.config.lora_alpha)

    def lora_parameter_count(self) -> int:
        return 0 if self.backbone is None else self.backbone.lora_parameter_count()

    def trainable_parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters() if p.requires_grad)

    # -- forward ---------------------------------------------------------
    def _view_vectors(self, batch: SnapshotBatch, view: str) -> Tensor:
        depth = batch.tx_depth if view == "tx" else batch.rx_depth
        albedo = batch.tx_albedo if view == "tx" else batch.rx_albedo
        lidar = batch.tx_lidar if view == "tx" else batch.rx_lidar
        radar = batch.tx_radar if view == "tx" else batch.rx_radar
        b = depth.shape[0]

        if self.image_encoder is not None:
            image_feat = self.image_encoder(depth, albedo)
        else:
            image_feat = self.null_embeddings["image"].expand(b, -1)
        if self.lidar_encoder is not None:
            lidar_feat = torch.stack([self.lidar_encoder(pts) for pts in lidar])
        else:
            lidar_feat = self.null_embeddings["lidar"].expand(b, -1)
        if self.radar_encoder is not None:
            radar_feat = torch.stack([self.radar_encoder(pts) for pts in radar])
        else:
            radar_feat = self.null_embeddings["radar"].expand(b, -1)
        return torch.cat([image_feat, lidar_feat, radar_feat], dim=-1)

    def forward(self, batch: SnapshotBatch) -> TaskOutputs:
        tx = self._view_vectors(batch, "tx")
        rx = self._view_vectors(batch, "rx")
        _, projected = self.fusion.fuse_batch(tx, rx)

        if self.backbone is None:
            hidden = projected[:, None, :]
            mask = torch.ones(batch.size, 1, dtype=torch.bool)
        else:
            token_ids, lengths = batch.token_ids, batch.lengths
            if self.config.variant == "no_prompt":
                token_ids = token_ids[:, :0]
                lengths = torch.zeros_like(lengths)
            hidden, mask = self.backbone(token_ids, lengths, projected)
        return self.heads(hidden, mask)


def build_model(config: Optional[ModelConfig] = None) -> MultipathModel:
    return MultipathModel(config or ModelConfig())
