"""Cross-modal fusion: ECA channel attention over concatenated features.

Per view the three modality vectors are concatenated along channels and
gated by efficient channel attention — a 1-D convolution over the channel
axis followed by a sigmoid gate — then the Tx and Rx views are concatenated
and projected into the backbone embedding width.

The ECA kernel follows the adaptive rule

    k = nearest odd to ( log2(C)/gamma + b/gamma )

with exact ties (even integers) resolving upward and a floor of 1; the
explicit kernel-size-3 configuration is exposed as an override and used by
default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import torch
from torch import Tensor, nn

from .encoders import ModalityFeature
from .errors import ConfigurationError, DomainError, ShapeError


@dataclass(frozen=True)
class EcaConfig:
    """Channel-attention parameters; ``kernel_override`` pins k directly."""

    gamma: float = 2.0
    b: float = 1.0
    kernel_override: Optional[int] = 3

    def __post_init__(self) -> None:
        if self.gamma <= 0:
            raise ConfigurationError("gamma must be > 0")
        if self.kernel_override is not None:
            if self.kernel_override < 1 or self.kernel_override % 2 == 0:
                raise ConfigurationError("kernel_override must be odd and >= 1")


@dataclass(frozen=True, eq=False)
class FusedFeature:
    """Concatenated two-view feature and its backbone-width projection."""

    vector: Tensor
    projected: Tensor


def eca_kernel_size(channels: int, gamma: float = 2.0, b: float = 1.0) -> int:
    """Adaptive kernel size: nearest odd to log2(C)/gamma + b/gamma.

    Exact ties (the target is an even integer, equidistant from two odd
    numbers) resolve upward; the result never drops below 1.
    """
    if channels < 1:
        raise DomainError("channel count must be >= 1")
    t = math.log2(channels) / gamma + b / gamma
    lower = 2 * math.floor((t - 1) / 2) + 1  # greatest odd <= t (or nearest below)
    upper = lower + 2
    k = lower if (t - lower) < (upper - t) else upper
    return max(k, 1)


class EcaGate(nn.Module):
    """Sigmoid channel gate driven by a 1-D cross-channel convolution."""

    def __init__(self, channels: int, cfg: Optional[EcaConfig] = None) -> None:
        super().__init__()
        cfg = cfg or EcaConfig()
        k = cfg.kernel_override or eca_kernel_size(channels, cfg.gamma, cfg.b)
        if k % 2 == 0:
            raise ConfigurationError("ECA kernel size must be odd")
        if channels < k:
            raise ConfigurationError(f"channel width {channels} smaller than kernel {k}")
        self.kernel_size = k
        self.channels = channels
        self.conv = nn.Conv1d(1, 1, kernel_size=k, padding=k // 2, bias=False)

    def forward(self, x: Tensor) -> Tensor:
        """(C,) or (B, C) -> same shape, elementwise gated into (0, 1)·x."""
        single = x.dim() == 1
        if single:
            x = x.unsqueeze(0)
        if x.shape[1] != self.channels:
            raise ShapeError(f"expected {self.channels} channels, got {x.shape[1]}")
        gate = torch.sigmoid(self.conv(x.unsqueeze(1)).squeeze(1))
        out = x * gate
        return out.squeeze(0) if single else out


class ViewFusion(nn.Module):
    """Concatenate per-view modalities, gate, join views, project to d_model.

    The same gate weights serve both views. The projection is a learned
    linear map, or the identity when the fused width already equals
    ``d_model``.
    """

    _ORDER = ("image", "lidar", "radar")

    def __init__(
        self,
        image_dim: int,
        lidar_dim: int,
        radar_dim: int,
        d_model: int,
        eca: Optional[EcaConfig] = None,
    ) -> None:
        super().__init__()
        self.widths = {"image": image_dim, "lidar": lidar_dim, "radar": radar_dim}
        self.view_width = image_dim + lidar_dim + radar_dim
        self.fused_width = 2 * self.view_width
        self.gate = EcaGate(self.view_width, eca)
        if self.fused_width == d_model:
            self.projection: nn.Module = nn.Identity()
        else:
            self.projection = nn.Linear(self.fused_width, d_model)

    def _gather(self, features: tuple[ModalityFeature, ...], view: str) -> Tensor:
        by_tag = {f.modality: f for f in features}
        if set(by_tag) != set(self._ORDER) or len(features) != 3:
            raise ShapeError(f"need exactly one feature per modality {self._ORDER}")
        parts = []
        for tag in self._ORDER:
            feat = by_tag[tag]
            if feat.view != view:
                raise ShapeError(f"{tag} feature tagged {feat.view!r}, expected {view!r}")
            if feat.width != self.widths[tag]:
                raise ShapeError(
                    f"{tag} feature width {feat.width} != configured {self.widths[tag]}"
                )
            parts.append(feat.vector)
        return torch.cat(parts)

    def forward(
        self,
        tx_features: tuple[ModalityFeature, ...],
        rx_features: tuple[ModalityFeature, ...],
    ) -> FusedFeature:
        tx = self.gate(self._gather(tx_features, "tx"))
        rx = self.gate(self._gather(rx_features, "rx"))
        vector = torch.cat([tx, rx])
        return FusedFeature(vector=vector, projected=self.projection(vector))

    def fuse_batch(self, tx_vectors: Tensor, rx_vectors: Tensor) -> tuple[Tensor, Tensor]:
        """Batched path over pre-concatenated (B, view_width) vectors."""
        if tx_vectors.shape[-1] != self.view_width or rx_vectors.shape[-1] != self.view_width:
            raise ShapeError("per-view vectors must have the configured fused width")
        vector = torch.cat([self.gate(tx_vectors), self.gate(rx_vectors)], dim=-1)
        return vector, self.projection(vector)
