"""Per-modality feature encoders.

Compact, from-scratch stand-ins that keep the architectural role of each
modality branch: a patch-attention image encoder (depth + albedo as two
channels), a two-level set-abstraction lidar encoder (farthest-point
sampling, radius grouping, shared point MLPs, max pooling), and a
dual-stream radar encoder (per-point MLP stream plus one cross-attention
stream, contributions weighted by normalized rcs_proxy).

Point-based encoders are exactly permutation invariant: inputs are
canonicalized up front (lidar rows deduplicated and lexicographically
sorted, radar rows lexicographically sorted), after which every reduction
is deterministic. Empty clouds map to learned embeddings so downstream
fusion can tell "no returns" from "weak returns".
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor, nn

from .errors import ConfigurationError, ShapeError

_COORD_SCALE_M = 150.0  # xyz / depth normalization scale
_DOPPLER_SCALE_MPS = 30.0
_LIDAR_RADII_M = (4.0, 12.0)
_LIDAR_GROUP_SIZES = (32, 16)


@dataclass(frozen=True)
class EncoderConfig:
    """Widths and depths of the three modality branches."""

    image_width: int = 64
    image_height: int = 36
    image_patch_size: int = 4
    image_dim: int = 128
    lidar_dim: int = 128
    radar_dim: int = 128
    attn_heads: int = 4
    attn_layers: int = 2
    lidar_levels: int = 2
    lidar_points_per_level: tuple[int, ...] = (64, 16)

    def __post_init__(self) -> None:
        if self.image_width % self.image_patch_size or self.image_height % self.image_patch_size:
            raise ConfigurationError("image dims must be divisible by patch size")
        if min(self.image_dim, self.lidar_dim, self.radar_dim) < 1:
            raise ConfigurationError("feature widths must be > 0")
        if self.attn_heads < 1 or self.attn_layers < 1:
            raise ConfigurationError("attention heads/layers must be >= 1")
        if self.image_dim % self.attn_heads:
            raise ConfigurationError("image_dim must be divisible by attn_heads")
        if self.lidar_levels != len(self.lidar_points_per_level):
            raise ConfigurationError("lidar_points_per_level must list one count per level")
        if any(c < 1 for c in self.lidar_points_per_level):
            raise ConfigurationError("lidar level point counts must be >= 1")

    @property
    def n_patches(self) -> int:
        return (self.image_width // self.image_patch_size) * (
            self.image_height // self.image_patch_size
        )


@dataclass(frozen=True, eq=False)
class ModalityFeature:
    """One encoded view of one modality."""

    vector: Tensor
    modality: str
    view: str

    def __post_init__(self) -> None:
        if self.vector.dim() != 1:
            raise ShapeError("modality feature must be a 1-D vector")
        if not torch.isfinite(self.vector).all():
            raise ShapeError("modality feature must be finite")
        if self.view not in ("tx", "rx"):
            raise ShapeError("view must be 'tx' or 'rx'")

    @property
    def width(self) -> int:
        return self.vector.shape[0]


def _first_argmax(values: Tensor) -> int:
    """Index of the first maximal entry (stable under permutations of a
    canonicalized input)."""
    return int((values == values.max()).nonzero()[0, 0])


def farthest_point_indices(points: Tensor, count: int) -> Tensor:
    """Deterministic FPS over (K, 3) coordinates.

    Starts from the point of maximum norm; ties resolve to the first index,
    which is the lexicographically smallest row once the cloud has been
    canonicalized. Returns min(count, K) indices.
    """
    k = points.shape[0]
    count = min(count, k)
    norms = points.norm(dim=1)
    chosen = [_first_argmax(norms)]
    dist = (points - points[chosen[0]]).norm(dim=1)
    for _ in range(count - 1):
        nxt = _first_argmax(dist)
        chosen.append(nxt)
        dist = torch.minimum(dist, (points - points[nxt]).norm(dim=1))
    return torch.tensor(chosen, dtype=torch.long)


def _lexsorted(rows: Tensor) -> Tensor:
    """Rows sorted lexicographically (stable, keeps duplicates)."""
    order = torch.arange(rows.shape[0])
    for col in range(rows.shape[1] - 1, -1, -1):
        order = order[torch.argsort(rows[order, col], stable=True)]
    return rows[order]


class ImageEncoder(nn.Module):
    """Patch-attention encoder over stacked depth + albedo grids."""

    def __init__(self, cfg: EncoderConfig) -> None:
        super().__init__()
        self.cfg = cfg
        p = cfg.image_patch_size
        self.patch_embed = nn.Linear(2 * p * p, cfg.image_dim)
        self.pos_embed = nn.Parameter(torch.zeros(cfg.n_patches, cfg.image_dim))
        layer = nn.TransformerEncoderLayer(
            d_model=cfg.image_dim,
            nhead=cfg.attn_heads,
            dim_feedforward=4 * cfg.image_dim,
            batch_first=True,
            norm_first=True,
            dropout=0.0,
        )
        self.blocks = nn.TransformerEncoder(layer, cfg.attn_layers, enable_nested_tensor=False)

    def forward(self, depth: Tensor, albedo: Tensor) -> Tensor:
        """(H, W) grids or (B, H, W) batches -> (image_dim,) / (B, image_dim)."""
        single = depth.dim() == 2
        if single:
            depth, albedo = depth.unsqueeze(0), albedo.unsqueeze(0)
        cfg = self.cfg
        b, h, w = depth.shape
        if (h, w) != (cfg.image_height, cfg.image_width) or albedo.shape != depth.shape:
            raise ShapeError(f"expected {cfg.image_height}x{cfg.image_width} grids, got {h}x{w}")
        p = cfg.image_patch_size
        x = torch.stack([depth / _COORD_SCALE_M, albedo], dim=1)  # (B, 2, H, W)
        patches = (
            x.unfold(2, p, p)
            .unfold(3, p, p)  # (B, 2, H/p, W/p, p, p)
            .permute(0, 2, 3, 1, 4, 5)
            .reshape(b, cfg.n_patches, 2 * p * p)
        )
        tokens = self.patch_embed(patches) + self.pos_embed
        out = self.blocks(tokens).mean(dim=1)
        return out.squeeze(0) if single else out

    def encode(self, depth: Tensor, albedo: Tensor, view: str) -> ModalityFeature:
        return ModalityFeature(vector=self.forward(depth, albedo), modality="image", view=view)


class _PointMlp(nn.Module):
    def __init__(self, d_in: int, d_hidden: int, d_out: int) -> None:
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(d_in, d_hidden), nn.ReLU(), nn.Linear(d_hidden, d_out)
        )

    def forward(self, x: Tensor) -> Tensor:
        return self.net(x)


class LidarEncoder(nn.Module):
    """Set-abstraction encoder over (M, 4) point clouds.

    Each level farthest-point samples centroids, radius-groups neighbors
    (capped at the nearest ``_LIDAR_GROUP_SIZES`` members), runs a shared
    MLP over relative coordinates plus point attributes, and max-pools per
    group; a final global max-pool feeds the output projection.
    """

    def __init__(self, cfg: EncoderConfig) -> None:
        super().__init__()
        self.cfg = cfg
        attr_dims = [1] + [64] * (cfg.lidar_levels - 1) + [128]
        self.mlps = nn.ModuleList(
            _PointMlp(3 + attr_dims[lvl], 32 if lvl == 0 else 128, attr_dims[lvl + 1])
            for lvl in range(cfg.lidar_levels)
        )
        self.head = nn.Linear(attr_dims[cfg.lidar_levels], cfg.lidar_dim)
        self.empty_embedding = nn.Parameter(torch.zeros(cfg.lidar_dim))

    @staticmethod
    def canonicalize(points: Tensor) -> Tensor:
        """Deduplicate and lexicographically sort rows (exact set form)."""
        if points.shape[0] == 0:
            return points
        return torch.unique(points, dim=0)

    @staticmethod
    def _abstract(
        coords: Tensor,
        attrs: Tensor,
        mlp: _PointMlp,
        n_centers: int,
        radius: float,
        group_size: int,
    ) -> tuple[Tensor, Tensor]:
        centers = farthest_point_indices(coords, n_centers)
        center_coords = coords[centers]
        dists = torch.cdist(center_coords, coords)  # (S, K)
        capped = min(group_size, coords.shape[0])
        masked = torch.where(dists <= radius, dists, torch.full_like(dists, torch.inf))
        nn_dist, nn_idx = masked.topk(capped, largest=False)
        group_valid = torch.isfinite(nn_dist)
        rel = (coords[nn_idx] - center_coords[:, None, :]) / radius  # (S, c, 3)
        scores = mlp(torch.cat([rel, attrs[nn_idx]], dim=-1))
        scores = torch.where(group_valid[..., None], scores, torch.full_like(scores, -torch.inf))
        # Each center sits in its own group at distance 0, so the max is finite.
        return center_coords, scores.max(dim=1).values

    def forward(self, points: Tensor) -> Tensor:
        """(M, 4) cloud -> (lidar_dim,), exactly permutation/dup invariant."""
        if points.dim() != 2 or points.shape[1] != 4:
            raise ShapeError("lidar input must have shape (M, 4)")
        pts = self.canonicalize(points)
        if pts.shape[0] == 0:
            return self.empty_embedding
        coords = pts[:, :3]
        attrs = pts[:, 3:4]  # intensity
        for lvl, mlp in enumerate(self.mlps):
            coords, attrs = self._abstract(
                coords,
                attrs,
                mlp,
                self.cfg.lidar_points_per_level[lvl],
                _LIDAR_RADII_M[min(lvl, len(_LIDAR_RADII_M) - 1)],
                _LIDAR_GROUP_SIZES[min(lvl, len(_LIDAR_GROUP_SIZES) - 1)],
            )
        return self.head(attrs.max(dim=0).values)

    def encode(self, points: Tensor, view: str) -> ModalityFeature:
        return ModalityFeature(vector=self.forward(points), modality="lidar", view=view)


class RadarEncoder(nn.Module):
    """Dual-stream encoder over (K, 5) radar returns."""

    def __init__(self, cfg: EncoderConfig) -> None:
        super().__init__()
        self.cfg = cfg
        d = 128
        self.point_mlp = _PointMlp(5, 64, d)
        self.kv_proj = nn.Linear(5, d)
        self.query = nn.Parameter(torch.zeros(d))
        self.head = nn.Linear(2 * d, cfg.radar_dim)
        self.empty_embedding = nn.Parameter(torch.zeros(cfg.radar_dim))

    @staticmethod
    def canonicalize(points: Tensor) -> Tensor:
        """Lexicographically sort rows (duplicates kept: each return counts)."""
        if points.shape[0] == 0:
            return points
        return _lexsorted(points)

    def forward(self, points: Tensor) -> Tensor:
        """(K, 5) returns -> (radar_dim,), exactly permutation invariant."""
        if points.dim() != 2 or points.shape[1] != 5:
            raise ShapeError("radar input must have shape (K, 5)")
        pts = self.canonicalize(points)
        if pts.shape[0] == 0:
            return self.empty_embedding
        rcs = pts[:, 3]
        weights = rcs / rcs.sum() if float(rcs.sum()) > 0 else torch.full_like(rcs, 1.0 / len(rcs))
        feats = torch.cat(
            [
                pts[:, :3] / _COORD_SCALE_M,
                torch.log1p(pts[:, 3:4].clamp(min=0)),
                pts[:, 4:5] / _DOPPLER_SCALE_MPS,
            ],
            dim=1,
        )
        point_stream = (weights[:, None] * self.point_mlp(feats)).sum(dim=0)
        kv = self.kv_proj(feats)
        attn = torch.softmax(kv @ self.query / kv.shape[1] ** 0.5, dim=0)
        attn_stream = (attn[:, None] * kv).sum(dim=0)
        return self.head(torch.cat([point_stream, attn_stream]))

    def encode(self, points: Tensor, view: str) -> ModalityFeature:
        return ModalityFeature(vector=self.forward(points), modality="radar", view=view)
