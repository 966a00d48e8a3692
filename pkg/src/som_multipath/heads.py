"""Task adapters, output heads, and the composite training loss.

The pooled backbone representation passes through one residual adapter per
task (two fully connected layers with ReLU and a skip connection; the
regression adapters add dropout during training), then linear heads emit
LoS/NLoS probabilities (softmax) and per-path power/delay values squashed
to (0, 1) by a sigmoid. Powers are ratios of the kept-path total; delays
are fractions of ``tau_max``.

The loss is an unweighted-by-default sum of three terms: cross entropy on
the class probabilities, and masked normalized-MSE terms for power (path
weights ``mu`` emphasize the dominant path) and delay. Padded path slots
are excluded from numerator and denominator alike; snapshots without any
valid path contribute the classification term only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
from torch import Tensor, nn

from .errors import ConfigurationError, ShapeError

DEFAULT_TAU_MAX_NS = 2000.0


@dataclass(frozen=True)
class HeadConfig:
    """Adapter and head geometry."""

    d_model: int = 256
    adapter_hidden: int = 512
    n_paths: int = 6
    dropout: float = 0.3
    tau_max_ns: float = DEFAULT_TAU_MAX_NS

    def __post_init__(self) -> None:
        if self.d_model < 1 or self.adapter_hidden < 1 or self.n_paths < 1:
            raise ConfigurationError("head dimensions must be >= 1")
        if not 0 <= self.dropout < 1:
            raise ConfigurationError("dropout must be in [0, 1)")
        if self.tau_max_ns <= 0:
            raise ConfigurationError("tau_max_ns must be > 0")


@dataclass(frozen=True, eq=False)
class TaskOutputs:
    """Model predictions for a batch.

    los_prob: (B, 2) probabilities, index 1 = LoS. power_pred and
    delay_pred: (B, N) values in (0, 1); delays are fractions of tau_max.
    """

    los_prob: Tensor
    power_pred: Tensor
    delay_pred: Tensor


@dataclass(frozen=True)
class LossConfig:
    """Composite-loss weights; ``mu`` applies per path slot to the power term."""

    mu: tuple[float, ...] = (3.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    class_weight: float = 1.0
    power_weight: float = 1.0
    delay_weight: float = 1.0
    tau_max_ns: float = DEFAULT_TAU_MAX_NS
    eps: float = 1e-12

    def __post_init__(self) -> None:
        if any(m <= 0 for m in self.mu):
            raise ConfigurationError("mu weights must be > 0")


class TaskAdapter(nn.Module):
    """Residual two-layer bottleneck: x + W2 relu(W1 x), optional dropout."""

    def __init__(self, d_model: int, hidden: int, dropout: float = 0.0) -> None:
        super().__init__()
        self.fc1 = nn.Linear(d_model, hidden)
        self.fc2 = nn.Linear(hidden, d_model)
        self.dropout = nn.Dropout(dropout) if dropout > 0 else nn.Identity()
        self.act = nn.ReLU()

    def forward(self, x: Tensor) -> Tensor:
        return x + self.fc2(self.dropout(self.act(self.fc1(x))))


def masked_mean_pool(hidden: Tensor, mask: Optional[Tensor] = None) -> Tensor:
    """Mean over real sequence positions; (B, L, d) + (B, L) -> (B, d)."""
    if hidden.dim() != 3:
        raise ShapeError("hidden states must be (B, L, d)")
    if hidden.shape[1] == 0:
        raise ShapeError("cannot pool an empty sequence")
    if mask is None:
        return hidden.mean(dim=1)
    counts = mask.sum(dim=1)
    if int(counts.min()) == 0:
        raise ShapeError("every sample needs at least one real position")
    return (hidden * mask[..., None]).sum(dim=1) / counts[:, None]


class OutputHeads(nn.Module):
    """Per-task adapters plus the classification and regression heads."""

    TASKS = ("classification", "power", "delay")

    def __init__(self, cfg: HeadConfig) -> None:
        super().__init__()
        self.cfg = cfg
        self.adapters = nn.ModuleDict(
            {
                "classification": TaskAdapter(cfg.d_model, cfg.adapter_hidden),
                "power": TaskAdapter(cfg.d_model, cfg.adapter_hidden, cfg.dropout),
                "delay": TaskAdapter(cfg.d_model, cfg.adapter_hidden, cfg.dropout),
            }
        )
        self.class_head = nn.Linear(cfg.d_model, 2)
        self.power_head = nn.Linear(cfg.d_model, cfg.n_paths)
        self.delay_head = nn.Linear(cfg.d_model, cfg.n_paths)

    def pool_and_adapt(self, hidden: Tensor, mask: Optional[Tensor], task: str) -> Tensor:
        if task not in self.TASKS:
            raise ConfigurationError(f"unknown task {task!r}")
        return self.adapters[task](masked_mean_pool(hidden, mask))

    def forward(self, hidden: Tensor, mask: Optional[Tensor] = None) -> TaskOutputs:
        cls = self.class_head(self.pool_and_adapt(hidden, mask, "classification"))
        power = self.power_head(self.pool_and_adapt(hidden, mask, "power"))
        delay = self.delay_head(self.pool_and_adapt(hidden, mask, "delay"))
        return TaskOutputs(
            los_prob=torch.softmax(cls, dim=-1),
            power_pred=torch.sigmoid(power),
            delay_pred=torch.sigmoid(delay),
        )


def compute_loss(
    outputs: TaskOutputs,
    power_truth: Tensor,
    delay_truth: Tensor,
    valid: Tensor,
    los_labels: Tensor,
    cfg: Optional[LossConfig] = None,
) -> tuple[Tensor, dict[str, float]]:
    """Composite loss over a batch.

    ``power_truth`` holds kept-set ratios, ``delay_truth`` normalized delays
    (fraction of tau_max) — both (B, N) with the (B, N) ``valid`` mask;
    ``los_labels`` is (B,) with 1 = LoS. Returns the scalar loss plus a
    breakdown of batch-mean terms.
    """
    cfg = cfg or LossConfig()
    b, n = outputs.power_pred.shape
    if len(cfg.mu) != n:
        raise ShapeError(f"mu has {len(cfg.mu)} entries for {n} path slots")
    if power_truth.shape != (b, n) or delay_truth.shape != (b, n) or valid.shape != (b, n):
        raise ShapeError("truth arrays must match predictions (B, N)")

    probs = outputs.los_prob.clamp(min=cfg.eps)
    ce = -torch.log(probs[torch.arange(b), los_labels])

    mu = torch.as_tensor(cfg.mu, dtype=outputs.power_pred.dtype)
    vmask = valid.to(outputs.power_pred.dtype)
    any_valid = valid.any(dim=1)
    power_den = (power_truth.pow(2) * vmask).sum(dim=1)
    power_num = (mu * (power_truth - outputs.power_pred).pow(2) * vmask).sum(dim=1)
    delay_den = (delay_truth.pow(2) * vmask).sum(dim=1)
    delay_num = ((delay_truth - outputs.delay_pred).pow(2) * vmask).sum(dim=1)
    safe = lambda num, den: torch.where(
        any_valid & (den > 0), num / den.clamp(min=cfg.eps), torch.zeros_like(num)
    )
    nmse_power = safe(power_num, power_den)
    nmse_delay = safe(delay_num, delay_den)

    per_sample = (
        cfg.class_weight * ce
        + cfg.power_weight * nmse_power
        + cfg.delay_weight * nmse_delay
    )
    loss = per_sample.mean()
    breakdown = {
        "loss": float(loss.detach()),
        "ce": float(ce.mean().detach()),
        "nmse_power": float(nmse_power.mean().detach()),
        "nmse_delay": float(nmse_delay.mean().detach()),
    }
    return loss, breakdown
