"""Training schedule, checkpointing, and few-shot fine-tuning.

The learning-rate policy is a three-epoch linear warm-up into a cosine
decay with an 80-epoch period; low-rank adapters on the backbone FFN
linears activate at the start of the configured epoch while the backbone
base weights stay frozen for the whole run. Encoders, fusion, heads, and
the backbone embeddings train throughout (the frozen-backbone variant
also pins the embeddings and never activates the adapters).

Runs are fully deterministic for a given seed: one global torch seed,
a per-epoch data permutation derived from (seed, epoch), per-step
learning rates from the closed-form schedule, and checkpoints that
round-trip byte-exactly (JSON with sorted keys plus one binary array
file per weight).
"""

from __future__ import annotations

import dataclasses
import json
import math
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from . import ndar
from .errors import CompatibilityError, ConfigurationError, DomainError
from .evalharness import MetricsReport, nmae_nmse, predict_split
from .heads import LossConfig, compute_loss
from .jsonutil import read_json, write_json
from .model import ModelConfig, MultipathModel, collate_snapshots
from .scenegen.dataset import load_manifest, read_snapshot

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Optimization schedule; defaults follow the training recipe."""

    batch_size: int = 24
    epochs: int = 100
    warmup_epochs: int = 3
    lora_activation_epoch: int = 10
    lr_max: float = 1e-5
    lr_warmup_start: float = 1e-6
    lr_min: float = 5e-7
    cosine_period_epochs: int = 80
    weight_decay: float = 0.01
    grad_clip_norm: float = 1.0
    seed: int = 0
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if not self.warmup_epochs < self.lora_activation_epoch < self.epochs:
            raise ConfigurationError(
                "need warmup_epochs < lora_activation_epoch < epochs"
            )
        if not self.lr_min < self.lr_warmup_start < self.lr_max:
            raise ConfigurationError("need lr_min < lr_warmup_start < lr_max")
        if self.cosine_period_epochs < 1:
            raise ConfigurationError("cosine_period_epochs must be >= 1")
        if self.grad_clip_norm <= 0:
            raise ConfigurationError("grad_clip_norm must be > 0")

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["loss"]["mu"] = list(self.loss.mu)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        loss = dict(data["loss"])
        loss["mu"] = tuple(loss["mu"])
        kwargs = {k: v for k, v in data.items() if k != "loss"}
        return cls(loss=LossConfig(**loss), **kwargs)


def lr_at(epoch: float, cfg: TrainConfig) -> float:
    """Closed-form learning rate at a (possibly fractional) epoch."""
    if not 0 <= epoch <= cfg.epochs:
        raise DomainError(f"epoch {epoch} outside [0, {cfg.epochs}]")
    if epoch < cfg.warmup_epochs:
        frac = epoch / cfg.warmup_epochs
        return cfg.lr_warmup_start + (cfg.lr_max - cfg.lr_warmup_start) * frac
    progress = min((epoch - cfg.warmup_epochs) / cfg.cosine_period_epochs, 1.0)
    return cfg.lr_min + (cfg.lr_max - cfg.lr_min) * (1.0 + math.cos(math.pi * progress)) / 2.0


@dataclass(frozen=True)
class TrainResult:
    """Artifacts of one training run."""

    out_dir: Path
    best_checkpoint: Path
    last_checkpoint: Path
    metrics_path: Path
    history: tuple[dict, ...]
    best_epoch: int
    best_val_loss: float


# -- checkpoint format ----------------------------------------------------


def save_checkpoint(
    path: str | Path,
    model: MultipathModel,
    train_config: TrainConfig,
    state: dict,
) -> Path:
    """Write config.json + state.json + one .arr file per weight array."""
    path = Path(path)
    weights = path / "weights"
    if weights.exists():
        shutil.rmtree(weights)
    weights.mkdir(parents=True)
    write_json(
        path / "config.json",
        {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "model": model.config.to_dict(),
            "train": train_config.to_dict(),
        },
    )
    lora_active = model.backbone is not None and model.backbone.lora_active
    for key, tensor in model.state_dict().items():
        if tensor.dtype != torch.float32:
            raise CompatibilityError(f"weight {key} is {tensor.dtype}, expected float32")
        ndar.write(weights / f"{key}.arr", tensor.detach().numpy())
    payload = dict(state)
    payload.update(
        {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "lora_active": bool(lora_active),
            "torch_rng": torch.get_rng_state().numpy().tobytes().hex(),
        }
    )
    write_json(path / "state.json", payload)
    return path


def load_checkpoint(path: str | Path) -> tuple[MultipathModel, dict]:
    """Rebuild the model and restore weights plus the torch RNG state."""
    path = Path(path)
    config = read_json(path / "config.json")
    if config.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise CompatibilityError("unsupported checkpoint format version")
    state = read_json(path / "state.json")
    model = MultipathModel(ModelConfig.from_dict(config["model"]))
    if state["lora_active"]:
        model.activate_lora()
    expected = set(model.state_dict().keys())
    on_disk = {p.stem for p in (path / "weights").glob("*.arr")}
    if expected != on_disk:
        missing, extra = expected - on_disk, on_disk - expected
        raise CompatibilityError(f"weight mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
    loaded = {
        key: torch.from_numpy(ndar.read(path / "weights" / f"{key}.arr").copy())
        for key in expected
    }
    model.load_state_dict(loaded)
    torch.set_rng_state(
        torch.frombuffer(bytearray.fromhex(state["torch_rng"]), dtype=torch.uint8).clone()
    )
    return model, state


def checkpoint_train_config(path: str | Path) -> TrainConfig:
    return TrainConfig.from_dict(read_json(Path(path) / "config.json")["train"])


# -- training loop --------------------------------------------------------


def _load_split(data_dir: Path, manifest, split: str) -> list:
    return [read_snapshot(data_dir, i) for i in manifest.split_indices(split)]


def _freeze_for_stage(model: MultipathModel, freeze_embeddings: bool) -> None:
    for p in model.parameters():
        p.requires_grad_(True)
    if model.backbone is not None:
        for p in model.backbone.base_parameters():
            p.requires_grad_(False)
        if freeze_embeddings or model.config.variant == "frozen_backbone":
            for p in model.backbone.embedding_parameters():
                p.requires_grad_(False)


def _trainable(model: MultipathModel) -> list[torch.nn.Parameter]:
    return [p for p in model.parameters() if p.requires_grad]


def _evaluate_split(
    model: MultipathModel, records: Sequence, cfg: TrainConfig
) -> tuple[float, MetricsReport]:
    """Eval-mode total loss plus the metric report for one split."""
    head = model.config.head
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for lo in range(0, len(records), cfg.batch_size):
            batch = collate_snapshots(records[lo : lo + cfg.batch_size], head.tau_max_ns, head.n_paths)
            loss, _ = compute_loss(
                model(batch), batch.power_truth, batch.delay_truth,
                batch.valid, batch.los_labels, cfg.loss,
            )
            total += float(loss) * batch.size
            count += batch.size
    predictions = predict_split(model, records, batch_size=cfg.batch_size)
    report = nmae_nmse(
        predictions["power_pred"], predictions["power_truth"],
        predictions["delay_pred"], predictions["delay_truth"],
        predictions["valid"], los_prob=predictions["los_prob"],
        los_labels=predictions["los_labels"],
    )
    return total / count, report


def _run_epochs(
    model: MultipathModel,
    train_records: Sequence,
    cfg: TrainConfig,
    epochs: Sequence[int],
    mix_records: Optional[Sequence] = None,
    allow_lora_activation: bool = True,
    log=None,
) -> None:
    """Shared optimization loop; mutates the model in place."""
    head = model.config.head
    optimizer = torch.optim.AdamW(
        _trainable(model), lr=lr_at(float(epochs[0]) if epochs else 0.0, cfg),
        weight_decay=cfg.weight_decay,
    )
    for epoch in epochs:
        if (
            allow_lora_activation
            and epoch == cfg.lora_activation_epoch
            and model.config.variant not in ("frozen_backbone", "no_backbone")
            and model.backbone is not None
            and not model.backbone.lora_active
        ):
            model.activate_lora()
            optimizer.add_param_group(
                {"params": list(model.backbone.lora_parameters())}
            )
        order = np.random.default_rng((cfg.seed, epoch)).permutation(len(train_records))
        chunks = [
            order[lo : lo + cfg.batch_size]
            for lo in range(0, len(order), cfg.batch_size)
        ]
        if mix_records is not None:
            mix_order = np.random.default_rng((cfg.seed, epoch, 1)).permutation(len(mix_records))
            mix_chunks = [
                mix_order[lo : lo + cfg.batch_size]
                for lo in range(0, len(mix_order), cfg.batch_size)
            ]
            interleaved = []
            for a, b in zip(chunks, mix_chunks):
                interleaved.append(("main", a))
                interleaved.append(("mix", b))
            interleaved += [("main", c) for c in chunks[len(mix_chunks):]]
            interleaved += [("mix", c) for c in mix_chunks[len(chunks):]]
            step_plan = interleaved
        else:
            step_plan = [("main", c) for c in chunks]

        model.train()
        losses = []
        for step, (source, idx) in enumerate(step_plan):
            lr = lr_at(epoch + step / len(step_plan), cfg)
            for group in optimizer.param_groups:
                group["lr"] = lr
            pool = train_records if source == "main" else mix_records
            batch = collate_snapshots([pool[i] for i in idx], head.tau_max_ns, head.n_paths)
            loss, breakdown = compute_loss(
                model(batch), batch.power_truth, batch.delay_truth,
                batch.valid, batch.los_labels, cfg.loss,
            )
            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(_trainable(model), cfg.grad_clip_norm)
            optimizer.step()
            losses.append(breakdown)
        if log is not None:
            log(epoch, losses)


def train(
    data_dir: str | Path,
    model_config: ModelConfig,
    train_config: TrainConfig,
    out_dir: str | Path,
) -> TrainResult:
    """Full training run over a generated dataset directory.

    Writes ``resolved_config.json``, a per-epoch ``metrics.jsonl`` log,
    and best-validation plus final checkpoints under ``out_dir``.
    """
    data_dir, out_dir = Path(data_dir), Path(out_dir)
    manifest = load_manifest(data_dir)
    train_records = _load_split(data_dir, manifest, "train")
    val_records = _load_split(data_dir, manifest, "val")
    if not train_records or not val_records:
        raise ConfigurationError("dataset needs non-empty train and val splits")

    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(
        out_dir / "resolved_config.json",
        {
            "command": "train",
            "data_dir": str(data_dir),
            "model": model_config.to_dict(),
            "train": train_config.to_dict(),
            "seed": train_config.seed,
        },
    )

    torch.manual_seed(train_config.seed)
    model = MultipathModel(model_config)
    _freeze_for_stage(model, freeze_embeddings=False)

    metrics_path = out_dir / "metrics.jsonl"
    history: list[dict] = []
    best = {"epoch": -1, "val_loss": math.inf}
    best_dir = out_dir / "checkpoint_best"

    def log(epoch: int, losses: list[dict]) -> None:
        val_loss, report = _evaluate_split(model, val_records, train_config)
        record = {
            "epoch": epoch,
            "lr": lr_at(float(epoch), train_config),
            "train_loss": float(np.mean([b["loss"] for b in losses])),
            "train_ce": float(np.mean([b["ce"] for b in losses])),
            "train_nmse_power": float(np.mean([b["nmse_power"] for b in losses])),
            "train_nmse_delay": float(np.mean([b["nmse_delay"] for b in losses])),
            "val_loss": val_loss,
            "val_accuracy": report.accuracy,
            "val_nmae_power": report.nmae_power,
            "val_nmse_power": report.nmse_power,
            "val_nmae_delay": report.nmae_delay,
            "val_nmse_delay": report.nmse_delay,
            "trainable_parameters": sum(p.numel() for p in _trainable(model)),
        }
        history.append(record)
        if val_loss < best["val_loss"]:
            best["val_loss"] = val_loss
            best["epoch"] = epoch
            save_checkpoint(
                best_dir, model, train_config,
                {"epoch": epoch, "val_loss": val_loss, "kind": "best"},
            )

    _run_epochs(model, train_records, train_config, range(train_config.epochs), log=log)

    with open(metrics_path, "wb") as fh:
        for record in history:
            fh.write(_ndjson_line(record))
    last_dir = save_checkpoint(
        out_dir / "checkpoint_last", model, train_config,
        {"epoch": train_config.epochs - 1, "val_loss": history[-1]["val_loss"], "kind": "last"},
    )
    return TrainResult(
        out_dir=out_dir,
        best_checkpoint=best_dir,
        last_checkpoint=last_dir,
        metrics_path=metrics_path,
        history=tuple(history),
        best_epoch=best["epoch"],
        best_val_loss=best["val_loss"],
    )


def _ndjson_line(record: dict) -> bytes:
    return (json.dumps(record, sort_keys=True) + "\n").encode("utf-8")


def fine_tune_few_shot(
    checkpoint: str | Path,
    target_data_dir: str | Path,
    fraction: float,
    train_config: Optional[TrainConfig] = None,
    out_dir: Optional[str | Path] = None,
    mix_data_dir: Optional[str | Path] = None,
) -> MetricsReport:
    """Few-shot fine-tune on a target domain, then score its test split.

    Selects floor(fraction · |target train split|) snapshots without
    replacement (seeded). Fraction 0 evaluates the checkpoint zero-shot.
    With ``mix_data_dir`` the selected target batches interleave 1:1 with
    batches drawn from the mix dataset's train split (same sample count).
    """
    if not 0.0 <= fraction <= 1.0:
        raise DomainError("fraction must lie in [0, 1]")
    cfg = train_config or TrainConfig()
    target_dir = Path(target_data_dir)
    manifest = load_manifest(target_dir)
    train_records = _load_split(target_dir, manifest, "train")
    test_records = _load_split(target_dir, manifest, "test")
    if not test_records:
        raise ConfigurationError("target dataset needs a non-empty test split")

    model, _ = load_checkpoint(checkpoint)
    rng = np.random.default_rng(cfg.seed)
    count = math.floor(fraction * len(train_records))
    if count > 0:
        chosen = np.sort(rng.choice(len(train_records), size=count, replace=False))
        subset = [train_records[i] for i in chosen]
        mix_records = None
        if mix_data_dir is not None:
            mix_manifest = load_manifest(mix_data_dir)
            mix_train = _load_split(Path(mix_data_dir), mix_manifest, "train")
            take = min(count, len(mix_train))
            mix_idx = np.sort(rng.choice(len(mix_train), size=take, replace=False))
            mix_records = [mix_train[i] for i in mix_idx]
        torch.manual_seed(cfg.seed)
        if model.config.variant not in ("frozen_backbone", "no_backbone"):
            model.activate_lora()
        _freeze_for_stage(model, freeze_embeddings=True)
        _run_epochs(
            model, subset, cfg, range(cfg.epochs),
            mix_records=mix_records, allow_lora_activation=False,
        )

    predictions = predict_split(model, test_records, batch_size=cfg.batch_size)
    report = nmae_nmse(
        predictions["power_pred"], predictions["power_truth"],
        predictions["delay_pred"], predictions["delay_truth"],
        predictions["valid"], los_prob=predictions["los_prob"],
        los_labels=predictions["los_labels"],
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_json(
            out / "resolved_config.json",
            {
                "command": "finetune",
                "checkpoint": str(checkpoint),
                "data_dir": str(target_dir),
                "fraction": fraction,
                "mix_data_dir": None if mix_data_dir is None else str(mix_data_dir),
                "train": cfg.to_dict(),
                "seed": cfg.seed,
            },
        )
        write_json(out / "report.json", report.to_dict())
        save_checkpoint(
            out / "checkpoint", model, cfg,
            {"epoch": cfg.epochs - 1, "fraction": fraction, "kind": "finetune"},
        )
    return report
