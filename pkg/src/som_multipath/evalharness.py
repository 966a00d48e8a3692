"""Metrics, baselines, generalization protocol, and ablation variants.

Error metrics follow the normalized per-snapshot form: each snapshot
contributes its valid-path error sum divided by its own truth norm, and
snapshots average uniformly. Snapshots whose truth norm is zero are
skipped and counted in the report. The classification metric is plain
accuracy over argmax predictions.

The protocol helpers mirror the evaluation suites: an eight-variant
ablation table, a few-shot fraction grid, and three generalization pairs
(cross-VTD low to high, cross-band 60 GHz to 5.9 GHz, cross-scenario
urban to suburban). Plot-ready series (PDP traces, RMS delay-spread CDF,
normalized FCF, capacity bars) are emitted as JSON-friendly dicts.
"""

from __future__ import annotations

import csv
import dataclasses
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from .chanstats import CapacityConfig, channel_capacity, normalized_fcf, pdp, rms_delay_spread
from .errors import ConfigurationError, DomainError
from .jsonutil import json_bytes, write_json
from .model import VARIANTS, ModelConfig, MultipathModel, SnapshotBatch, collate_snapshots
from .scenegen import ScenarioConfig
from .scenegen.config import MMWAVE_BAND, SUB6_BAND
from .scenegen.dataset import load_manifest, read_snapshot

FEW_SHOT_FRACTIONS = (0.0025, 0.005, 0.01, 0.014, 0.016)

GENERALIZATION_CASES = ("cross_vtd", "cross_band", "cross_scenario")


@dataclass(frozen=True)
class MetricsReport:
    """Aggregate evaluation metrics for one split."""

    accuracy: float
    nmae_power: float
    nmse_power: float
    nmae_delay: float
    nmse_delay: float
    snapshots: int
    skipped_power: int = 0
    skipped_delay: int = 0
    breakdown: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 <= self.accuracy <= 1.0:
            raise DomainError("accuracy must lie in [0, 1]")
        for name in ("nmae_power", "nmse_power", "nmae_delay", "nmse_delay"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def classification_accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of correct argmax predictions; (N, 2) probabilities or (N,) labels."""
    pred = np.asarray(predictions)
    lab = np.asarray(labels)
    if pred.ndim == 2:
        pred = pred.argmax(axis=1)
    if pred.shape[0] == 0 or pred.shape != lab.shape:
        raise DomainError("predictions and labels must be equal-length and non-empty")
    return float((pred == lab).mean())


def _normalized_errors(
    pred: np.ndarray, truth: np.ndarray, valid: np.ndarray
) -> tuple[float, float, int]:
    """Mean per-snapshot (NMAE, NMSE) over snapshots with nonzero truth norm."""
    nmae_terms, nmse_terms, skipped = [], [], 0
    for t in range(truth.shape[0]):
        keep = valid[t]
        p, g = pred[t][keep], truth[t][keep]
        abs_norm = float(np.abs(g).sum())
        sq_norm = float((g**2).sum())
        if abs_norm == 0.0 or sq_norm == 0.0:
            skipped += 1
            continue
        nmae_terms.append(float(np.abs(p - g).sum()) / abs_norm)
        nmse_terms.append(float(((p - g) ** 2).sum()) / sq_norm)
    if not nmae_terms:
        return 0.0, 0.0, skipped
    return float(np.mean(nmae_terms)), float(np.mean(nmse_terms)), skipped


def nmae_nmse(
    power_pred: np.ndarray,
    power_truth: np.ndarray,
    delay_pred: np.ndarray,
    delay_truth: np.ndarray,
    valid: np.ndarray,
    los_prob: Optional[np.ndarray] = None,
    los_labels: Optional[np.ndarray] = None,
) -> MetricsReport:
    """Per-snapshot normalized errors plus accuracy when labels are supplied."""
    shapes = {power_pred.shape, power_truth.shape, delay_pred.shape, delay_truth.shape, valid.shape}
    if len(shapes) != 1:
        raise DomainError("prediction/truth/valid arrays must share one shape")
    nmae_p, nmse_p, skip_p = _normalized_errors(power_pred, power_truth, valid)
    nmae_d, nmse_d, skip_d = _normalized_errors(delay_pred, delay_truth, valid)
    accuracy = 0.0
    breakdown: dict = {"has_labels": los_labels is not None}
    if los_labels is not None and los_prob is not None:
        accuracy = classification_accuracy(los_prob, los_labels)
    return MetricsReport(
        accuracy=accuracy,
        nmae_power=nmae_p,
        nmse_power=nmse_p,
        nmae_delay=nmae_d,
        nmse_delay=nmse_d,
        snapshots=int(power_truth.shape[0]),
        skipped_power=skip_p,
        skipped_delay=skip_d,
        breakdown=breakdown,
    )


def predict_split(
    model: MultipathModel,
    records: Sequence,
    batch_size: int = 24,
) -> dict[str, np.ndarray]:
    """Eval-mode inference over records; returns prediction and truth arrays."""
    if not records:
        raise DomainError("cannot evaluate an empty split")
    cfg = model.config.head
    model.eval()
    outs: dict[str, list[np.ndarray]] = {k: [] for k in (
        "los_prob", "power_pred", "delay_pred", "power_truth", "delay_truth", "valid", "los_labels",
    )}
    with torch.no_grad():
        for lo in range(0, len(records), batch_size):
            batch = collate_snapshots(records[lo : lo + batch_size], cfg.tau_max_ns, cfg.n_paths)
            pred = model(batch)
            outs["los_prob"].append(pred.los_prob.numpy())
            outs["power_pred"].append(pred.power_pred.numpy())
            outs["delay_pred"].append(pred.delay_pred.numpy())
            outs["power_truth"].append(batch.power_truth.numpy())
            outs["delay_truth"].append(batch.delay_truth.numpy())
            outs["valid"].append(batch.valid.numpy())
            outs["los_labels"].append(batch.los_labels.numpy())
    return {k: np.concatenate(v, axis=0) for k, v in outs.items()}


def mean_baseline(train_records: Sequence, n_paths: int, tau_max_ns: float) -> dict:
    """Per-slot mean power/delay over valid train entries plus majority class."""
    power = np.zeros((len(train_records), n_paths))
    delay = np.zeros((len(train_records), n_paths))
    valid = np.zeros((len(train_records), n_paths), dtype=bool)
    labels = np.zeros(len(train_records), dtype=np.int64)
    for i, rec in enumerate(train_records):
        mp = rec.multipath
        k = min(mp.n_paths, n_paths)
        power[i, :k] = mp.power_ratio[:k]
        delay[i, :k] = mp.delay_s[:k] * 1e9 / tau_max_ns
        valid[i, :k] = True
        labels[i] = int(mp.los_present)
    counts = valid.sum(axis=0)
    mean_power = np.where(counts > 0, power.sum(axis=0) / np.maximum(counts, 1), 0.0)
    mean_delay = np.where(counts > 0, delay.sum(axis=0) / np.maximum(counts, 1), 0.0)
    majority = int(np.bincount(labels, minlength=2).argmax())
    return {"power": mean_power, "delay": mean_delay, "majority_label": majority}


def baseline_report(baseline: dict, predictions: dict[str, np.ndarray]) -> MetricsReport:
    """Score the mean/majority predictor against the same truth arrays."""
    t = predictions["power_truth"].shape[0]
    power_pred = np.tile(baseline["power"], (t, 1))
    delay_pred = np.tile(baseline["delay"], (t, 1))
    los_prob = np.zeros((t, 2))
    los_prob[:, baseline["majority_label"]] = 1.0
    return nmae_nmse(
        power_pred,
        predictions["power_truth"],
        delay_pred,
        predictions["delay_truth"],
        predictions["valid"],
        los_prob=los_prob,
        los_labels=predictions["los_labels"],
    )


def _predictions_payload(predictions: dict[str, np.ndarray], tau_max_ns: float) -> list[dict]:
    rows = []
    for i in range(predictions["los_prob"].shape[0]):
        rows.append(
            {
                "index": i,
                "los_prob": [float(x) for x in predictions["los_prob"][i]],
                "pred_label": int(predictions["los_prob"][i].argmax()),
                "true_label": int(predictions["los_labels"][i]),
                "power_pred": [float(x) for x in predictions["power_pred"][i]],
                "power_truth": [float(x) for x in predictions["power_truth"][i]],
                "delay_pred_ns": [float(x * tau_max_ns) for x in predictions["delay_pred"][i]],
                "delay_truth_ns": [float(x * tau_max_ns) for x in predictions["delay_truth"][i]],
                "valid": [bool(v) for v in predictions["valid"][i]],
            }
        )
    return rows


def evaluate(
    checkpoint: str | Path,
    data_dir: str | Path,
    split: str = "test",
    predictions_path: Optional[str | Path] = None,
    report_path: Optional[str | Path] = None,
    batch_size: int = 24,
) -> tuple[MetricsReport, MetricsReport]:
    """Score a checkpoint on one dataset split, next to the mean baseline.

    Writes the per-snapshot predictions file (for downstream channel
    statistics) and the JSON report when paths are given. Returns
    (model report, baseline report).
    """
    from . import trainer  # deferred: trainer imports this module's metrics

    model, _ = trainer.load_checkpoint(checkpoint)
    manifest = load_manifest(data_dir)
    records = [read_snapshot(data_dir, i) for i in manifest.split_indices(split)]
    train_records = [read_snapshot(data_dir, i) for i in manifest.split_indices("train")]
    if not records or not train_records:
        raise ConfigurationError(f"split {split!r} or train split is empty")

    cfg = model.config.head
    predictions = predict_split(model, records, batch_size=batch_size)
    report = nmae_nmse(
        predictions["power_pred"],
        predictions["power_truth"],
        predictions["delay_pred"],
        predictions["delay_truth"],
        predictions["valid"],
        los_prob=predictions["los_prob"],
        los_labels=predictions["los_labels"],
    )
    base = baseline_report(mean_baseline(train_records, cfg.n_paths, cfg.tau_max_ns), predictions)
    if predictions_path is not None:
        write_json(predictions_path, {"split": split, "snapshots": _predictions_payload(predictions, cfg.tau_max_ns)})
    if report_path is not None:
        write_json(report_path, {"model": report.to_dict(), "baseline": base.to_dict(), "split": split})
    return report, base


# -- ablations -----------------------------------------------------------


def run_ablation(
    variant: str,
    data_dir: str | Path,
    out_dir: str | Path,
    model_config: Optional[ModelConfig] = None,
    train_config=None,
) -> MetricsReport:
    """Train one ablation variant and score it on the test split."""
    from . import trainer  # deferred to avoid an import cycle

    if variant not in VARIANTS:
        raise ConfigurationError(f"unknown variant {variant!r}")
    base_cfg = model_config or ModelConfig()
    cfg = dataclasses.replace(base_cfg, variant=variant)
    result = trainer.train(data_dir, cfg, train_config or trainer.TrainConfig(), out_dir)
    report, _ = evaluate(result.best_checkpoint, data_dir, split="test")
    return report


def ablation_suite(
    data_dir: str | Path,
    out_dir: str | Path,
    model_config: Optional[ModelConfig] = None,
    train_config=None,
    variants: Sequence[str] = VARIANTS,
) -> dict:
    """All-variant ablation table written as JSON + CSV."""
    out = Path(out_dir)
    rows = {}
    for variant in variants:
        report = run_ablation(variant, data_dir, out / variant, model_config, train_config)
        rows[variant] = report.to_dict()
    table = {"variants": rows, "columns": [
        "accuracy", "nmae_power", "nmse_power", "nmae_delay", "nmse_delay",
    ]}
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "ablation_report.json", table)
    (out / "ablation_table.csv").write_bytes(_ablation_csv(table))
    return table


def _ablation_csv(table: dict) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["variant"] + table["columns"])
    for variant, row in table["variants"].items():
        writer.writerow([variant] + [repr(row[c]) for c in table["columns"]])
    return buf.getvalue().encode("utf-8")


# -- generalization / few-shot -------------------------------------------


def generalization_pairs(base: ScenarioConfig) -> dict[str, tuple[ScenarioConfig, ScenarioConfig]]:
    """Source/target config pairs for the three transfer cases."""
    return {
        "cross_vtd": (
            dataclasses.replace(base, vtd="low"),
            dataclasses.replace(base, vtd="high", seed=base.seed + 101),
        ),
        "cross_band": (
            dataclasses.replace(base, band=MMWAVE_BAND),
            dataclasses.replace(base, band=SUB6_BAND, seed=base.seed + 202),
        ),
        "cross_scenario": (
            dataclasses.replace(base, scenario_kind="urban"),
            dataclasses.replace(base, scenario_kind="suburban", seed=base.seed + 303),
        ),
    }


def few_shot_grid(
    checkpoint: str | Path,
    target_dir: str | Path,
    train_config=None,
    fractions: Sequence[float] = FEW_SHOT_FRACTIONS,
    out_path: Optional[str | Path] = None,
) -> dict:
    """Few-shot fine-tuning sweep over the fraction grid plus zero-shot."""
    from . import trainer

    cfg = train_config or trainer.TrainConfig()
    series = {"fractions": list(fractions), "reports": [], "zero_shot": None}
    zero = trainer.fine_tune_few_shot(checkpoint, target_dir, 0.0, cfg)
    series["zero_shot"] = zero.to_dict()
    for fraction in fractions:
        report = trainer.fine_tune_few_shot(checkpoint, target_dir, fraction, cfg)
        series["reports"].append(report.to_dict())
    if out_path is not None:
        write_json(out_path, series)
    return series


def generalization_report(
    base_config: ScenarioConfig,
    workdir: str | Path,
    model_config: Optional[ModelConfig] = None,
    train_config=None,
    fractions: Sequence[float] = FEW_SHOT_FRACTIONS,
) -> dict:
    """Full transfer protocol: train on source, few-shot grid on target.

    Generates the source/target datasets for each case under ``workdir``;
    sizing comes from ``base_config.snapshots``. Heavyweight; size the
    config to the runtime budget.
    """
    from . import trainer
    from .scenegen.dataset import generate_dataset

    workdir = Path(workdir)
    report: dict = {"cases": {}}
    for case, (src_cfg, tgt_cfg) in generalization_pairs(base_config).items():
        case_dir = workdir / case
        src_dir, tgt_dir = case_dir / "source", case_dir / "target"
        generate_dataset(src_cfg, src_dir)
        generate_dataset(tgt_cfg, tgt_dir)
        result = trainer.train(
            src_dir,
            model_config or ModelConfig(),
            train_config or trainer.TrainConfig(),
            case_dir / "train",
        )
        series = few_shot_grid(result.best_checkpoint, tgt_dir, train_config, fractions)
        report["cases"][case] = series
    write_json(workdir / "generalization_report.json", report)
    return report


# -- plot-ready series ----------------------------------------------------


def pdp_traces(data_dir: str | Path, indices: Sequence[int]) -> list[dict]:
    """Impulse PDPs for selected snapshots, delays in ns."""
    out = []
    for i in indices:
        entry = pdp(read_snapshot(data_dir, i).multipath)
        out.append(
            {
                "snapshot": int(i),
                "delay_ns": [float(d * 1e9) for d in entry.delays_s],
                "power_w": [float(p) for p in entry.powers_w],
            }
        )
    return out


def rms_delay_spread_cdf(data_dir: str | Path, split: str = "test") -> dict:
    """Empirical CDF of per-snapshot RMS delay spread over a split."""
    manifest = load_manifest(data_dir)
    values = []
    skipped = 0
    for i in manifest.split_indices(split):
        entry = pdp(read_snapshot(data_dir, i).multipath)
        if entry.total_power_w <= 0:
            skipped += 1
            continue
        values.append(rms_delay_spread(entry) * 1e9)
    values.sort()
    n = len(values)
    return {
        "split": split,
        "values_ns": [float(v) for v in values],
        "cdf": [float((k + 1) / n) for k in range(n)] if n else [],
        "skipped": skipped,
    }


def fcf_trace(
    data_dir: str | Path, index: int, max_delta_f_hz: float, points: int = 201
) -> dict:
    """Normalized |FCF| over a symmetric frequency-offset grid."""
    grid = np.linspace(0.0, max_delta_f_hz, points)
    entry = pdp(read_snapshot(data_dir, index).multipath)
    mag = normalized_fcf(entry, grid)
    return {
        "snapshot": int(index),
        "delta_f_hz": [float(f) for f in grid],
        "normalized_magnitude": [float(m) for m in mag],
    }


def capacity_bars(
    data_dir: str | Path, cfg: CapacityConfig, split: str = "test"
) -> dict:
    """Mean and per-snapshot Shannon capacity over a split."""
    manifest = load_manifest(data_dir)
    values = []
    for i in manifest.split_indices(split):
        mp = read_snapshot(data_dir, i).multipath
        if not mp.valid.any():
            continue
        values.append(channel_capacity(mp, dataclasses.replace(cfg, seed=cfg.seed + int(i))))
    return {
        "split": split,
        "capacity_bps": [float(v) for v in values],
        "mean_bps": float(np.mean(values)) if values else 0.0,
    }
