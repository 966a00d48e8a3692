"""Command-line entry point: one subcommand per workflow.

Exit codes: 0 on success, 1 on runtime errors (message on stderr), 2 on
usage errors (argparse prints usage). Every command records a
``resolved_config.json`` into its output directory so the run can be
reproduced byte-exactly. ``SOM_MULTIPATH_THREADS`` caps internal
parallelism (0 or unset picks a platform default).
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import SomMultipathError
from .jsonutil import read_json, write_json
from .model import ModelConfig, VARIANTS


def _thread_cap() -> Optional[int]:
    raw = os.environ.get("SOM_MULTIPATH_THREADS")
    if raw is None:
        return None
    try:
        value = int(raw)
    except ValueError as exc:
        raise SomMultipathError(f"SOM_MULTIPATH_THREADS={raw!r} is not an integer") from exc
    if value < 0:
        raise SomMultipathError("SOM_MULTIPATH_THREADS must be >= 0")
    return (os.cpu_count() or 1) if value == 0 else value


def _scenario_config(path: Optional[str], snapshots: Optional[int], seed: Optional[int]):
    from .scenegen import ScenarioConfig
    from .scenegen.config import SUB6_BAND

    if path is not None:
        cfg = ScenarioConfig.from_dict(read_json(path))
    else:
        cfg = ScenarioConfig(scenario_kind="urban", vtd="high", band=SUB6_BAND)
    if snapshots is not None:
        cfg = dataclasses.replace(cfg, snapshots=snapshots)
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    return cfg


def _model_config(path: Optional[str]) -> ModelConfig:
    return ModelConfig() if path is None else ModelConfig.from_dict(read_json(path))


def _train_config(path: Optional[str], seed: Optional[int]):
    from .trainer import TrainConfig

    cfg = TrainConfig() if path is None else TrainConfig.from_dict(read_json(path))
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    return cfg


def _cmd_generate(args: argparse.Namespace) -> int:
    from .scenegen.dataset import generate_dataset

    cfg = _scenario_config(args.config, args.snapshots, args.seed)
    threads = _thread_cap() or 1
    generate_dataset(cfg, args.out, overwrite=args.force, threads=threads)
    write_json(
        Path(args.out) / "resolved_config.json",
        {"command": "generate", "scenario": cfg.to_dict(), "seed": cfg.seed},
    )
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    from .trainer import train

    model_cfg = _model_config(args.model_config)
    train_cfg = _train_config(args.train_config, args.seed)
    result = train(args.data, model_cfg, train_cfg, args.out)
    print(f"best epoch {result.best_epoch} val_loss {result.best_val_loss:.6f}")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    from .evalharness import evaluate

    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    predictions = args.predictions or str(report_path.with_name("predictions.json"))
    report, baseline = evaluate(
        args.ckpt, args.data, split=args.split,
        predictions_path=predictions, report_path=report_path,
    )
    write_json(
        report_path.parent / "resolved_config.json",
        {
            "command": "evaluate",
            "checkpoint": str(args.ckpt),
            "data_dir": str(args.data),
            "split": args.split,
        },
    )
    print(
        f"accuracy {report.accuracy:.4f} (baseline {baseline.accuracy:.4f}) "
        f"nmse_power {report.nmse_power:.4f} nmse_delay {report.nmse_delay:.4f}"
    )
    return 0


def _cmd_finetune(args: argparse.Namespace) -> int:
    from .trainer import fine_tune_few_shot

    cfg = _train_config(args.train_config, args.seed)
    report = fine_tune_few_shot(
        args.ckpt, args.data, args.fraction, cfg,
        out_dir=args.out, mix_data_dir=args.mix_data,
    )
    print(
        f"fraction {args.fraction} accuracy {report.accuracy:.4f} "
        f"nmse_power {report.nmse_power:.4f} nmse_delay {report.nmse_delay:.4f}"
    )
    return 0


def _read_pdp_csv(path: str | Path):
    """paths.csv -> PdpEntry; tolerates any delay >= 0 on valid rows."""
    import csv

    from .chanstats import PdpEntry

    with open(path, newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if int(r["valid"])]
    if not rows:
        raise SomMultipathError(f"{path} holds no valid paths")
    delays = np.array([float(r["delay_ns"]) * 1e-9 for r in rows])
    powers = np.array([float(r["power_ratio"]) * float(r["total_power_w"]) for r in rows])
    return PdpEntry(delays_s=delays, powers_w=powers)


def _cmd_stats(args: argparse.Namespace) -> int:
    from .chanstats import fcf, normalized_fcf, rms_delay_spread

    entry = _read_pdp_csv(args.paths)
    grid = np.linspace(0.0, args.max_delta_f_hz, args.fcf_points)
    payload = {
        "paths_file": str(args.paths),
        "pdp": {
            "delay_ns": [float(d * 1e9) for d in entry.delays_s],
            "power_w": [float(p) for p in entry.powers_w],
        },
        "rms_delay_spread_ns": float(rms_delay_spread(entry) * 1e9),
        "fcf": {
            "delta_f_hz": [float(f) for f in grid],
            "normalized_magnitude": [float(m) for m in normalized_fcf(entry, grid)],
            "zero_offset_value_w": float(abs(fcf(entry, [0.0])[0])),
        },
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_json(out, payload)
    write_json(
        out.parent / "resolved_config.json",
        {
            "command": "stats",
            "paths": str(args.paths),
            "max_delta_f_hz": args.max_delta_f_hz,
            "fcf_points": args.fcf_points,
        },
    )
    print(f"rms_delay_spread_ns {payload['rms_delay_spread_ns']}")
    return 0


def _cmd_capacity(args: argparse.Namespace) -> int:
    from .chanstats import CapacityConfig, channel_capacity
    from .scenegen.dataset import load_manifest, read_snapshot

    cfg = CapacityConfig(
        bandwidth_hz=args.bandwidth_mhz * 1e6,
        segments=args.segments,
        noise_psd_dbm_per_hz=args.noise_dbm_hz,
        seed=args.seed,
    )
    manifest = load_manifest(args.data)
    per_snapshot = []
    for index in range(manifest.n_snapshots):
        mp = read_snapshot(args.data, index).multipath
        if not mp.valid.any():
            per_snapshot.append({"snapshot": index, "capacity_bps": None})
            continue
        value = channel_capacity(mp, dataclasses.replace(cfg, seed=cfg.seed + index))
        per_snapshot.append({"snapshot": index, "capacity_bps": value})
    values = [row["capacity_bps"] for row in per_snapshot if row["capacity_bps"] is not None]
    payload = {
        "bandwidth_hz": cfg.bandwidth_hz,
        "segments": cfg.segments,
        "noise_psd_dbm_per_hz": cfg.noise_psd_dbm_per_hz,
        "seed": cfg.seed,
        "per_snapshot": per_snapshot,
        "mean_bps": float(np.mean(values)) if values else 0.0,
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_json(out, payload)
    write_json(
        out.parent / "resolved_config.json",
        {
            "command": "capacity",
            "data_dir": str(args.data),
            "bandwidth_mhz": args.bandwidth_mhz,
            "segments": args.segments,
            "noise_dbm_hz": args.noise_dbm_hz,
            "seed": args.seed,
        },
    )
    print(f"mean_capacity_bps {payload['mean_bps']}")
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    from .evalharness import run_ablation

    model_cfg = _model_config(args.model_config)
    train_cfg = _train_config(args.train_config, args.seed)
    report = run_ablation(args.variant, args.data, args.out, model_cfg, train_cfg)
    print(
        f"{args.variant}: accuracy {report.accuracy:.4f} "
        f"nmse_power {report.nmse_power:.4f} nmse_delay {report.nmse_delay:.4f}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="som-multipath",
        description="Synthetic V2I multipath dataset generation, training, and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic dataset")
    p.add_argument("--config", help="scenario config JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--snapshots", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--force", action="store_true", help="overwrite an existing dataset")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("train", help="train a model on a generated dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--model-config")
    p.add_argument("--train-config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a dataset split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--report", required=True)
    p.add_argument("--predictions")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("finetune", help="few-shot fine-tune on a target dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--fraction", type=float, required=True)
    p.add_argument("--mix-data")
    p.add_argument("--train-config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_finetune)

    p = sub.add_parser("stats", help="channel statistics from a paths.csv file")
    p.add_argument("--paths", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-delta-f-hz", type=float, default=100e6)
    p.add_argument("--fcf-points", type=int, default=201)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("capacity", help="Shannon capacity over a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--bandwidth-mhz", type=float, default=20.0)
    p.add_argument("--segments", type=int, default=128)
    p.add_argument("--noise-dbm-hz", type=float, default=-174.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_capacity)

    p = sub.add_parser("ablate", help="train and score one ablation variant")
    p.add_argument("--variant", required=True, choices=VARIANTS)
    p.add_argument("--data", required=True)
    p.add_argument("--model-config")
    p.add_argument("--train-config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ablate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        threads = _thread_cap()
        if threads is not None:
            import torch

            torch.set_num_threads(threads)
        return args.func(args)
    except (SomMultipathError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
