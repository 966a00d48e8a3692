"""CLI behavior: exit codes, artifacts, and a miniature end-to-end pipeline."""

from __future__ import annotations

import json
import subprocess
import sys

import pytest

from som_multipath.cli import main
from som_multipath.jsonutil import read_json, write_json
from som_multipath.scenegen.dataset import load_manifest


def _write_scenario_config(path, snapshots=5):
    from som_multipath.scenegen.config import SUB6_BAND, ScenarioConfig, SensorConfig

    cfg = ScenarioConfig(
        scenario_kind="urban",
        vtd="high",
        band=SUB6_BAND,
        road_length_m=60.0,
        snapshots=snapshots,
        seed=11,
        sensor=SensorConfig(image_width=16, image_height=9, lidar_azimuth_steps=16),
    )
    write_json(path, cfg.to_dict())
    return cfg


def _write_model_config(path, tiny_model_config):
    write_json(path, tiny_model_config.to_dict())


def _write_train_config(path, short_train_config):
    write_json(path, short_train_config.to_dict())


class TestExitCodes:
    def test_usage_error_is_2(self):
        with pytest.raises(SystemExit) as err:
            main([])
        assert err.value.code == 2
        with pytest.raises(SystemExit) as err:
            main(["frobnicate"])
        assert err.value.code == 2
        with pytest.raises(SystemExit) as err:
            main(["generate"])  # missing --out
        assert err.value.code == 2

    def test_runtime_error_is_1(self, tmp_path, capsys):
        missing = tmp_path / "nope"
        code = main(["capacity", "--data", str(missing), "--out", str(tmp_path / "o.json")])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_bad_thread_env_is_1(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("SOM_MULTIPATH_THREADS", "potato")
        code = main(["capacity", "--data", str(tmp_path), "--out", str(tmp_path / "o.json")])
        assert code == 1
        assert "SOM_MULTIPATH_THREADS" in capsys.readouterr().err
        monkeypatch.setenv("SOM_MULTIPATH_THREADS", "-2")
        assert main(["capacity", "--data", str(tmp_path), "--out", str(tmp_path / "o.json")]) == 1


class TestStats:
    def test_rms_hand_case(self, tmp_path, capsys):
        paths_csv = tmp_path / "paths.csv"
        paths_csv.write_text(
            "valid,delay_ns,power_ratio,total_power_w\n"
            "1,0.0,0.5,2e-09\n"
            "1,100.0,0.5,2e-09\n"
            "0,0.0,0.0,2e-09\n"
        )
        out = tmp_path / "stats.json"
        code = main(["stats", "--paths", str(paths_csv), "--out", str(out),
                     "--max-delta-f-hz", "1e8", "--fcf-points", "11"])
        assert code == 0
        assert "rms_delay_spread_ns 5" in capsys.readouterr().out
        payload = read_json(out)
        assert payload["rms_delay_spread_ns"] == pytest.approx(50.0, rel=1e-9)
        assert payload["fcf"]["normalized_magnitude"][0] == pytest.approx(1.0, rel=1e-9)
        assert payload["fcf"]["zero_offset_value_w"] == pytest.approx(2e-9, rel=1e-9)
        assert len(payload["fcf"]["delta_f_hz"]) == 11
        assert read_json(tmp_path / "resolved_config.json")["command"] == "stats"

    def test_no_valid_rows_is_error(self, tmp_path):
        paths_csv = tmp_path / "paths.csv"
        paths_csv.write_text("valid,delay_ns,power_ratio,total_power_w\n0,0.0,0.0,1e-09\n")
        assert main(["stats", "--paths", str(paths_csv), "--out", str(tmp_path / "o.json")]) == 1


class TestGenerate:
    def test_generate_refuse_force_cycle(self, tmp_path):
        cfg_path = tmp_path / "scenario.json"
        _write_scenario_config(cfg_path)
        out = tmp_path / "data"
        assert main(["generate", "--config", str(cfg_path), "--out", str(out)]) == 0
        manifest = load_manifest(out)
        assert manifest.n_snapshots == 5
        resolved = read_json(out / "resolved_config.json")
        assert resolved["command"] == "generate"
        assert resolved["scenario"]["snapshots"] == 5
        # refusing to overwrite without --force
        assert main(["generate", "--config", str(cfg_path), "--out", str(out)]) == 1
        assert main(["generate", "--config", str(cfg_path), "--out", str(out), "--force"]) == 0

    def test_snapshot_and_seed_overrides(self, tmp_path):
        cfg_path = tmp_path / "scenario.json"
        _write_scenario_config(cfg_path, snapshots=5)
        out = tmp_path / "data"
        code = main(["generate", "--config", str(cfg_path), "--out", str(out),
                     "--snapshots", "5", "--seed", "12"])
        assert code == 0
        assert read_json(out / "resolved_config.json")["seed"] == 12


class TestCapacity:
    def test_capacity_over_dataset(self, session_dataset, tmp_path, capsys):
        data_dir, manifest = session_dataset
        out = tmp_path / "capacity.json"
        code = main(["capacity", "--data", str(data_dir), "--out", str(out),
                     "--bandwidth-mhz", "20", "--segments", "16", "--seed", "3"])
        assert code == 0
        assert "mean_capacity_bps" in capsys.readouterr().out
        payload = read_json(out)
        assert len(payload["per_snapshot"]) == manifest.n_snapshots
        values = [row["capacity_bps"] for row in payload["per_snapshot"]
                  if row["capacity_bps"] is not None]
        if values:
            assert payload["mean_bps"] == pytest.approx(sum(values) / len(values), rel=1e-12)
        assert payload["bandwidth_hz"] == pytest.approx(20e6)
        assert read_json(tmp_path / "resolved_config.json")["command"] == "capacity"


class TestPipeline:
    def test_train_evaluate_finetune(self, session_dataset, tiny_model_config,
                                     short_train_config, tmp_path, capsys):
        data_dir, _ = session_dataset
        model_json = tmp_path / "model.json"
        train_json = tmp_path / "train.json"
        _write_model_config(model_json, tiny_model_config)
        _write_train_config(train_json, short_train_config)

        run_dir = tmp_path / "run"
        code = main(["train", "--data", str(data_dir), "--out", str(run_dir),
                     "--model-config", str(model_json), "--train-config", str(train_json)])
        assert code == 0
        assert "best epoch" in capsys.readouterr().out
        assert (run_dir / "checkpoint_best").is_dir()
        assert (run_dir / "metrics.jsonl").is_file()
        history = [json.loads(line) for line in
                   (run_dir / "metrics.jsonl").read_text().splitlines()]
        assert len(history) == short_train_config.epochs

        report_path = tmp_path / "eval" / "report.json"
        code = main(["evaluate", "--ckpt", str(run_dir / "checkpoint_best"),
                     "--data", str(data_dir), "--report", str(report_path)])
        assert code == 0
        assert "accuracy" in capsys.readouterr().out
        on_disk = read_json(report_path)
        assert set(on_disk) == {"model", "baseline", "split"}
        assert (report_path.parent / "predictions.json").is_file()
        assert read_json(report_path.parent / "resolved_config.json")["command"] == "evaluate"

        ft_dir = tmp_path / "ft"
        code = main(["finetune", "--ckpt", str(run_dir / "checkpoint_best"),
                     "--data", str(data_dir), "--fraction", "0.0",
                     "--train-config", str(train_json), "--out", str(ft_dir)])
        assert code == 0
        assert "fraction 0.0" in capsys.readouterr().out
        assert read_json(ft_dir / "report.json")["accuracy"] >= 0.0

    def test_train_seed_override_recorded(self, session_dataset, tiny_model_config,
                                          short_train_config, tmp_path):
        data_dir, _ = session_dataset
        model_json = tmp_path / "model.json"
        train_json = tmp_path / "train.json"
        _write_model_config(model_json, tiny_model_config)
        _write_train_config(train_json, short_train_config)
        run_dir = tmp_path / "run"
        code = main(["train", "--data", str(data_dir), "--out", str(run_dir),
                     "--model-config", str(model_json), "--train-config", str(train_json),
                     "--seed", "9"])
        assert code == 0
        assert read_json(run_dir / "resolved_config.json")["seed"] == 9


class TestEntryPoint:
    def test_console_script_help(self):
        proc = subprocess.run(
            [sys.executable, "-c",
             "import sys; from som_multipath.cli import main; sys.exit(main(['--help']))"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "som-multipath" in proc.stdout
        for command in ("generate", "train", "evaluate", "finetune",
                        "stats", "capacity", "ablate"):
            assert command in proc.stdout
