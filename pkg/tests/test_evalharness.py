"""Metric, baseline, protocol, and plot-series tests for the eval harness."""

from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest
import torch

from som_multipath.chanstats import CapacityConfig
from som_multipath.errors import DomainError
from som_multipath.evalharness import (
    FEW_SHOT_FRACTIONS,
    GENERALIZATION_CASES,
    MetricsReport,
    baseline_report,
    capacity_bars,
    classification_accuracy,
    evaluate,
    fcf_trace,
    generalization_pairs,
    mean_baseline,
    nmae_nmse,
    pdp_traces,
    predict_split,
    rms_delay_spread_cdf,
)
from som_multipath.jsonutil import read_json
from som_multipath.model import MultipathModel
from som_multipath.scenegen.config import MMWAVE_BAND, SUB6_BAND
from som_multipath.scenegen.dataset import read_snapshot
from som_multipath.trainer import TrainConfig, save_checkpoint


def _naive_metrics(pred, truth, valid):
    """Scalar-python recomputation of the per-snapshot normalized errors."""
    nmae, nmse, skipped = [], [], 0
    for t in range(truth.shape[0]):
        abs_norm = sq_norm = abs_err = sq_err = 0.0
        for n in range(truth.shape[1]):
            if not valid[t, n]:
                continue
            g, p = float(truth[t, n]), float(pred[t, n])
            abs_norm += abs(g)
            sq_norm += g * g
            abs_err += abs(p - g)
            sq_err += (p - g) ** 2
        if abs_norm == 0.0 or sq_norm == 0.0:
            skipped += 1
            continue
        nmae.append(abs_err / abs_norm)
        nmse.append(sq_err / sq_norm)
    mean = lambda xs: sum(xs) / len(xs) if xs else 0.0
    return mean(nmae), mean(nmse), skipped


class TestAccuracy:
    def test_probability_argmax(self):
        probs = np.array([[0.9, 0.1], [0.2, 0.8], [0.4, 0.6], [0.7, 0.3]])
        labels = np.array([0, 1, 0, 0])
        assert classification_accuracy(probs, labels) == pytest.approx(0.75, rel=1e-12)

    def test_label_arrays(self):
        assert classification_accuracy(np.array([1, 0, 1]), np.array([1, 1, 1])) == pytest.approx(
            2 / 3, rel=1e-12
        )

    def test_validation(self):
        with pytest.raises(DomainError):
            classification_accuracy(np.zeros((0, 2)), np.zeros(0))
        with pytest.raises(DomainError):
            classification_accuracy(np.array([1, 0]), np.array([1, 0, 1]))


class TestNmaeNmse:
    def test_pinned_hand_case(self):
        truth = np.array([[0.6, 0.4]])
        pred = np.array([[0.5, 0.5]])
        valid = np.ones((1, 2), dtype=bool)
        report = nmae_nmse(pred, truth, pred, truth, valid)
        assert report.nmae_power == pytest.approx(0.2, abs=1e-9)
        assert report.nmse_power == pytest.approx(0.02 / 0.52, abs=1e-9)
        assert report.nmse_power == pytest.approx(0.03846, abs=5e-6)

    def test_matches_naive_recomputation(self):
        rng = np.random.default_rng(17)
        t, n = 9, 6
        truth = rng.uniform(0.0, 1.0, size=(t, n))
        pred = rng.uniform(0.0, 1.0, size=(t, n))
        valid = rng.uniform(size=(t, n)) < 0.7
        truth[2, valid[2]] = 0.0  # forces one skipped snapshot
        valid[5] = False  # empty valid set is also skipped
        report = nmae_nmse(pred, truth, pred, truth, valid)
        nmae, nmse, skipped = _naive_metrics(pred, truth, valid)
        assert report.nmae_power == pytest.approx(nmae, rel=1e-12, abs=1e-15)
        assert report.nmse_power == pytest.approx(nmse, rel=1e-12, abs=1e-15)
        assert report.skipped_power == skipped
        assert report.skipped_delay == skipped
        assert report.snapshots == t

    def test_scale_invariance(self):
        rng = np.random.default_rng(23)
        truth = rng.uniform(0.1, 1.0, size=(4, 5))
        pred = rng.uniform(0.1, 1.0, size=(4, 5))
        valid = np.ones((4, 5), dtype=bool)
        a = nmae_nmse(pred, truth, pred, truth, valid)
        b = nmae_nmse(pred * 37.0, truth * 37.0, pred, truth, valid)
        assert b.nmae_power == pytest.approx(a.nmae_power, rel=1e-12)
        assert b.nmse_power == pytest.approx(a.nmse_power, rel=1e-12)

    def test_accuracy_wiring(self):
        truth = np.array([[0.6, 0.4]])
        valid = np.ones((1, 2), dtype=bool)
        los_prob = np.array([[0.3, 0.7]])
        with_labels = nmae_nmse(truth, truth, truth, truth, valid,
                                los_prob=los_prob, los_labels=np.array([1]))
        assert with_labels.accuracy == 1.0
        assert with_labels.breakdown["has_labels"] is True
        without = nmae_nmse(truth, truth, truth, truth, valid)
        assert without.accuracy == 0.0
        assert without.breakdown["has_labels"] is False

    def test_shape_mismatch(self):
        a = np.zeros((2, 3))
        with pytest.raises(DomainError):
            nmae_nmse(a, a, a, np.zeros((2, 4)), np.ones((2, 3), dtype=bool))

    def test_report_validation(self):
        with pytest.raises(DomainError):
            MetricsReport(accuracy=1.2, nmae_power=0, nmse_power=0,
                          nmae_delay=0, nmse_delay=0, snapshots=1)
        with pytest.raises(DomainError):
            MetricsReport(accuracy=0.5, nmae_power=-0.1, nmse_power=0,
                          nmae_delay=0, nmse_delay=0, snapshots=1)


@pytest.fixture(scope="module")
def records(session_dataset):
    data_dir, manifest = session_dataset
    return [read_snapshot(data_dir, i) for i in range(manifest.n_snapshots)]


class TestBaseline:
    def test_mean_baseline_formula(self, records):
        n_paths, tau = 6, 500.0
        base = mean_baseline(records, n_paths, tau)
        for slot in range(n_paths):
            powers = [r.multipath.power_ratio[slot] for r in records
                      if slot < r.multipath.n_paths]
            delays = [r.multipath.delay_s[slot] * 1e9 / tau for r in records
                      if slot < r.multipath.n_paths]
            if powers:
                assert base["power"][slot] == pytest.approx(np.mean(powers), rel=1e-9)
                assert base["delay"][slot] == pytest.approx(np.mean(delays), rel=1e-9)
            else:
                assert base["power"][slot] == 0.0
                assert base["delay"][slot] == 0.0
        labels = [int(r.multipath.los_present) for r in records]
        assert base["majority_label"] == int(np.bincount(labels, minlength=2).argmax())

    def test_baseline_report_scores_tiled_predictor(self, records):
        n_paths, tau = 6, 500.0
        base = mean_baseline(records, n_paths, tau)
        t = len(records)
        truth_p = np.stack([np.pad(r.multipath.power_ratio[:n_paths],
                                   (0, n_paths - min(r.multipath.n_paths, n_paths)))
                            for r in records])
        truth_d = np.stack([np.pad(r.multipath.delay_s[:n_paths] * 1e9 / tau,
                                   (0, n_paths - min(r.multipath.n_paths, n_paths)))
                            for r in records])
        valid = np.stack([np.arange(n_paths) < r.multipath.n_paths for r in records])
        labels = np.array([int(r.multipath.los_present) for r in records])
        predictions = {
            "power_truth": truth_p, "delay_truth": truth_d,
            "valid": valid, "los_labels": labels,
        }
        report = baseline_report(base, predictions)
        expected = nmae_nmse(
            np.tile(base["power"], (t, 1)), truth_p,
            np.tile(base["delay"], (t, 1)), truth_d, valid,
        )
        assert report.nmae_power == pytest.approx(expected.nmae_power, rel=1e-12)
        assert report.nmse_delay == pytest.approx(expected.nmse_delay, rel=1e-12)
        majority_acc = float((labels == base["majority_label"]).mean())
        assert report.accuracy == pytest.approx(majority_acc, rel=1e-12)


class TestPredictAndEvaluate:
    def test_predict_split_batch_size_invariance(self, records, tiny_model_config):
        torch.manual_seed(2)
        model = MultipathModel(tiny_model_config)
        small = predict_split(model, records, batch_size=2)
        large = predict_split(model, records, batch_size=len(records))
        for key in small:
            np.testing.assert_allclose(small[key], large[key], atol=1e-5)

    def test_predict_split_empty(self, tiny_model_config):
        with pytest.raises(DomainError):
            predict_split(MultipathModel(tiny_model_config), [])

    def test_evaluate_writes_artifacts(self, session_dataset, records, tiny_model_config, tmp_path):
        data_dir, manifest = session_dataset
        torch.manual_seed(4)
        model = MultipathModel(tiny_model_config)
        save_checkpoint(tmp_path / "ck", model, TrainConfig(), {"kind": "best"})
        report, base = evaluate(
            tmp_path / "ck", data_dir, split="test",
            predictions_path=tmp_path / "pred.json",
            report_path=tmp_path / "report.json",
        )
        test_records = [read_snapshot(data_dir, i) for i in manifest.split_indices("test")]
        preds = predict_split(model, test_records)
        direct = nmae_nmse(
            preds["power_pred"], preds["power_truth"],
            preds["delay_pred"], preds["delay_truth"], preds["valid"],
            los_prob=preds["los_prob"], los_labels=preds["los_labels"],
        )
        assert report.to_dict() == direct.to_dict()
        payload = read_json(tmp_path / "pred.json")
        assert payload["split"] == "test"
        assert len(payload["snapshots"]) == len(test_records)
        row = payload["snapshots"][0]
        assert set(row) >= {"los_prob", "pred_label", "true_label",
                            "power_pred", "delay_pred_ns", "valid"}
        on_disk = read_json(tmp_path / "report.json")
        assert on_disk["model"] == report.to_dict()
        assert on_disk["baseline"] == base.to_dict()


class TestProtocol:
    def test_few_shot_fraction_grid(self):
        assert FEW_SHOT_FRACTIONS == (0.0025, 0.005, 0.01, 0.014, 0.016)

    def test_generalization_cases(self, tiny_config):
        assert GENERALIZATION_CASES == ("cross_vtd", "cross_band", "cross_scenario")
        pairs = generalization_pairs(tiny_config)
        assert set(pairs) == set(GENERALIZATION_CASES)
        src, tgt = pairs["cross_vtd"]
        assert (src.vtd, tgt.vtd) == ("low", "high")
        assert tgt.seed == tiny_config.seed + 101
        src, tgt = pairs["cross_band"]
        assert src.band == MMWAVE_BAND and tgt.band == SUB6_BAND
        assert tgt.seed == tiny_config.seed + 202
        src, tgt = pairs["cross_scenario"]
        assert (src.scenario_kind, tgt.scenario_kind) == ("urban", "suburban")
        assert tgt.seed == tiny_config.seed + 303
        for a, b in pairs.values():
            assert a.road_length_m == b.road_length_m == tiny_config.road_length_m
            assert a.snapshots == b.snapshots == tiny_config.snapshots


class TestPlotSeries:
    def test_pdp_traces(self, session_dataset):
        data_dir, _ = session_dataset
        traces = pdp_traces(data_dir, [0, 2])
        assert [t["snapshot"] for t in traces] == [0, 2]
        for trace in traces:
            assert len(trace["delay_ns"]) == len(trace["power_w"])
            assert all(p >= 0 for p in trace["power_w"])
            rec = read_snapshot(data_dir, trace["snapshot"])
            assert len(trace["delay_ns"]) == rec.multipath.n_paths

    def test_rms_cdf(self, session_dataset):
        data_dir, manifest = session_dataset
        out = rms_delay_spread_cdf(data_dir, split="train")
        n = len(out["values_ns"])
        assert n + out["skipped"] == len(manifest.split_indices("train"))
        assert out["values_ns"] == sorted(out["values_ns"])
        if n:
            assert out["cdf"][-1] == pytest.approx(1.0, rel=1e-12)
            assert all(0 < c <= 1 for c in out["cdf"])

    def test_fcf_trace(self, session_dataset):
        data_dir, _ = session_dataset
        trace = fcf_trace(data_dir, 0, max_delta_f_hz=1e8, points=33)
        assert len(trace["delta_f_hz"]) == 33
        assert trace["delta_f_hz"][0] == 0.0
        assert trace["normalized_magnitude"][0] == pytest.approx(1.0, rel=1e-9)
        assert all(m <= 1.0 + 1e-9 for m in trace["normalized_magnitude"])

    def test_capacity_bars(self, session_dataset):
        data_dir, manifest = session_dataset
        cfg = CapacityConfig(bandwidth_hz=1e8, segments=16, seed=5)
        out = capacity_bars(data_dir, cfg, split="train")
        assert len(out["capacity_bps"]) <= len(manifest.split_indices("train"))
        if out["capacity_bps"]:
            assert all(v > 0 for v in out["capacity_bps"])
            assert out["mean_bps"] == pytest.approx(
                float(np.mean(out["capacity_bps"])), rel=1e-12
            )
