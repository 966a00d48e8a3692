"""Channel-statistics tests: PDP moments, FCF, CIR synthesis, capacity."""

from __future__ import annotations

import cmath
import math

import numpy as np
import pytest

from som_multipath.chanstats import (
    CapacityConfig,
    PdpEntry,
    capacity_details,
    channel_capacity,
    fcf,
    normalized_fcf,
    pdp,
    rms_delay_spread,
    segment_frequencies,
    synthesize_cir,
)
from som_multipath.errors import ConfigurationError, DomainError
from som_multipath.scenegen.raytrace import MultipathSet


def _mpset(powers_w, delays_s, los=True):
    """Synthetic MultipathSet from absolute powers (desc-sorted internally)."""
    p = np.asarray(powers_w, dtype=np.float64)
    d = np.asarray(delays_s, dtype=np.float64)
    order = np.argsort(-p, kind="stable")
    p, d = p[order], d[order]
    total = float(p.sum())
    return MultipathSet(
        power_ratio=p / total,
        delay_s=d,
        valid=np.ones(p.shape[0], dtype=bool),
        los_present=los,
        total_power_w=total,
    )


def _brute_fcf(entry: PdpEntry, df: float) -> complex:
    """Scalar-python independent recomputation of xi(df)."""
    acc = 0j
    for p, tau in zip(entry.powers_w.tolist(), entry.delays_s.tolist()):
        acc += p * cmath.exp(-2j * cmath.pi * df * tau)
    return acc


class TestRmsDelaySpread:
    def test_single_path_is_zero(self):
        entry = PdpEntry(delays_s=np.array([5e-8]), powers_w=np.array([1e-9]))
        assert rms_delay_spread(entry) == pytest.approx(0.0, abs=1e-18)

    def test_equal_split_hand_case(self):
        # equal powers at 0 and 100 ns -> 50 ns
        entry = PdpEntry(delays_s=np.array([0.0, 100e-9]), powers_w=np.array([0.5, 0.5]))
        assert rms_delay_spread(entry) == pytest.approx(50e-9, rel=1e-12)

    def test_unequal_split_hand_case(self):
        # P=(0.9, 0.1) at 0/100 ns: var = 1000 - 100 ns^2 -> 30 ns
        entry = PdpEntry(delays_s=np.array([0.0, 100e-9]), powers_w=np.array([0.9, 0.1]))
        assert rms_delay_spread(entry) == pytest.approx(30e-9, rel=1e-12)

    def test_delay_shift_invariance(self):
        rng = np.random.default_rng(3)
        delays = rng.uniform(1e-9, 5e-7, size=6)
        powers = rng.uniform(1e-12, 1e-9, size=6)
        a = rms_delay_spread(PdpEntry(delays_s=delays, powers_w=powers))
        b = rms_delay_spread(PdpEntry(delays_s=delays + 1e-6, powers_w=powers))
        assert b == pytest.approx(a, rel=1e-9)

    def test_power_scale_invariance(self):
        entry = PdpEntry(delays_s=np.array([1e-8, 9e-8]), powers_w=np.array([0.7, 0.3]))
        scaled = PdpEntry(delays_s=entry.delays_s, powers_w=entry.powers_w * 5e-7)
        assert rms_delay_spread(scaled) == pytest.approx(rms_delay_spread(entry), rel=1e-12)

    def test_zero_power_rejected(self):
        entry = PdpEntry(delays_s=np.array([1e-8]), powers_w=np.array([0.0]))
        with pytest.raises(DomainError):
            rms_delay_spread(entry)


class TestFcf:
    def test_zero_offset_gives_total_power(self):
        entry = PdpEntry(delays_s=np.array([1e-8, 4e-8]), powers_w=np.array([2e-9, 1e-9]))
        assert fcf(entry, [0.0])[0] == pytest.approx(3e-9, rel=1e-12)
        assert normalized_fcf(entry, [0.0])[0] == pytest.approx(1.0, rel=1e-12)

    def test_two_path_null(self):
        # equal powers, delta tau = 10 ns -> null at 1/(2 tau) = 50 MHz
        entry = PdpEntry(delays_s=np.array([0.0, 10e-9]), powers_w=np.array([0.5, 0.5]))
        assert abs(normalized_fcf(entry, [50e6])[0]) < 1e-9

    def test_matches_brute_force(self):
        rng = np.random.default_rng(11)
        entry = PdpEntry(
            delays_s=rng.uniform(1e-9, 3e-7, size=8),
            powers_w=rng.uniform(1e-12, 1e-9, size=8),
        )
        grid = np.linspace(0.0, 2e8, 17)
        vec = fcf(entry, grid)
        for k, df in enumerate(grid.tolist()):
            ref = _brute_fcf(entry, df)
            assert abs(vec[k] - ref) <= 1e-9 * max(abs(ref), entry.total_power_w)

    def test_magnitude_bounded_by_dc(self):
        rng = np.random.default_rng(5)
        entry = PdpEntry(
            delays_s=rng.uniform(1e-9, 5e-7, size=10),
            powers_w=rng.uniform(1e-12, 1e-9, size=10),
        )
        mags = normalized_fcf(entry, np.linspace(0, 1e9, 301))
        assert np.all(mags <= 1.0 + 1e-12)

    def test_delay_shift_preserves_magnitude(self):
        rng = np.random.default_rng(9)
        delays = rng.uniform(1e-9, 3e-7, size=5)
        powers = rng.uniform(1e-12, 1e-9, size=5)
        grid = np.linspace(0, 5e8, 50)
        a = normalized_fcf(PdpEntry(delays_s=delays, powers_w=powers), grid)
        b = normalized_fcf(PdpEntry(delays_s=delays + 2e-7, powers_w=powers), grid)
        np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)

    def test_power_scaling(self):
        entry = PdpEntry(delays_s=np.array([1e-8, 6e-8]), powers_w=np.array([0.6, 0.4]))
        grid = np.array([0.0, 1e7, 5e7])
        scaled = PdpEntry(delays_s=entry.delays_s, powers_w=entry.powers_w * 3.0)
        np.testing.assert_allclose(fcf(scaled, grid), 3.0 * fcf(entry, grid), rtol=1e-12)
        np.testing.assert_allclose(
            normalized_fcf(scaled, grid), normalized_fcf(entry, grid), rtol=1e-12
        )

    def test_validation(self):
        entry = PdpEntry(delays_s=np.array([1e-8]), powers_w=np.array([1e-9]))
        with pytest.raises(DomainError):
            fcf(entry, [np.nan])
        with pytest.raises(DomainError):
            normalized_fcf(PdpEntry(delays_s=np.array([1e-8]), powers_w=np.array([0.0])), [0.0])


class TestPdpEntry:
    def test_pdp_extracts_valid_paths(self):
        paths = MultipathSet(
            power_ratio=np.array([0.75, 0.25, 0.0]),
            delay_s=np.array([1e-8, 3e-8, 0.0]),
            valid=np.array([True, True, False]),
            los_present=True,
            total_power_w=4e-9,
        )
        entry = pdp(paths)
        np.testing.assert_allclose(entry.powers_w, [3e-9, 1e-9], rtol=1e-12)
        np.testing.assert_allclose(entry.delays_s, [1e-8, 3e-8], rtol=1e-12)
        assert entry.total_power_w == pytest.approx(4e-9, rel=1e-12)

    def test_validation(self):
        with pytest.raises(DomainError):
            PdpEntry(delays_s=np.array([1e-8, 2e-8]), powers_w=np.array([1e-9]))
        with pytest.raises(DomainError):
            PdpEntry(delays_s=np.array([-1e-8]), powers_w=np.array([1e-9]))
        with pytest.raises(DomainError):
            PdpEntry(delays_s=np.array([1e-8]), powers_w=np.array([np.inf]))


class TestSynthesis:
    def test_tap_power_matches_path_power(self):
        paths = _mpset([3e-9, 2e-9, 1e-9], [1e-8, 2e-8, 3e-8])
        taps = synthesize_cir(paths, seed=4)
        np.testing.assert_allclose(np.abs(taps) ** 2, [3e-9, 2e-9, 1e-9], rtol=1e-12)

    def test_seed_determinism(self):
        paths = _mpset([2e-9, 1e-9], [1e-8, 2e-8])
        a = synthesize_cir(paths, seed=12)
        b = synthesize_cir(paths, seed=12)
        c = synthesize_cir(paths, seed=13)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_phase_distribution_uniform(self):
        n = 10_000
        paths = _mpset(np.full(n, 1e-9), np.linspace(1e-9, 1e-6, n))
        phases = np.angle(synthesize_cir(paths, seed=0)) % (2.0 * np.pi)
        u = np.sort(phases) / (2.0 * np.pi)
        i = np.arange(1, n + 1)
        ks = max(np.max(i / n - u), np.max(u - (i - 1) / n))
        assert ks < 0.02


class TestCapacity:
    def test_segment_frequencies_hand_case(self):
        cfg = CapacityConfig(bandwidth_hz=100.0, segments=4)
        np.testing.assert_allclose(
            segment_frequencies(cfg), [-37.5, -12.5, 12.5, 37.5], rtol=1e-12
        )
        single = CapacityConfig(bandwidth_hz=100.0, segments=1)
        assert segment_frequencies(single)[0] == pytest.approx(0.0, abs=1e-12)

    def test_frequency_grid_symmetric(self):
        cfg = CapacityConfig(bandwidth_hz=2e9, segments=128)
        freqs = segment_frequencies(cfg)
        np.testing.assert_allclose(freqs, -freqs[::-1], rtol=1e-12)
        assert freqs.shape == (128,)

    def test_noise_psd_conversion(self):
        cfg = CapacityConfig(bandwidth_hz=1e6)
        assert cfg.noise_psd_w_per_hz == pytest.approx(10.0 ** (-20.4), rel=1e-12)

    def test_snr_hand_case(self):
        # single 5 pW path over 1 MHz at -174 dBm/Hz: gamma = 5e-12/10^-14.4
        paths = _mpset([5e-12], [1e-8])
        cfg = CapacityConfig(bandwidth_hz=1e6, segments=1, seed=2)
        details = capacity_details(paths, cfg)
        assert details["segment_snr"][0] == pytest.approx(5.0 * 10.0**2.4, rel=1e-9)
        assert details["segment_power_w"][0] == pytest.approx(5e-12, rel=1e-9)

    def test_flat_channel_closed_form(self):
        # one path -> |H(f)|^2 = P everywhere -> C = B log2(1 + gamma)
        power = 2e-12
        paths = _mpset([power], [3e-8])
        for segments in (1, 16, 128):
            cfg = CapacityConfig(bandwidth_hz=5e7, segments=segments, seed=6)
            gamma = power / (cfg.noise_psd_w_per_hz * cfg.bandwidth_hz)
            expected = cfg.bandwidth_hz * math.log2(1.0 + gamma)
            assert channel_capacity(paths, cfg) == pytest.approx(expected, rel=1e-9)

    def test_capacity_monotone_in_power(self):
        delays = [1e-8, 4e-8, 9e-8]
        weak = _mpset([2e-12, 1e-12, 5e-13], delays)
        strong = _mpset([2e-10, 1e-10, 5e-11], delays)
        cfg = CapacityConfig(bandwidth_hz=1e8, segments=64, seed=1)
        assert channel_capacity(strong, cfg) > channel_capacity(weak, cfg)

    def test_details_consistency(self):
        paths = _mpset([3e-12, 1e-12], [2e-8, 7e-8])
        cfg = CapacityConfig(bandwidth_hz=1e8, segments=32, seed=9)
        details = capacity_details(paths, cfg)
        assert len(details["frequencies_hz"]) == 32
        assert len(details["segment_power_w"]) == 32
        assert len(details["segment_snr"]) == 32
        assert channel_capacity(paths, cfg) == pytest.approx(
            details["capacity_bps"], rel=1e-12
        )
        # recompute the sum from the published per-segment SNRs
        manual = cfg.bandwidth_hz / cfg.segments * sum(
            math.log2(1.0 + g) for g in details["segment_snr"]
        )
        assert details["capacity_bps"] == pytest.approx(manual, rel=1e-12)

    def test_config_validation(self):
        with pytest.raises(ConfigurationError):
            CapacityConfig(bandwidth_hz=0.0)
        with pytest.raises(ConfigurationError):
            CapacityConfig(bandwidth_hz=1e6, segments=0)
