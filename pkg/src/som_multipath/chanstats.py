"""Channel statistics and synthesis from multipath sets.

From a traced :class:`~som_multipath.scenegen.raytrace.MultipathSet` this
module derives the delta-impulse power delay profile (PDP), its RMS delay
spread and frequency correlation function (FCF), random-phase channel
impulse/frequency responses, and Shannon capacity over uniform bandwidth
segments.

Conventions: the PDP is kept as an impulse list, not a binned histogram;
capacity segment centers sit at baseband offsets f_s = -B/2 + (s - 1/2)·B/S;
noise PSD is supplied in dBm/Hz and converted to W/Hz internally; the
per-segment SNR is gamma_s = P_s / (N0·B).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError
from .scenegen.raytrace import MultipathSet


@dataclass(frozen=True, eq=False)
class PdpEntry:
    """Impulse representation of one snapshot's PDP: power at each delay."""

    delays_s: np.ndarray
    powers_w: np.ndarray

    def __post_init__(self) -> None:
        d = np.asarray(self.delays_s, dtype=np.float64)
        p = np.asarray(self.powers_w, dtype=np.float64)
        if d.shape != p.shape or d.ndim != 1:
            raise DomainError("PDP delays and powers must be matching 1-D arrays")
        if not (np.isfinite(d).all() and np.isfinite(p).all()):
            raise DomainError("PDP entries must be finite")
        if (d < 0).any() or (p < 0).any():
            raise DomainError("PDP delays and powers must be non-negative")
        object.__setattr__(self, "delays_s", d)
        object.__setattr__(self, "powers_w", p)

    @property
    def total_power_w(self) -> float:
        return float(self.powers_w.sum())


@dataclass(frozen=True)
class CapacityConfig:
    """Shannon-capacity evaluation parameters."""

    bandwidth_hz: float
    segments: int = 128
    noise_psd_dbm_per_hz: float = -174.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.bandwidth_hz <= 0:
            raise ConfigurationError("bandwidth_hz must be > 0")
        if self.segments < 1:
            raise ConfigurationError("segments must be >= 1")

    @property
    def noise_psd_w_per_hz(self) -> float:
        return 10.0 ** ((self.noise_psd_dbm_per_hz - 30.0) / 10.0)


def pdp(paths: MultipathSet) -> PdpEntry:
    """One impulse per valid path at (delay, absolute power)."""
    keep = paths.valid
    return PdpEntry(
        delays_s=paths.delay_s[keep].astype(np.float64),
        powers_w=(paths.power_ratio[keep] * paths.total_power_w).astype(np.float64),
    )


def rms_delay_spread(entry: PdpEntry) -> float:
    """sqrt of the second central moment of the PDP, in seconds."""
    total = entry.total_power_w
    if total <= 0:
        raise DomainError("RMS delay spread needs positive total power")
    mean = float((entry.powers_w * entry.delays_s).sum()) / total
    second = float((entry.powers_w * entry.delays_s**2).sum()) / total
    return float(np.sqrt(max(second - mean**2, 0.0)))


def fcf(entry: PdpEntry, delta_f_hz: Sequence[float] | np.ndarray) -> np.ndarray:
    """Complex FCF xi(df) = sum_n P_n exp(-j 2 pi df tau_n)."""
    grid = np.asarray(delta_f_hz, dtype=np.float64)
    if not np.isfinite(grid).all():
        raise DomainError("frequency grid must be finite")
    phase = -2j * np.pi * grid[..., None] * entry.delays_s
    return (entry.powers_w * np.exp(phase)).sum(axis=-1)


def normalized_fcf(entry: PdpEntry, delta_f_hz: Sequence[float] | np.ndarray) -> np.ndarray:
    """|xi(df)| / xi(0); requires positive total power."""
    total = entry.total_power_w
    if total <= 0:
        raise DomainError("normalized FCF needs positive total power")
    return np.abs(fcf(entry, delta_f_hz)) / total


def synthesize_cir(paths: MultipathSet, seed: int) -> np.ndarray:
    """Complex taps sqrt(P_n)·exp(j phi_n), phases i.i.d. uniform [0, 2 pi)."""
    keep = paths.valid
    powers = paths.power_ratio[keep] * paths.total_power_w
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=powers.shape[0])
    return np.sqrt(powers) * (np.cos(phases) + 1j * np.sin(phases))


def segment_frequencies(cfg: CapacityConfig) -> np.ndarray:
    """Baseband centers f_s = -B/2 + (s - 1/2)·B/S for s = 1..S."""
    s = np.arange(1, cfg.segments + 1, dtype=np.float64)
    return -cfg.bandwidth_hz / 2.0 + (s - 0.5) * cfg.bandwidth_hz / cfg.segments


def capacity_details(paths: MultipathSet, cfg: CapacityConfig) -> dict:
    """Per-segment CFR power, SNR, and the capacity sum, as plain floats."""
    taps = synthesize_cir(paths, cfg.seed)
    delays = paths.delay_s[paths.valid]
    freqs = segment_frequencies(cfg)
    cfr = (taps * np.exp(-2j * np.pi * freqs[:, None] * delays)).sum(axis=1)
    p_s = np.abs(cfr) ** 2
    noise_w = cfg.noise_psd_w_per_hz * cfg.bandwidth_hz
    gamma = p_s / noise_w
    capacity = float(
        cfg.bandwidth_hz / cfg.segments * np.log2(1.0 + gamma).sum()
    )
    return {
        "frequencies_hz": freqs.tolist(),
        "segment_power_w": p_s.tolist(),
        "segment_snr": gamma.tolist(),
        "capacity_bps": capacity,
    }


def channel_capacity(paths: MultipathSet, cfg: CapacityConfig) -> float:
    """Shannon capacity C = (B/S) · sum_s log2(1 + gamma_s) in bit/s."""
    return capacity_details(paths, cfg)["capacity_bps"]
