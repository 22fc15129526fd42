"""Deterministic synthetic generators: SSVEP trials, shorted-input-style
noise records, 50 Hz common-mode injections, and DRDY timestamp logs.

All generators are pure functions of their parameter dataclass; randomness
comes from numpy's PCG64 generator seeded from the dataclass seed (the
algorithm identifier is exposed as PRNG_ALGORITHM so outputs can be labeled).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import AcquisitionConfig, Epoch, TimingLog, TrialRecording
from .errors import SynthError

PRNG_ALGORITHM = "numpy.random.PCG64"


@dataclass(frozen=True)
class SsvepSynthSpec:
    target_hz: float
    harmonic_amplitudes_uv: tuple = (1.0, 0.4)
    phase_rad: float = 0.0
    noise_rms_uv: float = 0.5
    duration_s: float = 5.0
    seed: int = 0
    config: AcquisitionConfig = field(default_factory=AcquisitionConfig)

    def __post_init__(self):
        nyq = self.config.sample_rate_hz / 2
        if not (0 < self.target_hz < nyq):
            raise SynthError(f"target_hz must lie in (0, {nyq}), got {self.target_hz}")
        if self.duration_s <= 0:
            raise SynthError(f"duration_s must be positive, got {self.duration_s}")
        if self.noise_rms_uv < 0:
            raise SynthError("noise_rms_uv must be non-negative")
        object.__setattr__(self, "harmonic_amplitudes_uv", tuple(self.harmonic_amplitudes_uv))


@dataclass(frozen=True)
class TimingSynthSpec:
    event_count: int
    nominal_period_us: float = 2000.0
    jitter_std_us: float = 0.0
    drift_ppm: float = 0.0
    seed: int = 0
    mode: str = "OFF"

    def __post_init__(self):
        if self.event_count < 2:
            raise SynthError(f"event_count must be >= 2, got {self.event_count}")
        if self.jitter_std_us < 0:
            raise SynthError("jitter_std_us must be non-negative")
        if self.nominal_period_us <= 0:
            raise SynthError("nominal_period_us must be positive")


def gen_ssvep_trial(spec: SsvepSynthSpec) -> TrialRecording:
    """Identical sinusoid-plus-harmonics signal on every channel, independent
    Gaussian noise per channel."""
    fs = spec.config.sample_rate_hz
    nyq = fs / 2
    for k in range(len(spec.harmonic_amplitudes_uv)):
        f_k = (k + 1) * spec.target_hz
        if f_k >= nyq:
            raise SynthError(f"aliasing: harmonic {k + 1} at {f_k} Hz is at or above Nyquist")
    n = int(round(spec.duration_s * fs))
    t = np.arange(n) / fs
    signal = np.zeros(n)
    for k, amp in enumerate(spec.harmonic_amplitudes_uv):
        signal += amp * np.sin(2 * np.pi * (k + 1) * spec.target_hz * t + spec.phase_rad)
    rng = np.random.default_rng(spec.seed)
    noise = rng.normal(0.0, spec.noise_rms_uv, size=(spec.config.channel_count, n)) \
        if spec.noise_rms_uv > 0 else np.zeros((spec.config.channel_count, n))
    epoch = Epoch(spec.config, signal[np.newaxis, :] + noise)
    return TrialRecording(epoch_full=epoch, true_label_hz=spec.target_hz)


def gen_noise_record(
    noise_rms_uv: float,
    duration_s: float,
    seed: int,
    config: AcquisitionConfig = AcquisitionConfig(),
) -> Epoch:
    """White Gaussian noise record, e.g. a shorted-input run."""
    if noise_rms_uv < 0:
        raise SynthError("noise_rms_uv must be non-negative")
    n = int(round(duration_s * config.sample_rate_hz))
    rng = np.random.default_rng(seed)
    return Epoch(config, rng.normal(0.0, noise_rms_uv, size=(config.channel_count, n)))


def gen_common_mode_record(
    base_noise_rms_uv: float,
    residual_50hz_rms_uv_per_channel: Sequence[float],
    duration_s: float,
    seed: int,
    config: AcquisitionConfig = AcquisitionConfig(),
    injection_hz: float = 50.0,
) -> Epoch:
    """Noise plus a 50 Hz component whose per-channel RMS equals the
    requested residual."""
    residuals = list(residual_50hz_rms_uv_per_channel)
    if len(residuals) != config.channel_count:
        raise SynthError(
            f"need one residual per channel: got {len(residuals)} for {config.channel_count} channels"
        )
    if any(r < 0 for r in residuals):
        raise SynthError("negative residual amplitude")
    fs = config.sample_rate_hz
    n = int(round(duration_s * fs))
    t = np.arange(n) / fs
    rng = np.random.default_rng(seed)
    data = rng.normal(0.0, base_noise_rms_uv, size=(config.channel_count, n)) \
        if base_noise_rms_uv > 0 else np.zeros((config.channel_count, n))
    tone = np.sin(2 * np.pi * injection_hz * t)
    for ch, r in enumerate(residuals):
        data[ch] += r * np.sqrt(2.0) * tone
    return Epoch(config, data)


def gen_timing_log(spec: TimingSynthSpec) -> TimingLog:
    """Drifted nominal intervals cumulatively summed from 0, plus Gaussian
    sampling jitter on the timestamps, scaled so the inter-sample interval
    standard deviation equals jitter_std_us. Jitter lives on the timestamps
    (not the intervals) so window-mean drift estimation stays consistent;
    timestamps keep sub-microsecond resolution for the same reason."""
    k = spec.event_count - 1  # interval count
    frac = np.arange(k) / max(k - 1, 1)
    intervals = spec.nominal_period_us * (1.0 + spec.drift_ppm * 1e-6 * frac)
    if np.any(intervals <= 0):
        raise SynthError("spec produces non-positive intervals")
    timestamps = np.concatenate([[0.0], np.cumsum(intervals)])
    if spec.jitter_std_us > 0:
        rng = np.random.default_rng(spec.seed)
        timestamps = timestamps + rng.normal(
            0.0, spec.jitter_std_us / np.sqrt(2.0), size=spec.event_count
        )
        timestamps -= timestamps[0]
    if np.any(np.diff(timestamps) <= 0):
        raise SynthError("spec produces non-positive intervals")
    return TimingLog(
        index=np.arange(spec.event_count),
        timestamp_us=timestamps,
        mode=[spec.mode] * spec.event_count,
    )
