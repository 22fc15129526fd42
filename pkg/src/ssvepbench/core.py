"""Domain types and CSV persistence shared by all modules.

Unit conventions: host-side sample values are microvolts, timestamps are
microseconds on the device clock, and the time column of every CSV is
derived from the authoritative integer/real fields, never the reverse.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import CoreError

VREF_VOLTS = 4.5
ADC_FULL_SCALE = 2**23 - 1


def _default_uv_per_count(pga_gain: float) -> float:
    # (Vref / gain) / (2^23 - 1) in microvolts per count; an assumption,
    # the device datasheet scaling is not part of this artifact.
    return (VREF_VOLTS / pga_gain) / ADC_FULL_SCALE * 1e6


@dataclass(frozen=True)
class AcquisitionConfig:
    """Acquisition settings: 8 channels at 500 SPS, PGA 12 by default."""

    sample_rate_hz: float = 500.0
    channel_count: int = 8
    pga_gain: float = 12.0
    adc_bits: int = 24
    uv_per_count: float = field(default=0.0)

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise CoreError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        if self.channel_count < 1:
            raise CoreError(f"channel_count must be >= 1, got {self.channel_count}")
        if self.pga_gain <= 0:
            raise CoreError(f"pga_gain must be positive, got {self.pga_gain}")
        if self.uv_per_count == 0.0:
            object.__setattr__(self, "uv_per_count", _default_uv_per_count(self.pga_gain))


class Epoch:
    """A C x N block of multichannel samples in microvolts.

    Immutable after construction; the sample matrix is validated (finite,
    rectangular, at least one sample) and write-protected.
    """

    __slots__ = ("config", "samples")

    def __init__(self, config: AcquisitionConfig, samples):
        try:
            arr = np.asarray(samples, dtype=np.float64)
        except (ValueError, TypeError) as exc:
            raise CoreError(f"samples is not a rectangular numeric matrix: {exc}") from exc
        if arr.ndim != 2:
            raise CoreError(f"samples must be 2-D (channels x samples), got ndim={arr.ndim}")
        if arr.shape[0] != config.channel_count:
            raise CoreError(
                f"channel mismatch: config says {config.channel_count}, matrix has {arr.shape[0]} rows"
            )
        if arr.shape[1] < 1:
            raise CoreError("epoch must contain at least one sample")
        if not np.all(np.isfinite(arr)):
            raise CoreError("epoch contains non-finite values")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "config", config)
        object.__setattr__(self, "samples", arr)

    def __setattr__(self, name, value):
        raise AttributeError("Epoch is immutable")

    @property
    def channel_count(self) -> int:
        return self.samples.shape[0]

    @property
    def sample_count(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.sample_count / self.config.sample_rate_hz

    def __eq__(self, other):
        return (
            isinstance(other, Epoch)
            and self.config == other.config
            and self.samples.shape == other.samples.shape
            and np.array_equal(self.samples, other.samples)
        )


@dataclass(frozen=True)
class TrialRecording:
    """One stimulation trial: nominally 5 s of raw EEG plus ground truth."""

    epoch_full: Epoch
    true_label_hz: Optional[float] = None
    subject_id: Optional[str] = None

    @property
    def duration_s(self) -> float:
        return self.epoch_full.duration_s


VALID_MODES = ("OFF", "ON")


class TimingLog:
    """DRDY-style timestamp sequence: index, device microseconds, seconds, mode.

    timestamp_us is the single source of truth; time_s is derived. Timestamps
    are stored as real microseconds so that synthetic sub-microsecond jitter
    survives a round trip (hardware logs are whole microseconds and serialize
    as integers).
    """

    __slots__ = ("index", "timestamp_us", "time_s", "mode")

    def __init__(self, index, timestamp_us, time_s=None, mode=None):
        idx = np.asarray(index, dtype=np.int64)
        ts = np.asarray(timestamp_us, dtype=np.float64)
        if idx.shape != ts.shape or idx.ndim != 1 or idx.size < 1:
            raise CoreError("index and timestamp_us must be equal-length 1-D sequences")
        if idx.size > 1:
            if not np.all(np.diff(idx) == 1):
                raise CoreError("gap in index sequence: indices must increase by exactly 1")
            if not np.all(np.diff(ts) > 0):
                raise CoreError("non-monotonic timestamp")
        if time_s is None:
            tsec = ts * 1e-6
        else:
            tsec = np.asarray(time_s, dtype=np.float64)
            if np.max(np.abs(tsec - ts * 1e-6)) > 1e-6:
                raise CoreError("time_s column inconsistent with timestamp_us (tolerance 1e-6 s)")
        if mode is None:
            modes = ["OFF"] * idx.size
        else:
            modes = [str(m) for m in mode]
            if len(modes) != idx.size:
                raise CoreError("mode column length mismatch")
            for m in modes:
                if m not in VALID_MODES:
                    raise CoreError(f"unknown mode label {m!r}")
        ts.setflags(write=False)
        idx.setflags(write=False)
        tsec.setflags(write=False)
        object.__setattr__(self, "index", idx)
        object.__setattr__(self, "timestamp_us", ts)
        object.__setattr__(self, "time_s", tsec)
        object.__setattr__(self, "mode", tuple(modes))

    def __setattr__(self, name, value):
        raise AttributeError("TimingLog is immutable")

    def __len__(self) -> int:
        return int(self.index.size)

    def intervals_us(self) -> np.ndarray:
        return np.diff(self.timestamp_us)


# ---------------------------------------------------------------------------
# CSV persistence
# ---------------------------------------------------------------------------

def _epoch_header(channel_count: int) -> list[str]:
    return ["t_s"] + [f"ch{i + 1}" for i in range(channel_count)]


def write_epoch_csv(epoch: Epoch, path) -> None:
    """Write an epoch as ``t_s,ch1,...,chC`` with >= 9 significant digits."""
    fs = epoch.config.sample_rate_hz
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(_epoch_header(epoch.channel_count)) + "\n")
        cols = epoch.samples
        for n in range(epoch.sample_count):
            t = n / fs
            row = [f"{t:.9f}"] + [f"{cols[c, n]:.12g}" for c in range(epoch.channel_count)]
            fh.write(",".join(row) + "\n")


def read_epoch_csv(path, config: Optional[AcquisitionConfig] = None) -> Epoch:
    """Read an epoch CSV; rejects ragged rows, non-finite values, and
    non-uniform t_s spacing (tolerance 1% of the nominal period)."""
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CoreError(f"{path}: empty file") from None
        if len(header) < 2 or header[0] != "t_s":
            raise CoreError(f"{path}: malformed header {header!r}")
        channel_count = len(header) - 1
        if header != _epoch_header(channel_count):
            raise CoreError(f"{path}: malformed header {header!r}")
        t_vals: list[float] = []
        data: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != channel_count + 1:
                raise CoreError(f"{path}:{lineno}: ragged row ({len(row)} fields)")
            try:
                vals = [float(v) for v in row]
            except ValueError as exc:
                raise CoreError(f"{path}:{lineno}: {exc}") from None
            if not all(np.isfinite(vals)):
                raise CoreError(f"{path}:{lineno}: non-finite value")
            t_vals.append(vals[0])
            data.append(vals[1:])
    if len(data) < 1:
        raise CoreError(f"{path}: no sample rows")
    t = np.asarray(t_vals)
    if len(data) >= 2:
        dt = np.diff(t)
        if np.any(dt <= 0):
            raise CoreError(f"{path}: non-monotonic t_s")
        nominal = float(np.median(dt))
        if np.max(np.abs(dt - nominal)) > 0.01 * nominal:
            raise CoreError(f"{path}: non-uniform sampling (t_s spacing beyond 1% of nominal)")
        fs = 1.0 / nominal
    else:
        fs = config.sample_rate_hz if config is not None else 500.0
    if config is None:
        config = AcquisitionConfig(sample_rate_hz=fs, channel_count=channel_count)
    else:
        if config.channel_count != channel_count:
            raise CoreError(
                f"{path}: file has {channel_count} channels, config expects {config.channel_count}"
            )
    return Epoch(config, np.asarray(data).T)


TIMING_HEADER = ["index", "timestamp_us", "t_s", "mode"]


def _format_us(v: float) -> str:
    if v == int(v):
        return str(int(v))
    return repr(float(v))


def write_timing_log_csv(log: TimingLog, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(TIMING_HEADER) + "\n")
        for i in range(len(log)):
            ts = log.timestamp_us[i]
            fh.write(f"{log.index[i]},{_format_us(ts)},{ts * 1e-6:.9f},{log.mode[i]}\n")


def read_timing_log_csv(path) -> TimingLog:
    with open(path, "r", newline="") as fh:
        header = fh.readline().rstrip("\n").split(",")
        if header != TIMING_HEADER:
            raise CoreError(f"{path}: malformed header {header!r}")
        idx: list[int] = []
        ts: list[float] = []
        modes: list[str] = []
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(",")
            if len(parts) != 4:
                raise CoreError(f"{path}:{lineno}: ragged row")
            idx.append(int(parts[0]))
            ts.append(float(parts[1]))
            modes.append(parts[3])
    if not idx:
        raise CoreError(f"{path}: no entries")
    return TimingLog(idx, ts, mode=modes)


def epoch_to_csv_text(epoch: Epoch) -> str:
    buf = io.StringIO()
    fs = epoch.config.sample_rate_hz
    buf.write(",".join(_epoch_header(epoch.channel_count)) + "\n")
    for n in range(epoch.sample_count):
        row = [f"{n / fs:.9f}"] + [f"{epoch.samples[c, n]:.12g}" for c in range(epoch.channel_count)]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()
