"""Characterization mathematics: noise RMS metrics, jitter/drift statistics,
latency-stage statistics, effective common-mode attenuation, ITR, and the
temporal-window comparison.

Conventions: percentiles are nearest-rank on the sorted sample; drift is
reported as total accumulated ppm over the recording (slope x span /
nominal), with a per-second alternative behind a flag; a zero 50 Hz
residual is reported as a saturated attenuation carrying its computable
lower bound rather than +inf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import Epoch, TimingLog, TrialRecording
from .errors import AnalyticsError
from .cca import WINDOW_POLICIES, build_reference_bank, classify, select_analysis_window
from .filters import BINARY64, FilterSpec, design_butterworth_bandpass, filtfilt


def nearest_rank_percentile(values: np.ndarray, q: float) -> float:
    """q-th percentile by nearest rank: the ceil(q/100 * n)-th smallest."""
    v = np.sort(np.asarray(values).ravel())
    if v.size == 0:
        raise AnalyticsError("percentile of empty sample")
    rank = max(1, math.ceil(q / 100.0 * v.size))
    return float(v[rank - 1])


def _sample_std(values: np.ndarray) -> float:
    v = np.asarray(values, dtype=np.float64)
    return float(np.std(v, ddof=1)) if v.size > 1 else 0.0


# ---------------------------------------------------------------------------
# Noise metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseReport:
    per_run_eeg_band_rms_uv: tuple
    per_run_wideband_rms_uv: tuple
    eeg_band_mean_uv: float
    eeg_band_std_uv: float
    wideband_mean_uv: float
    wideband_std_uv: float
    window_length_s: float
    windows_per_run: int


def noise_metrics(
    runs: Sequence[Epoch],
    filter_spec: FilterSpec,
    window_length_s: float = 5.0,
    windows_per_run: int = 6,
) -> NoiseReport:
    """Per run: split into non-overlapping windows, compute per-channel RMS
    per window (wideband after per-window DC removal; EEG-band after
    zero-phase bandpass), average over channels then windows."""
    if not runs:
        raise AnalyticsError("at least one run required")
    coeffs_cache: dict[float, object] = {}
    eeg_runs, wide_runs = [], []
    for run in runs:
        fs = run.config.sample_rate_hz
        win = int(round(window_length_s * fs))
        need = windows_per_run * win
        if run.sample_count < need:
            raise AnalyticsError(
                f"run too short: {run.sample_count} samples, need {need} "
                f"({windows_per_run} x {window_length_s} s windows)"
            )
        if fs not in coeffs_cache:
            spec = FilterSpec(
                sample_rate_hz=fs,
                order=filter_spec.order,
                low_hz=filter_spec.low_hz,
                high_hz=filter_spec.high_hz,
            )
            coeffs_cache[fs] = design_butterworth_bandpass(spec, BINARY64)
        coeffs = coeffs_cache[fs]
        eeg_vals, wide_vals = [], []
        for w in range(windows_per_run):
            seg = run.samples[:, w * win : (w + 1) * win]
            dc_removed = seg - seg.mean(axis=1, keepdims=True)
            wide_vals.append(float(np.mean(np.sqrt(np.mean(dc_removed**2, axis=1)))))
            filtered = filtfilt(coeffs, Epoch(run.config, seg))
            eeg_vals.append(float(np.mean(np.sqrt(np.mean(filtered.samples**2, axis=1)))))
        eeg_runs.append(float(np.mean(eeg_vals)))
        wide_runs.append(float(np.mean(wide_vals)))
    return NoiseReport(
        per_run_eeg_band_rms_uv=tuple(eeg_runs),
        per_run_wideband_rms_uv=tuple(wide_runs),
        eeg_band_mean_uv=float(np.mean(eeg_runs)),
        eeg_band_std_uv=_sample_std(np.asarray(eeg_runs)),
        wideband_mean_uv=float(np.mean(wide_runs)),
        wideband_std_uv=_sample_std(np.asarray(wide_runs)),
        window_length_s=window_length_s,
        windows_per_run=windows_per_run,
    )


# ---------------------------------------------------------------------------
# Jitter and drift
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JitterStats:
    mean_us: float
    std_us: float
    p50_us: float
    p95_us: float
    p99_us: float
    min_us: float
    max_us: float
    drift_ppm: Optional[float]
    event_count: int
    mode: str = "OFF"

    def __post_init__(self):
        if not (self.min_us <= self.p50_us <= self.p95_us <= self.p99_us <= self.max_us):
            raise AnalyticsError("percentile ordering violated")
        if self.std_us < 0:
            raise AnalyticsError("negative std")


def jitter_and_drift(
    log: TimingLog,
    nominal_period_us: float = 2000.0,
    drift_window_s: float = 10.0,
    drift_convention: str = "total",
) -> JitterStats:
    """Interval statistics plus drift from a first-order fit of 10 s window
    means. drift_convention 'total' converts the fitted slope to accumulated
    ppm over the whole recording; 'per_second' reports slope/nominal ppm/s."""
    if len(log) < 2:
        raise AnalyticsError("need at least 2 timestamps")
    dt = log.intervals_us()
    elapsed_s = (log.timestamp_us - log.timestamp_us[0]) * 1e-6
    span_s = float(elapsed_s[-1])

    drift_ppm: Optional[float] = None
    n_windows = int(span_s // drift_window_s)
    if n_windows >= 2:
        ends = elapsed_s[1:]  # interval i ends at timestamp i+1
        bins = np.floor(ends / drift_window_s).astype(int)
        means, centers = [], []
        for w in range(n_windows):
            sel = bins == w
            if np.any(sel):
                means.append(float(np.mean(dt[sel])))
                centers.append((w + 0.5) * drift_window_s)
        if len(means) >= 2:
            slope = float(np.polyfit(centers, means, 1)[0])  # us per second
            if drift_convention == "total":
                drift_ppm = abs(slope) * span_s / nominal_period_us * 1e6
            elif drift_convention == "per_second":
                drift_ppm = abs(slope) / nominal_period_us * 1e6
            else:
                raise AnalyticsError(f"unknown drift convention {drift_convention!r}")

    mode = log.mode[0] if log.mode else "OFF"
    return JitterStats(
        mean_us=float(np.mean(dt)),
        std_us=_sample_std(dt),
        p50_us=nearest_rank_percentile(dt, 50),
        p95_us=nearest_rank_percentile(dt, 95),
        p99_us=nearest_rank_percentile(dt, 99),
        min_us=float(np.min(dt)),
        max_us=float(np.max(dt)),
        drift_ppm=drift_ppm,
        event_count=len(log),
        mode=mode,
    )


def jitter_stats_from_intervals(intervals_us: Sequence[float], mode: str = "OFF") -> JitterStats:
    """Interval statistics without drift, for tick sequences that are not a
    TimingLog (e.g. the streaming server's producer cadence)."""
    dt = np.asarray(intervals_us, dtype=np.float64)
    if dt.size < 1:
        raise AnalyticsError("need at least one interval")
    return JitterStats(
        mean_us=float(np.mean(dt)),
        std_us=_sample_std(dt),
        p50_us=nearest_rank_percentile(dt, 50),
        p95_us=nearest_rank_percentile(dt, 95),
        p99_us=nearest_rank_percentile(dt, 99),
        min_us=float(np.min(dt)),
        max_us=float(np.max(dt)),
        drift_ppm=None,
        event_count=dt.size + 1,
        mode=mode,
    )


# ---------------------------------------------------------------------------
# Latency
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LatencyRecord:
    """Three device-clock stage boundaries: filtering onset, CCA start,
    decision completion."""

    t0_us: int
    t1_us: int
    t2_us: int

    def __post_init__(self):
        if not (self.t0_us <= self.t1_us <= self.t2_us):
            raise AnalyticsError(f"latency timestamps out of order: {self}")

    @property
    def filter_ms(self) -> float:
        return (self.t1_us - self.t0_us) / 1000.0

    @property
    def cca_ms(self) -> float:
        return (self.t2_us - self.t1_us) / 1000.0

    @property
    def total_ms(self) -> float:
        return (self.t2_us - self.t0_us) / 1000.0


@dataclass(frozen=True)
class ComponentStats:
    mean_ms: float
    std_ms: float
    p50_ms: float
    p95_ms: float
    p99_ms: float
    max_ms: float


@dataclass(frozen=True)
class LatencyStats:
    filter: ComponentStats
    cca: ComponentStats
    total: ComponentStats
    record_count: int


def _component_stats(values_ms: np.ndarray) -> ComponentStats:
    return ComponentStats(
        mean_ms=float(np.mean(values_ms)),
        std_ms=_sample_std(values_ms),
        p50_ms=nearest_rank_percentile(values_ms, 50),
        p95_ms=nearest_rank_percentile(values_ms, 95),
        p99_ms=nearest_rank_percentile(values_ms, 99),
        max_ms=float(np.max(values_ms)),
    )


def latency_stats(records: Sequence[LatencyRecord]) -> LatencyStats:
    if not records:
        raise AnalyticsError("at least one latency record required")
    filt = np.array([r.filter_ms for r in records])
    cca = np.array([r.cca_ms for r in records])
    total = np.array([r.total_ms for r in records])
    return LatencyStats(
        filter=_component_stats(filt),
        cca=_component_stats(cca),
        total=_component_stats(total),
        record_count=len(records),
    )


# ---------------------------------------------------------------------------
# Common-mode attenuation
# ---------------------------------------------------------------------------

def measure_50hz_rms(epoch: Epoch, target_hz: float = 50.0) -> np.ndarray:
    """Single-frequency DFT at target_hz over the largest whole number of
    cycles; returns per-channel RMS amplitude in the epoch's units (uV)."""
    fs = epoch.config.sample_rate_hz
    if target_hz >= fs / 2:
        raise AnalyticsError(f"target {target_hz} Hz at or above Nyquist")
    if epoch.duration_s < 1.0:
        raise AnalyticsError("recording shorter than 1 s")
    n = epoch.sample_count
    cycles = math.floor(n * target_hz / fs)
    n_use = int(round(cycles * fs / target_hz))
    n_use = min(n_use, n)
    phase = np.exp(-2j * np.pi * target_hz * np.arange(n_use) / fs)
    return np.sqrt(2.0) / n_use * np.abs(epoch.samples[:, :n_use] @ phase)


@dataclass(frozen=True)
class CmChannel:
    v_on_rms: float
    v_off_rms: float
    v_res_rms: float
    attenuation_db: Optional[float]  # None when the residual is zero
    lower_bound_db: Optional[float]  # reported instead when saturated

    @property
    def saturated(self) -> bool:
        return self.attenuation_db is None

    @property
    def effective_db(self) -> float:
        return self.attenuation_db if self.attenuation_db is not None else self.lower_bound_db


@dataclass(frozen=True)
class CmReport:
    channels: tuple
    v_inj_rms: float
    median_db: float
    condition: str


def common_mode_attenuation(
    on: Epoch,
    off: Epoch,
    v_pp_volts: float = 1.0,
    condition: str = "balanced",
    target_hz: float = 50.0,
) -> CmReport:
    """Power-domain baseline correction V_res = sqrt(max(V_on^2 - V_off^2, 0))
    and attenuation 20 log10(V_inj / V_res), per channel. Epoch samples are
    microvolts; the report is in volts."""
    if on.channel_count != off.channel_count:
        raise AnalyticsError("on/off channel count mismatch")
    if on.config.sample_rate_hz != off.config.sample_rate_hz:
        raise AnalyticsError("on/off sample rate mismatch")
    v_inj = v_pp_volts / (2.0 * math.sqrt(2.0))
    v_on = measure_50hz_rms(on, target_hz) * 1e-6
    v_off = measure_50hz_rms(off, target_hz) * 1e-6
    channels = []
    for ch in range(on.channel_count):
        v_res = math.sqrt(max(v_on[ch] ** 2 - v_off[ch] ** 2, 0.0))
        if v_res > 0:
            att = 20.0 * math.log10(v_inj / v_res)
            lower = None
        else:
            att = None
            lower = 20.0 * math.log10(v_inj / v_off[ch]) if v_off[ch] > 0 else None
        channels.append(
            CmChannel(
                v_on_rms=float(v_on[ch]),
                v_off_rms=float(v_off[ch]),
                v_res_rms=v_res,
                attenuation_db=att,
                lower_bound_db=lower,
            )
        )
    effective = [c.effective_db for c in channels if c.effective_db is not None]
    if not effective:
        raise AnalyticsError("no channel yields a finite attenuation value")
    return CmReport(
        channels=tuple(channels),
        v_inj_rms=v_inj,
        median_db=float(np.median(effective)),
        condition=condition,
    )


@dataclass(frozen=True)
class CmComparison:
    """Balanced-vs-mismatch channel table: per-channel delta plus medians.
    The median delta is the difference of the two medians, matching how a
    channel table's summary row is normally formed."""

    balanced_db: tuple
    mismatch_db: tuple
    delta_db: tuple
    median_balanced_db: float
    median_mismatch_db: float
    median_delta_db: float


def cm_delta_table(balanced_db: Sequence[float], mismatch_db: Sequence[float]) -> CmComparison:
    if len(balanced_db) != len(mismatch_db):
        raise AnalyticsError("channel count mismatch between conditions")
    bal = tuple(float(v) for v in balanced_db)
    mis = tuple(float(v) for v in mismatch_db)
    deltas = tuple(m - b for b, m in zip(bal, mis))
    med_b = float(np.median(bal))
    med_m = float(np.median(mis))
    return CmComparison(
        balanced_db=bal,
        mismatch_db=mis,
        delta_db=deltas,
        median_balanced_db=med_b,
        median_mismatch_db=med_m,
        median_delta_db=med_m - med_b,
    )


# ---------------------------------------------------------------------------
# ITR and window comparison
# ---------------------------------------------------------------------------

def itr_bits_per_min(m: int, p: float, t_s: float) -> float:
    """Wolpaw information transfer rate for an M-class selection with
    accuracy p and selection time t_s seconds."""
    if m < 2:
        raise AnalyticsError(f"m must be >= 2, got {m}")
    if not (0.0 <= p <= 1.0):
        raise AnalyticsError(f"p must lie in [0, 1], got {p}")
    if t_s <= 0:
        raise AnalyticsError(f"t_s must be positive, got {t_s}")
    bits = math.log2(m)
    if 0.0 < p:
        bits += p * math.log2(p) if p < 1.0 else 0.0
    if p < 1.0:
        bits += (1.0 - p) * math.log2((1.0 - p) / (m - 1))
    return bits * 60.0 / t_s


@dataclass(frozen=True)
class WindowResult:
    policy: str
    correct: int
    total: int

    @property
    def accuracy_percent(self) -> float:
        return round(100.0 * self.correct / self.total, 2)


def window_comparison(
    trials: Sequence[TrialRecording],
    frequencies: Sequence[float],
    harmonics: int = 2,
    filter_order: int = 3,
    low_hz: float = 2.0,
    high_hz: float = 45.0,
    policies: Sequence[str] = WINDOW_POLICIES,
    precision: str = BINARY64,
) -> list[WindowResult]:
    """Decode every trial under each window policy and score against its
    label; the bank is rebuilt per distinct window length."""
    for i, tr in enumerate(trials):
        if tr.true_label_hz is None:
            raise AnalyticsError(f"trial {i} is unlabeled")
    bank_cache: dict[tuple, object] = {}
    coeff_cache: dict[float, object] = {}
    results = []
    for policy in policies:
        correct = 0
        for tr in trials:
            window = select_analysis_window(tr, policy)
            fs = window.config.sample_rate_hz
            if fs not in coeff_cache:
                coeff_cache[fs] = design_butterworth_bandpass(
                    FilterSpec(sample_rate_hz=fs, order=filter_order, low_hz=low_hz, high_hz=high_hz),
                    precision,
                )
            key = (window.sample_count, fs)
            if key not in bank_cache:
                bank_cache[key] = build_reference_bank(
                    frequencies, harmonics, window.sample_count, fs, precision
                )
            filtered = filtfilt(coeff_cache[fs], window)
            decision = classify(filtered, bank_cache[key])
            if decision.predicted_hz == tr.true_label_hz:
                correct += 1
        results.append(WindowResult(policy=policy, correct=correct, total=len(trials)))
    return results


# ---------------------------------------------------------------------------
# CSV serialization (fixed headers; dB to 0.1, us to 0.01, ppm to 0.01)
# ---------------------------------------------------------------------------

def jitter_stats_csv(stats: JitterStats) -> str:
    header = "mode,events,mean_us,std_us,p50_us,p95_us,p99_us,min_us,max_us,drift_ppm"
    drift = f"{stats.drift_ppm:.2f}" if stats.drift_ppm is not None else ""
    row = (
        f"{stats.mode},{stats.event_count},{stats.mean_us:.2f},{stats.std_us:.2f},"
        f"{stats.p50_us:.2f},{stats.p95_us:.2f},{stats.p99_us:.2f},"
        f"{stats.min_us:.2f},{stats.max_us:.2f},{drift}"
    )
    return header + "\n" + row + "\n"


def latency_stats_csv(stats: LatencyStats) -> str:
    header = "component,mean_ms,std_ms,p50_ms,p95_ms,p99_ms,max_ms"
    lines = [header]
    for name in ("filter", "cca", "total"):
        c: ComponentStats = getattr(stats, name)
        lines.append(
            f"{name},{c.mean_ms:.2f},{c.std_ms:.2f},{c.p50_ms:.2f},"
            f"{c.p95_ms:.2f},{c.p99_ms:.2f},{c.max_ms:.2f}"
        )
    return "\n".join(lines) + "\n"


def noise_report_csv(report: NoiseReport) -> str:
    header = "run,eeg_band_rms_uv,wideband_rms_uv"
    lines = [header]
    for i, (e, w) in enumerate(
        zip(report.per_run_eeg_band_rms_uv, report.per_run_wideband_rms_uv), start=1
    ):
        lines.append(f"{i},{e:.6g},{w:.6g}")
    lines.append(
        f"summary,{report.eeg_band_mean_uv:.6g}±{report.eeg_band_std_uv:.2g},"
        f"{report.wideband_mean_uv:.6g}±{report.wideband_std_uv:.2g}"
    )
    return "\n".join(lines) + "\n"


def cm_report_csv(report: CmReport) -> str:
    header = "channel,v_on_rms_v,v_off_rms_v,v_res_rms_v,attenuation_db"
    lines = [header]
    for i, c in enumerate(report.channels, start=1):
        if c.saturated:
            att = f"saturated(>= {c.lower_bound_db:.1f})" if c.lower_bound_db is not None else "saturated"
        else:
            att = f"{c.attenuation_db:.1f}"
        lines.append(f"CH{i},{c.v_on_rms:.6g},{c.v_off_rms:.6g},{c.v_res_rms:.6g},{att}")
    lines.append(f"median,,,,{report.median_db:.1f}")
    return "\n".join(lines) + "\n"
