import numpy as np
import pytest

from ssvepbench.core import AcquisitionConfig
from ssvepbench.errors import SynthError
from ssvepbench.synth import (
    SsvepSynthSpec,
    TimingSynthSpec,
    gen_common_mode_record,
    gen_noise_record,
    gen_ssvep_trial,
    gen_timing_log,
)
from ssvepbench.analytics import measure_50hz_rms


class TestSsvepTrial:
    def test_noiseless_is_pure_sinusoid(self):
        spec = SsvepSynthSpec(target_hz=8.0, harmonic_amplitudes_uv=(1.0,), noise_rms_uv=0.0, seed=0)
        trial = gen_ssvep_trial(spec)
        t = np.arange(trial.epoch_full.sample_count) / 500.0
        expected = np.sin(2 * np.pi * 8.0 * t)
        assert np.max(np.abs(trial.epoch_full.samples[0] - expected)) < 1e-12

    def test_deterministic(self):
        spec = SsvepSynthSpec(target_hz=9.0, seed=123)
        a = gen_ssvep_trial(spec)
        b = gen_ssvep_trial(spec)
        assert np.array_equal(a.epoch_full.samples, b.epoch_full.samples)

    def test_noise_rms_closure(self):
        spec = SsvepSynthSpec(
            target_hz=8.0, harmonic_amplitudes_uv=(0.0,), noise_rms_uv=0.08, duration_s=30.0, seed=5
        )
        trial = gen_ssvep_trial(spec)
        rms = np.sqrt(np.mean(trial.epoch_full.samples**2, axis=1))
        assert np.all(np.abs(rms - 0.08) < 0.05 * 0.08)

    def test_aliasing_rejected(self):
        with pytest.raises(SynthError, match="aliasing|target_hz"):
            gen_ssvep_trial(SsvepSynthSpec(target_hz=130.0, harmonic_amplitudes_uv=(1.0, 0.5)))

    def test_label_attached(self):
        trial = gen_ssvep_trial(SsvepSynthSpec(target_hz=7.5, seed=0))
        assert trial.true_label_hz == 7.5


class TestCommonModeRecord:
    def test_zero_residual_leaves_only_leakage(self):
        e = gen_common_mode_record(0.05, [0.0] * 8, 30.0, seed=2)
        rms = measure_50hz_rms(e)
        assert np.all(rms < 0.01)

    def test_single_channel_residual_recovered(self):
        residuals = [0.0] * 8
        residuals[3] = 0.5
        e = gen_common_mode_record(0.02, residuals, 30.0, seed=3)
        rms = measure_50hz_rms(e)
        assert abs(rms[3] - 0.5) < 0.005
        others = np.delete(rms, 3)
        assert np.all(others < 0.01)

    def test_residual_count_must_match_channels(self):
        with pytest.raises(SynthError):
            gen_common_mode_record(0.0, [0.1] * 4, 10.0, seed=0)

    def test_negative_residual_rejected(self):
        with pytest.raises(SynthError, match="negative"):
            gen_common_mode_record(0.0, [0.1] * 7 + [-0.1], 10.0, seed=0)


class TestTimingLog:
    def test_exact_when_clean(self):
        log = gen_timing_log(TimingSynthSpec(event_count=10))
        assert np.array_equal(log.timestamp_us, np.arange(10) * 2000.0)

    def test_deterministic(self):
        spec = TimingSynthSpec(event_count=1000, jitter_std_us=0.5, drift_ppm=1.0, seed=9)
        assert np.array_equal(gen_timing_log(spec).timestamp_us, gen_timing_log(spec).timestamp_us)

    def test_interval_std_matches_request(self):
        log = gen_timing_log(TimingSynthSpec(event_count=300000, jitter_std_us=0.56, seed=4))
        assert np.std(log.intervals_us(), ddof=1) == pytest.approx(0.56, abs=0.05)

    def test_too_few_events_rejected(self):
        with pytest.raises(SynthError):
            TimingSynthSpec(event_count=1)

    def test_nonpositive_interval_rejected(self):
        with pytest.raises(SynthError, match="non-positive"):
            gen_timing_log(TimingSynthSpec(event_count=100, nominal_period_us=1.0, jitter_std_us=5.0, seed=0))


def test_noise_record_rms():
    e = gen_noise_record(0.1534, 30.0, seed=1, config=AcquisitionConfig())
    rms = np.sqrt(np.mean(e.samples**2))
    assert rms == pytest.approx(0.1534, rel=0.02)
