import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssvepbench.core import (
    AcquisitionConfig,
    Epoch,
    TimingLog,
    read_epoch_csv,
    read_timing_log_csv,
    write_epoch_csv,
    write_timing_log_csv,
)
from ssvepbench.errors import CoreError


class TestAcquisitionConfig:
    def test_defaults(self):
        cfg = AcquisitionConfig()
        assert cfg.sample_rate_hz == 500.0
        assert cfg.channel_count == 8
        assert cfg.pga_gain == 12.0
        assert cfg.adc_bits == 24
        # (4.5 V / 12) / (2^23 - 1) in uV
        assert cfg.uv_per_count == pytest.approx(0.375e6 / (2**23 - 1))

    @pytest.mark.parametrize("kwargs", [{"sample_rate_hz": 0}, {"sample_rate_hz": -1}, {"channel_count": 0}])
    def test_invalid(self, kwargs):
        with pytest.raises(CoreError):
            AcquisitionConfig(**kwargs)


class TestEpoch:
    def test_basic(self, config):
        e = Epoch(config, np.zeros((8, 10)))
        assert e.sample_count == 10
        assert e.duration_s == pytest.approx(0.02)

    def test_rejects_ragged_and_empty(self, config):
        with pytest.raises(CoreError):
            Epoch(config, [[1.0, 2.0], [1.0]])
        with pytest.raises(CoreError):
            Epoch(config, np.zeros((8, 0)))

    def test_rejects_nonfinite(self, config):
        bad = np.zeros((8, 4))
        bad[3, 2] = np.nan
        with pytest.raises(CoreError):
            Epoch(config, bad)

    def test_rejects_channel_mismatch(self, config):
        with pytest.raises(CoreError):
            Epoch(config, np.zeros((4, 10)))

    def test_immutable(self, config):
        e = Epoch(config, np.zeros((8, 4)))
        with pytest.raises(ValueError):
            e.samples[0, 0] = 1.0


class TestEpochCsv:
    def test_minimal_two_row_file(self, tmp_path):
        p = tmp_path / "e.csv"
        p.write_text(
            "t_s,ch1,ch2,ch3,ch4,ch5,ch6,ch7,ch8\n"
            "0.000000000,1,2,3,4,5,6,7,8\n"
            "0.002000000,8,7,6,5,4,3,2,1\n"
        )
        e = read_epoch_csv(p)
        assert e.sample_count == 2
        assert e.channel_count == 8
        assert e.config.sample_rate_hz == pytest.approx(500.0)

    def test_nonuniform_spacing_rejected(self, tmp_path):
        p = tmp_path / "bad.csv"
        rows = ["t_s,ch1", "0.000,1", "0.002,1", "0.004,1", "0.009,1"]
        p.write_text("\n".join(rows) + "\n")
        with pytest.raises(CoreError, match="non-uniform sampling"):
            read_epoch_csv(p)

    def test_malformed_header(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("time,ch1\n0,1\n")
        with pytest.raises(CoreError, match="header"):
            read_epoch_csv(p)

    def test_header_format_8ch(self, tmp_path, config):
        p = tmp_path / "e.csv"
        write_epoch_csv(Epoch(config, np.zeros((8, 60))), p)
        assert p.read_text().splitlines()[0] == "t_s,ch1,ch2,ch3,ch4,ch5,ch6,ch7,ch8"

    def test_round_trip(self, tmp_path, config):
        rng = np.random.default_rng(3)
        e = Epoch(config, rng.normal(0, 10, (8, 250)))
        p = tmp_path / "rt.csv"
        write_epoch_csv(e, p)
        back = read_epoch_csv(p)
        assert np.max(np.abs(back.samples - e.samples)) < 1e-9

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**31), n=st.integers(2, 50))
    def test_round_trip_property(self, tmp_path_factory, seed, n):
        cfg = AcquisitionConfig(channel_count=3)
        rng = np.random.default_rng(seed)
        e = Epoch(cfg, rng.normal(0, 100, (3, n)))
        p = tmp_path_factory.mktemp("rt") / "e.csv"
        write_epoch_csv(e, p)
        assert np.max(np.abs(read_epoch_csv(p).samples - e.samples)) < 1e-9


class TestTimingLog:
    def test_valid_three_entry(self):
        log = TimingLog([0, 1, 2], [0, 2000, 4000])
        assert len(log) == 3
        assert list(log.intervals_us()) == [2000.0, 2000.0]

    def test_nonmonotonic_rejected(self):
        with pytest.raises(CoreError, match="non-monotonic timestamp"):
            TimingLog([0, 1, 2], [0, 2000, 1999])

    def test_index_gap_rejected(self):
        with pytest.raises(CoreError, match="index"):
            TimingLog([0, 1, 3], [0, 2000, 4000])

    def test_unknown_mode_rejected(self):
        with pytest.raises(CoreError, match="mode"):
            TimingLog([0, 1], [0, 2000], mode=["OFF", "MAYBE"])

    def test_time_s_consistency_enforced(self):
        with pytest.raises(CoreError, match="time_s"):
            TimingLog([0, 1], [0, 2000], time_s=[0.0, 0.5])

    def test_csv_round_trip_exact(self, tmp_path):
        log = TimingLog([0, 1, 2], [0.0, 2000.25, 4000.5], mode=["ON", "ON", "ON"])
        p = tmp_path / "log.csv"
        write_timing_log_csv(log, p)
        back = read_timing_log_csv(p)
        assert np.array_equal(back.timestamp_us, log.timestamp_us)
        assert back.mode == log.mode

    def test_large_log_parses_quickly(self, tmp_path):
        import time as _time

        from ssvepbench.synth import TimingSynthSpec, gen_timing_log

        log = gen_timing_log(TimingSynthSpec(event_count=300000, jitter_std_us=0.5, seed=1))
        p = tmp_path / "big.csv"
        write_timing_log_csv(log, p)
        t0 = _time.perf_counter()
        back = read_timing_log_csv(p)
        elapsed = _time.perf_counter() - t0
        assert len(back) == 300000
        assert elapsed < 2.0
