import numpy as np
import pytest

from ssvepbench.errors import FidelityError
from ssvepbench.fidelity import (
    ALL_CONFIGS,
    PrecisionConfig,
    fidelity_report_csv,
    run_fidelity_suite,
)
from ssvepbench.synth import SsvepSynthSpec, gen_ssvep_trial

FREQS = (7.0, 7.5, 8.0, 8.5, 9.0, 11.0)


def make_trials(n_per_freq: int, noise_rms: float = 0.5):
    trials = []
    for i in range(n_per_freq):
        for f in FREQS:
            trials.append(
                gen_ssvep_trial(
                    SsvepSynthSpec(target_hz=f, noise_rms_uv=noise_rms, seed=1000 * i + int(f * 10))
                )
            )
    return trials


@pytest.fixture(scope="module")
def small_report():
    return run_fidelity_suite(make_trials(2))


class TestPrecisionConfig:
    def test_from_label(self):
        cfg = PrecisionConfig.from_label("df")
        assert cfg.label == "DF"
        assert cfg.filter_precision == "binary64"
        assert cfg.cca_precision == "binary32"

    def test_all_configs(self):
        assert tuple(c.label for c in ALL_CONFIGS) == ("DD", "DF", "FD", "FF")

    def test_inconsistent_label_rejected(self):
        with pytest.raises(FidelityError, match="inconsistent"):
            PrecisionConfig(filter_precision="binary32", cca_precision="binary64", label="DD")

    def test_unknown_label_rejected(self):
        with pytest.raises(FidelityError, match="unknown"):
            PrecisionConfig.from_label("DX")


class TestFidelitySuite:
    def test_dd_is_its_own_reference(self, small_report):
        s = small_report.summaries["DD"]
        assert s.agreement_fraction == 1.0
        assert s.disagreements == 0
        assert s.max_abs_margin_deviation == 0.0

    def test_df_agreement_and_tiny_margin_deviation(self, small_report):
        s = small_report.summaries["DF"]
        assert s.agreement_fraction == 1.0
        assert s.max_abs_margin_deviation < 1e-4

    def test_fd_ff_identical_predictions(self, small_report):
        for rec in small_report.records:
            assert rec["FD"].predicted_hz == rec["FF"].predicted_hz

    def test_agreement_ordering(self, small_report):
        s = small_report.summaries
        assert s["DF"].agreement_fraction >= s["FD"].agreement_fraction
        assert s["FD"].agreement_fraction == s["FF"].agreement_fraction

    def test_record_structure(self, small_report):
        assert small_report.trial_count == 12
        assert small_report.configs == ("DD", "DF", "FD", "FF")
        for rec in small_report.records:
            for lbl in ("DD", "DF", "FD", "FF"):
                assert 0.0 <= rec[lbl].rho_peak <= 1.0
                assert rec[lbl].margin >= 0.0

    def test_signed_deviations_consistent_with_summary(self, small_report):
        for lbl in ("DF", "FD", "FF"):
            deltas = small_report.margin_deviations[lbl]
            assert max(abs(d) for d in deltas) == pytest.approx(
                small_report.summaries[lbl].max_abs_margin_deviation
            )

    def test_missing_dd_rejected(self):
        with pytest.raises(FidelityError, match="DD"):
            run_fidelity_suite(make_trials(1), configs=ALL_CONFIGS[1:])

    def test_empty_trials_rejected(self):
        with pytest.raises(FidelityError, match="trial"):
            run_fidelity_suite([])

    def test_error_carries_trial_and_config(self):
        # noiseless trial -> degenerate covariance inside the suite
        bad = [gen_ssvep_trial(SsvepSynthSpec(target_hz=8.0, noise_rms_uv=0.0, seed=0))]
        with pytest.raises(FidelityError, match=r"trial 0, config DD"):
            run_fidelity_suite(bad)

    def test_csv_shape(self, small_report):
        text = fidelity_report_csv(small_report)
        lines = text.strip().split("\n")
        assert lines[0] == "trial,config,predicted_hz,rho_peak,margin"
        assert len(lines) == 1 + 12 * 4
        first = lines[1].split(",")
        assert first[0] == "0" and first[1] == "DD"
        float(first[2]), float(first[3]), float(first[4])
