"""Mixed-precision replay protocol: run identical trials through the DD, DF,
FD, FF pipeline configurations and report decision agreement and margin
deviation against the DD reference. Labels read filter precision first,
CCA precision second; D = binary64, F = binary32."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .cca import build_reference_bank, classify, select_analysis_window
from .core import TrialRecording
from .errors import FidelityError
from .filters import BINARY32, BINARY64, FilterSpec, design_butterworth_bandpass, filtfilt

_LETTER = {"D": BINARY64, "F": BINARY32}
_LABELS = ("DD", "DF", "FD", "FF")


@dataclass(frozen=True)
class PrecisionConfig:
    filter_precision: str
    cca_precision: str
    label: str

    def __post_init__(self):
        if (
            len(self.label) != 2
            or _LETTER.get(self.label[0]) != self.filter_precision
            or _LETTER.get(self.label[1]) != self.cca_precision
        ):
            raise FidelityError(f"label {self.label!r} inconsistent with precisions")

    @classmethod
    def from_label(cls, label: str) -> "PrecisionConfig":
        label = label.upper()
        if len(label) != 2 or label[0] not in _LETTER or label[1] not in _LETTER:
            raise FidelityError(f"unknown precision label {label!r} (expected one of {_LABELS})")
        return cls(filter_precision=_LETTER[label[0]], cca_precision=_LETTER[label[1]], label=label)


ALL_CONFIGS = tuple(PrecisionConfig.from_label(x) for x in _LABELS)


@dataclass(frozen=True)
class TrialResult:
    predicted_hz: float
    rho_peak: float
    margin: float


@dataclass(frozen=True)
class ConfigSummary:
    label: str
    agreement_fraction: float
    disagreements: int
    max_abs_margin_deviation: float


@dataclass(frozen=True)
class FidelityReport:
    trial_count: int
    configs: tuple  # labels in run order
    records: tuple  # per trial: dict label -> TrialResult
    summaries: dict  # label -> ConfigSummary
    margin_deviations: dict  # label -> tuple of signed per-trial deltas vs DD


def run_fidelity_suite(
    trials: Sequence[TrialRecording],
    window_policy: str = "final_4s",
    frequencies: Sequence[float] = (7.0, 7.5, 8.0, 8.5, 9.0, 11.0),
    harmonics: int = 2,
    configs: Sequence[PrecisionConfig] = ALL_CONFIGS,
    filter_order: int = 3,
    low_hz: float = 2.0,
    high_hz: float = 45.0,
) -> FidelityReport:
    """Replay every trial through every configuration; agreement and
    margin deviation are relative to DD."""
    if not trials:
        raise FidelityError("at least one trial required")
    labels = [c.label for c in configs]
    if "DD" not in labels:
        raise FidelityError("the DD reference configuration must be present")

    coeff_cache: dict[tuple, object] = {}
    bank_cache: dict[tuple, object] = {}
    records: list[dict] = []
    for idx, trial in enumerate(trials):
        per_config: dict[str, TrialResult] = {}
        for cfg in configs:
            try:
                window = select_analysis_window(trial, window_policy)
                fs = window.config.sample_rate_hz
                ckey = (fs, cfg.filter_precision)
                if ckey not in coeff_cache:
                    coeff_cache[ckey] = design_butterworth_bandpass(
                        FilterSpec(sample_rate_hz=fs, order=filter_order, low_hz=low_hz, high_hz=high_hz),
                        cfg.filter_precision,
                    )
                bkey = (window.sample_count, fs, cfg.cca_precision)
                if bkey not in bank_cache:
                    bank_cache[bkey] = build_reference_bank(
                        frequencies, harmonics, window.sample_count, fs, cfg.cca_precision
                    )
                filtered = filtfilt(coeff_cache[ckey], window)
                decision = classify(filtered, bank_cache[bkey])
            except Exception as exc:
                raise FidelityError(f"trial {idx}, config {cfg.label}: {exc}") from exc
            per_config[cfg.label] = TrialResult(
                predicted_hz=decision.predicted_hz,
                rho_peak=decision.rho_peak,
                margin=decision.margin,
            )
        records.append(per_config)

    summaries: dict[str, ConfigSummary] = {}
    deviations: dict[str, tuple] = {}
    n = len(trials)
    for cfg in configs:
        lbl = cfg.label
        dis = sum(1 for r in records if r[lbl].predicted_hz != r["DD"].predicted_hz)
        deltas = tuple(r[lbl].margin - r["DD"].margin for r in records)
        summaries[lbl] = ConfigSummary(
            label=lbl,
            agreement_fraction=1.0 - dis / n,
            disagreements=dis,
            max_abs_margin_deviation=max(abs(d) for d in deltas),
        )
        deviations[lbl] = deltas
    return FidelityReport(
        trial_count=n,
        configs=tuple(labels),
        records=tuple(records),
        summaries=summaries,
        margin_deviations=deviations,
    )


def fidelity_report_csv(report: FidelityReport) -> str:
    lines = ["trial,config,predicted_hz,rho_peak,margin"]
    for i, rec in enumerate(report.records):
        for lbl in report.configs:
            r = rec[lbl]
            lines.append(f"{i},{lbl},{r.predicted_hz:g},{r.rho_peak:.9g},{r.margin:.9g}")
    return "\n".join(lines) + "\n"
