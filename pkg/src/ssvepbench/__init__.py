"""Host-side SSVEP measurement-and-decoding toolbox: synthetic generators,
zero-phase Butterworth filtering, CCA frequency recognition, mixed-precision
fidelity replay, characterization analytics, and a framed TCP telemetry
protocol."""

from .core import (
    AcquisitionConfig,
    Epoch,
    TimingLog,
    TrialRecording,
    read_epoch_csv,
    read_timing_log_csv,
    write_epoch_csv,
    write_timing_log_csv,
)
from .errors import PipelineError

__version__ = "0.1.0"

__all__ = [
    "AcquisitionConfig",
    "Epoch",
    "TimingLog",
    "TrialRecording",
    "PipelineError",
    "read_epoch_csv",
    "read_timing_log_csv",
    "write_epoch_csv",
    "write_timing_log_csv",
    "__version__",
]
