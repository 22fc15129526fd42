"""Exception hierarchy. Every error carries the name of the module that
raised it so the CLI can print a stable ``module: message`` prefix."""


class PipelineError(Exception):
    module = "ssvepbench"


class CoreError(PipelineError):
    module = "core"


class SynthError(PipelineError):
    module = "synth"


class FilterError(PipelineError):
    module = "filter"


class CcaError(PipelineError):
    module = "cca"


class FidelityError(PipelineError):
    module = "fidelity"


class AnalyticsError(PipelineError):
    module = "analytics"


class StreamError(PipelineError):
    module = "stream"


class CliError(PipelineError):
    module = "cli"
