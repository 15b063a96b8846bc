"""Exception hierarchy shared across the pipeline stages."""


class VibesError(Exception):
    """Base class for all pipeline errors."""


class StreamOrderError(VibesError):
    """A detection stream regressed in frame index."""


class DecodeError(VibesError):
    """An image or frame store entry could not be decoded."""


class ParameterError(VibesError, ValueError):
    """An operation was called with out-of-contract parameters."""


class InputError(VibesError, ValueError):
    """A well-formed call received semantically invalid input data."""


class ConfigError(VibesError, ValueError):
    """Unknown or ill-typed configuration key."""


class DegenerateFlowError(VibesError):
    """The neighborhood flow vector is too small to define Frenet axes."""


class MetricUndefinedError(VibesError):
    """A metric is undefined for the given inputs (e.g. single-class AUC)."""


class ReportParseError(VibesError):
    """The reasoner response contained no parseable incident report."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw
