"""Exception types raised across the package, one per error category."""


class SpecsrError(Exception):
    """Base class for all package errors."""


class ShapeError(SpecsrError, ValueError):
    """Array shape or dimension-compatibility violation."""


class ParameterError(SpecsrError, ValueError):
    """Invalid configuration or hyper-parameter value."""


class FormatError(SpecsrError, ValueError):
    """Malformed file on disk (header, payload, or field contents)."""


class InputError(SpecsrError, ValueError):
    """Caller-supplied data violates an operation's precondition."""


class ConfigError(SpecsrError, ValueError):
    """Bad run configuration (unknown key, missing field, type mismatch)."""


class SimulationError(SpecsrError, RuntimeError):
    """Broad-band simulation cannot be carried out for the given inputs."""


class TrainingError(SpecsrError, RuntimeError):
    """Training aborted (non-finite loss or gradient)."""


class ExtractionError(SpecsrError, RuntimeError):
    """Endmember extraction failed (rank deficiency, degenerate data)."""


class MetricError(SpecsrError, RuntimeError):
    """Metric undefined for the given inputs (e.g. all pixels degenerate)."""
