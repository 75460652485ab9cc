"""Exception types raised across the package."""


class InvalidParameterError(ValueError):
    """A parameter violates its documented domain."""


class FitDegenerateError(ValueError):
    """A fringe fit cannot be performed on the supplied data.

    ``diagnostics`` holds the quantities that tripped the check.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class InsufficientDataError(ValueError):
    """Not enough data to form an estimate."""


class EventFormatError(ValueError):
    """An event stream does not conform to the event CSV format."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SamplingError(RuntimeError):
    """Rejection sampling exhausted its proposal budget."""


class ConfigError(ValueError):
    """A configuration file is invalid; ``key`` names the offending entry."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
