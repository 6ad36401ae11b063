"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid combination of inputs (grid window, missing point data, ...)."""


class DataConsistencyError(ValueError):
    """Green's function data that cannot come from a physical medium."""


class FrequencyRangeError(ValueError):
    """Frequency outside the interval covered by tabulated data."""

    def __init__(self, omega, lo, hi):
        self.interval = (lo, hi)
        super().__init__(
            f"frequency {omega!r} eV outside tabulated range [{lo!r}, {hi!r}] eV"
        )


class ParseError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class StepSizeError(RuntimeError):
    """Propagation lost more norm than allowed; the time step is too large."""
