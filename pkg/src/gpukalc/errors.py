"""Exception types shared across the toolchain."""


class GpukalcError(Exception):
    """Base class for all toolchain errors."""


class PtxParseError(GpukalcError):
    """Raised for malformed PTX input.

    Carries the 1-based source line when the failure is tied to one.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ProfileError(GpukalcError):
    """Raised when a profile file is missing, malformed, or inconsistent."""


class ScheduleError(GpukalcError):
    """Raised when a kernel cannot be scheduled under the given config."""


class FitError(GpukalcError):
    """Raised when a model fit is infeasible for the given series."""


class EnsembleError(GpukalcError):
    """Raised for malformed ensemble files or manifest mismatches."""
