"""Exception types raised across the package."""


class LyapctlError(Exception):
    """Base class for all package errors."""


class GridMismatchError(LyapctlError, ValueError):
    """Two objects that must share a grid do not."""


class DomainError(LyapctlError, ValueError):
    """An argument lies outside the domain of the operation."""


class DegenerateStateError(LyapctlError, ValueError):
    """A state with zero norm was given where a direction is needed."""


class ResamplingError(LyapctlError, ValueError):
    """Tabulated samples do not match the target grid resolution."""


class UnsupportedError(LyapctlError, ValueError):
    """The requested operation is not available for this input family."""


class EmptySpectrumError(LyapctlError, RuntimeError):
    """No bound state was found below the energy cut."""


class NumericalBlowUpError(LyapctlError, FloatingPointError):
    """Non-finite amplitudes appeared during time stepping."""

    def __init__(self, message, step=None, t=None):
        super().__init__(message)
        self.step = step
        self.t = t
        self.partial = None


class SamplingError(LyapctlError, ValueError):
    """A trajectory record is not sampled at every step."""


class ConfigError(LyapctlError, ValueError):
    """Invalid or unreadable experiment configuration."""
