"""Exception types shared across the package."""


class DualNvError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateProjectionError(DualNvError, ValueError):
    """Shared-field projection on the reference sensor is numerically zero."""


class FieldDomainError(DualNvError, ValueError):
    """Field requested outside the source model's validity region."""


class WaveformKindError(DualNvError, ValueError):
    """Operation applied to a waveform kind that does not support it."""


class IncompleteMatrixError(DualNvError, ValueError):
    """A readout matrix or subset is missing required phase combinations."""


class IndeterminatePhaseError(DualNvError, ArithmeticError):
    """Phase cannot be recovered because the quadrature amplitude vanished."""


class InvalidContrastError(DualNvError, ValueError):
    """Covariance normalization requires strictly positive readout contrasts."""


class ScheduleSizeError(DualNvError, ValueError):
    """Requested sensor count is outside the supported schedule range."""


class FitFailureError(DualNvError, RuntimeError):
    """Geometry fit did not converge; carries the best parameters seen."""

    def __init__(self, message, best_params=None, diagnostics=None):
        super().__init__(message)
        self.best_params = best_params
        self.diagnostics = dict(diagnostics or {})


class ConfigError(DualNvError, ValueError):
    """Configuration input is missing, malformed, or contains unknown keys."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}: " if line is None else f"{path}:{line}: "
        super().__init__(loc + message)
        self.path = path
        self.line = line
