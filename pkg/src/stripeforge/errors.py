"""Exception hierarchy shared across the toolkit.

``ConfigError`` maps to CLI exit code 2, everything else raised by the
library maps to exit code 3.
"""


class ConfigError(ValueError):
    """Invalid configuration (bad camera parameters, mismatched shapes, ...)."""


class DomainError(ValueError):
    """Operation called outside its valid input domain."""


class SignNotVisibleError(DomainError):
    """The sign's projection falls (partly) outside the sensor."""


class WindowOverflowError(DomainError):
    """Attack windows do not fit into one frame period."""


class NoSpikesError(RuntimeError):
    """Spike detector found nothing above threshold."""


class EstimationError(RuntimeError):
    """Spectral frame-rate estimation failed (flat spectrum)."""


class CalibrationError(RuntimeError):
    """Delay-mapping calibration produced non-monotone or poorly fitting data."""


class EmptyRunError(RuntimeError):
    """Scenario produced no evaluable frames."""
