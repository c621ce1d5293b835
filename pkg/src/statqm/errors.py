"""Exception types shared across the package."""


class StatQMError(Exception):
    """Base class for all errors raised by this package."""


class NodeError(StatQMError):
    """The phase is undefined because the density vanishes inside its support."""


class DivisionByFloor(NodeError):
    """A coupling needs to divide by a density (or its slope) that is below the floor."""


class BlowUp(StatQMError):
    """A propagated field exceeded the overflow guard; reduce the time step."""

    def __init__(self, message, t=None):
        super().__init__(message if t is None else f"{message} (t={t!r})")
        self.t = t


class NormalizationDrift(BlowUp):
    """Total probability drifted by more than the allowed tolerance in one step."""


class BadIndex(StatQMError, ValueError):
    """A polynomial-family index outside the admissible set."""


class JetOverflow(StatQMError):
    """A total derivative would need a jet variable beyond the fourth derivative."""


class ExponentOverflow(StatQMError):
    """A Laurent exponent left the supported range."""


class OutOfRange(StatQMError, ValueError):
    """A target value cannot be reached by the solver."""


class ConfigError(StatQMError, ValueError):
    """Invalid scenario configuration."""
