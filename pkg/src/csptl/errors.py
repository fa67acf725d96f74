"""Exception types. The CLI maps these onto process exit codes."""


class CsptlError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CsptlError, ValueError):
    """Invalid parameters, preconditions, or input combinations."""


class DimensionError(ConfigError):
    """Shape or channel-count mismatch between operands."""


class EmptyClassError(ConfigError):
    """A required class has no epochs (or none with positive weight)."""


class ZeroWeightError(ConfigError):
    """All provided sample weights are zero."""


class InsufficientDataError(ConfigError):
    """Too few samples for the requested estimate (e.g. leave-one-out)."""


class FormatError(CsptlError):
    """Subject file violates the binary format."""


class LabelError(FormatError):
    """Subject file contains a label byte outside {0, 1}."""


class NumericalError(CsptlError):
    """Numerical failure: degenerate input or a conditioning problem."""


class DegenerateEpochError(NumericalError):
    """Epoch with zero total power where a normalized quantity is needed."""


class DegenerateFeatureError(NumericalError):
    """A filtered signal has zero variance, so its log-feature is undefined."""

    def __init__(self, row: int):
        self.row = row
        super().__init__(f"zero variance in filtered row {row}")


class ConditioningError(NumericalError):
    """A matrix is numerically singular where positive definiteness is required."""


class AffinityError(NumericalError):
    """Source-affinity weights cannot be normalized (all divergences infinite)."""
