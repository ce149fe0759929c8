"""Exception types shared across the package."""


class ExtclustError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ExtclustError):
    """Bad or missing experiment configuration."""


class ModelError(ExtclustError):
    """A model instance violates its standing hypotheses."""


class DimensionMismatch(ExtclustError):
    """Multi-indices of different dimension were mixed."""


class DegenerateCluster(ExtclustError):
    """All-zero input where a nonzero cluster is required."""


class InvalidModel(ModelError):
    """Malformed moving-average or score model."""


class InvalidTruncation(ExtclustError):
    """Coefficient truncation left no nonzero coefficient."""


class InvalidLevel(ExtclustError):
    """Nonpositive exceedance level."""


class InvalidFunctional(ExtclustError):
    """Test functional cannot be evaluated exactly."""


class NoExceedance(ExtclustError):
    """Exceedance-based anchor requested but no entry exceeds 1."""


class InsufficientData(ExtclustError):
    """Too few exceedances to form an estimate."""


class InvalidBlocking(ExtclustError):
    """Block side length incompatible with the window size."""


class DriftViolation(ModelError):
    """Mean score is nonnegative."""


class NoPositiveScore(ModelError):
    """No score value is positive."""


class BracketFailure(ExtclustError):
    """Root bracketing failed before the overflow guard."""


class SupportViolation(ExtclustError):
    """Relative entropy undefined: nu puts mass where mu has none."""
