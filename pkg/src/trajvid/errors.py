"""Exception types shared across the package."""


class TrajvidError(Exception):
    """Base class for all package errors."""


class InvariantViolation(TrajvidError):
    """A core value type was constructed with data violating its invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ShapeMismatchError(TrajvidError):
    pass


class ScaleMismatchError(TrajvidError):
    pass


class MisalignedResolutionError(TrajvidError):
    pass


class ProviderUnavailableError(TrajvidError):
    pass


class StepOutOfRangeError(TrajvidError):
    pass


class NonFiniteLossError(TrajvidError):
    pass


class ModelShapeMismatchError(TrajvidError):
    pass


class FileUnreadableError(TrajvidError):
    pass


class TooFewFramesError(TrajvidError):
    pass


class DistributionError(TrajvidError):
    """Rows passed as probability distributions do not sum to one."""


class ConfigError(TrajvidError):
    """Bad or unknown keys in a run configuration file."""
