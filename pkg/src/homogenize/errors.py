"""Exception types raised across the package."""


class HomogenizeError(Exception):
    pass


class ParameterError(HomogenizeError, ValueError):
    """A constructor or operation parameter is outside its documented range."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class WrongKindError(HomogenizeError, TypeError):
    pass


class NonFiniteStateError(HomogenizeError, FloatingPointError):
    pass


class EstimationRefused(HomogenizeError):
    """Raised for drivers outside the regime where the estimators are valid."""


class InsufficientSamplesError(HomogenizeError, ValueError):
    pass


class OffGridError(HomogenizeError, ValueError):
    pass


class CapExceededError(HomogenizeError, OverflowError):
    pass


class DimensionError(HomogenizeError, ValueError):
    pass


class HeterogeneousEnsembleError(HomogenizeError, ValueError):
    pass


class NonPSDError(HomogenizeError, ValueError):
    pass


class BlowupError(HomogenizeError, FloatingPointError):
    def __init__(self, step, message="solution left the bounded region"):
        self.step = step
        super().__init__(f"{message} at step {step}")


class HorizonMismatchError(HomogenizeError, ValueError):
    pass


class ConfigError(HomogenizeError, ValueError):
    """Collects every validation problem found in an experiment config."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class StageError(HomogenizeError, RuntimeError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


class CorrelationTailWarning(UserWarning):
    """Green-Kubo integrand has not decayed by the truncation time."""
