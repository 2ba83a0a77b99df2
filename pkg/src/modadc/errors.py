"""Exception hierarchy shared by all modadc modules."""


class ModAdcError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgumentError(ModAdcError, ValueError):
    """An argument is outside the domain of the operation."""


class IllConditionedError(ModAdcError):
    """Statistics are too ill-conditioned for a stable solve."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class WarmupError(ModAdcError):
    """The predictor history is not yet full."""


class DivergenceError(ModAdcError):
    """Adaptive state became non-finite; the run cannot continue."""


class UnsupportedError(ModAdcError):
    """Requested configuration is not supported by this routine."""


class ConfigError(ModAdcError, ValueError):
    """Experiment configuration is invalid."""
