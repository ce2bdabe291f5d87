"""Exception types shared across the engines."""


class EpidtnError(Exception):
    """Base class for all errors raised by this package."""


class InvalidModel(EpidtnError):
    pass


class VanishingLoop(EpidtnError):
    """Immediate firings revisited a vanishing marking."""


class StateBudgetExceeded(EpidtnError):
    pass


class NotAbsorbing(EpidtnError):
    pass


class SingularSystem(EpidtnError):
    pass


class InsufficientQueue(EpidtnError):
    pass


class StepTooLarge(EpidtnError):
    pass


class NotSaturated(EpidtnError):
    pass


class TooFewSamples(EpidtnError):
    pass


class ConfigError(EpidtnError):
    pass


class TruncationWarning(UserWarning):
    """Time-truncated reward differs from its exact absorption limit."""
