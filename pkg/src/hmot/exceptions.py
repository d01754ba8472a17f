"""Exception hierarchy shared by every module of the package."""


class HMOTError(Exception):
    """Base class for all errors raised by :mod:`hmot`."""


class InputError(HMOTError, ValueError):
    """Invalid arguments or malformed input data."""


class ArbitrageError(InputError):
    """A call-price curve that admits static arbitrage."""

    def __init__(self, message, strike=None):
        super().__init__(message)
        self.strike = strike


class DomainError(InputError):
    """Evaluation outside the support where a quantity is defined."""


class PayoffSyntaxError(InputError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class PayoffEvaluationError(HMOTError, ArithmeticError):
    pass


class ConfigError(InputError):
    """Problem config that cannot be parsed; ``field`` is a dotted path."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class ScaleLimitError(HMOTError):
    """Model exceeds the internal solver scale cap; export it instead."""

    def __init__(self, message, n_vars=None, cap=None):
        super().__init__(message)
        self.n_vars = n_vars
        self.cap = cap


class InfeasibleError(HMOTError):
    def __init__(self, message, diagnosis=None):
        super().__init__(message)
        self.diagnosis = diagnosis or {}


class NumericalInstabilityError(HMOTError):
    pass


class NotOptimalError(HMOTError):
    pass
