"""Exception hierarchy shared across modules."""


class StackRLError(Exception):
    """Base class for all package errors."""


class ContractViolation(StackRLError, ValueError):
    """Raised when an input breaks an operation's precondition."""


class DivergenceError(StackRLError, ArithmeticError):
    """A state left the finite, guarded region."""

    def __init__(self, message, index=None):
        super().__init__(message if index is None else f"{message} (index {index})")
        self.index = index


class OptimizerFailed(StackRLError):
    pass


class UpdateFailed(StackRLError):
    pass


class OracleFailed(StackRLError):
    pass


class EnumerationTooLarge(StackRLError):
    pass
