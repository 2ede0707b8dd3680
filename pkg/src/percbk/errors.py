"""Exception hierarchy shared by every module.

CLI exit codes key off these classes: assertion failures exit 2, anything
derived from :class:`PreconditionError` or :class:`CapacityError` exits 3.
"""


class PercBKError(Exception):
    """Base class for all toolkit errors."""


class CapacityError(PercBKError, ValueError):
    """A size cap (vertices, edges, enumeration width) was exceeded."""

    def __init__(self, what, size, limit):
        self.what = what
        self.size = size
        self.limit = limit
        super().__init__(f"{what} = {size} exceeds the configured limit {limit}")


class PreconditionError(PercBKError, ValueError):
    """An operation's input fails a mathematical precondition."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class DegenerateMeasureError(PreconditionError):
    """A conditional probability has zero total weight."""


class ConditioningError(PreconditionError):
    """Conditioning on a configuration of probability zero."""


class NumericalError(PercBKError, ArithmeticError):
    """A linear system is too ill-conditioned to trust."""
