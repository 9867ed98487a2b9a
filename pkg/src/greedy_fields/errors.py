"""Exception hierarchy shared by every module."""


class GreedyFieldsError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(GreedyFieldsError, ValueError):
    """An argument violates an operation's precondition."""


class ConfigurationError(GreedyFieldsError, ValueError):
    """A mark law, window or experiment config cannot be honoured."""


class CapacityError(GreedyFieldsError, RuntimeError):
    """An exact computation would exceed its documented size cap."""


class InfeasibleError(GreedyFieldsError, ValueError):
    """The requested budget cannot connect the requested anchors."""
