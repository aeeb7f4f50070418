"""Exceptions raised across the toolkit. The CLI maps each family to an exit code."""


class SkatError(Exception):
    """Base class for every error the toolkit raises on purpose."""


class DistributionError(SkatError, ValueError):
    """A distribution, channel or input document violates its invariants."""


class UsageError(SkatError, ValueError):
    """An operation was called with arguments that make no sense for it."""


class UnknownVariableError(SkatError, KeyError):
    """A variable name does not exist in the distribution."""

    def __str__(self) -> str:
        # KeyError quotes its argument; keep the plain message.
        return str(self.args[0]) if self.args else ""


class BudgetExceededError(SkatError, RuntimeError):
    """An exact enumeration or search would exceed its configured budget."""


class InconsistencyError(SkatError, ArithmeticError):
    """An information measure came out negative beyond floating-point noise."""
