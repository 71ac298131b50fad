"""Exception types raised by the solver toolkit."""


class ProblemError(ValueError):
    """Malformed problem description or unsupported family."""


class RegimeError(ValueError):
    """A required a priori / contraction condition does not hold."""


class DomainError(ValueError):
    """Evaluation requested outside the domain of a field or a time window."""


class ConvergenceError(RuntimeError):
    """Fixed-point or descent iteration did not reach its tolerance."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class BudgetError(RuntimeError):
    """Recursive field evaluation exceeded its evaluation budget."""
