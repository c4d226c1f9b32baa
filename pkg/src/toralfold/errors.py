"""Exception hierarchy.

Validation problems (bad input, bad map specs) and numerical failures
(budgets, convergence, loss of hyperbolicity) are kept apart so the CLI
can map them to distinct exit codes.
"""


class ToralfoldError(Exception):
    """Base class for all package errors."""


class InvalidInputError(ToralfoldError, ValueError):
    """Malformed or out-of-domain input."""


class ValidationError(InvalidInputError):
    """A map or matrix violates a structural requirement (e.g. hyperbolicity)."""


class NumericalError(ToralfoldError, ArithmeticError):
    """Base class for failures of a numerical procedure."""


class DegeneratePeriodError(NumericalError):
    """A^n - I is singular: some eigenvalue of A is a root of unity."""


class PerturbationTooLargeError(NumericalError):
    """Newton/continuation failed or preimage branches collided."""


class TreeBudgetError(NumericalError):
    """A preimage tree or periodic-point set exceeds the configured budget."""

    def __init__(self, message: str, size: int, budget: int):
        super().__init__(message)
        self.size = size
        self.budget = budget


class HyperbolicityLossError(NumericalError):
    """The derivative cocycle shows no usable gap between stable and unstable rates."""
