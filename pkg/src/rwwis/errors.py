"""Exception hierarchy shared by the engines and the CLI."""

from __future__ import annotations


class RWwISError(Exception):
    """Base class for all package errors."""


class WalkFormatError(RWwISError, ValueError):
    """A walk document or kernel is malformed or not stochastic."""


class AssumptionError(RWwISError, ValueError):
    """A basic assumption (irreducibility, trivial arithmetic, zero drift,
    nonsingular covariance) does not hold."""

    def __init__(self, assumption: str, message: str):
        super().__init__(f"assumption ({assumption}) failed: {message}")
        self.assumption = assumption


class ConvergenceError(RWwISError, ArithmeticError):
    """A numerical procedure did not reach its stated accuracy."""


class BudgetError(RWwISError, RuntimeError):
    """The requested computation exceeds the configured work or memory budget."""

    def __init__(self, message: str, required: float | None = None, hint: str | None = None):
        text = message
        if required is not None:
            text += f" (required budget: {required:.3g})"
        if hint:
            text += f"; {hint}"
        super().__init__(text)
        self.required = required
        self.hint = hint


class InvariantError(RWwISError, RuntimeError):
    """An internal invariant (renewal identity, sign constraint) was violated."""


class DimensionError(RWwISError, ValueError):
    """Quantity requested for a dimension where it is undefined or inapplicable."""
