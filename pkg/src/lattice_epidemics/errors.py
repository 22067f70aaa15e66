"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    """A parameter violates an operation's precondition."""


class BracketInvalidError(ValueError):
    """Bisection bracket does not straddle the survival threshold (BRACKET_INVALID)."""

    code = "BRACKET_INVALID"


class CFLViolationError(ValueError):
    """Explicit time step exceeds the diffusive stability limit (CFL_VIOLATION)."""

    code = "CFL_VIOLATION"


class BudgetExceededError(RuntimeError):
    """A simulation exhausted its event budget before reaching the horizon."""
