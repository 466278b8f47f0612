"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class IllConditionedError(ArithmeticError):
    """A matrix operand is too close to singular for the requested operation.

    Raised when a condition-number estimate exceeds the module ceiling;
    involution/Jacobian tolerances are meaningless past that point.
    """


class NotSpdError(ValueError):
    """A matrix expected to be symmetric positive definite is not."""
