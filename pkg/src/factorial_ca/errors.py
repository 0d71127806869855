"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """An input violates a documented precondition."""


class SingularMatrixError(ArithmeticError):
    """A symmetric factorization hit a pivot below tolerance."""

    def __init__(self, message: str, dependent: tuple[int, ...] = ()) -> None:
        super().__init__(message)
        self.dependent = dependent


class SingularDesignError(SingularMatrixError):
    """The centered covariate Gram matrix is not invertible."""


class TooLargeError(InvalidArgumentError):
    """Exhaustive enumeration would exceed the configured guard."""

    def __init__(self, message: str, size: int) -> None:
        super().__init__(message)
        self.size = size


class EmptyCovariatesError(InvalidArgumentError):
    """An operation that needs covariates was given p = 0."""


class ConditioningWarning(UserWarning):
    """The covariate Gram matrix is badly conditioned but still solvable."""
