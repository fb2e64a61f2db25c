"""Exception hierarchy shared by the library and the CLI."""


class RankSphericityError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(RankSphericityError, ValueError):
    """Input values are out of range, non-finite or malformed."""


class InsufficientSampleError(InvalidInputError):
    """Too few observations for the requested operation."""

    def __init__(self, n: int, minimum: int, what: str = "this operation"):
        self.n = n
        self.minimum = minimum
        super().__init__(f"{what} requires n >= {minimum} observations, got n = {n}")


class DegenerateInputError(InvalidInputError):
    """Input is well formed but carries no usable variation."""
