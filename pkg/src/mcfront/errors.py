"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument violates a documented precondition."""


class CodecError(RuntimeError):
    """The audio codec reported a failure."""


class NumericError(ArithmeticError):
    """A numerical routine could not produce a trustworthy result."""
