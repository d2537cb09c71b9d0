"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when an operation receives non-finite or malformed inputs."""


class DegenerateGeometryError(ValueError):
    """Raised when a geometric computation has no well-defined answer."""


class NumericError(ArithmeticError):
    """Raised when a numeric routine produces non-finite intermediate values."""
