"""Exception types shared across the package."""


class DomainError(ValueError):
    """A numerical input lies outside the domain where a model is defined."""


class OutOfRangeError(ValueError):
    """A requested region lies (partly) outside a variation map or placement."""
