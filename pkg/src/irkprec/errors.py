"""Exception types shared across the package."""


class FactorizationError(RuntimeError):
    """Raised when an LDU factorization hits a zero pivot."""

    def __init__(self, pivot_index, message=None):
        self.pivot_index = pivot_index
        super().__init__(message or f"zero pivot at index {pivot_index}")


class ResourceLimitError(RuntimeError):
    """Raised when a requested problem exceeds a size guard."""


class CoefficientError(ValueError):
    """Raised when a coefficient field violates alpha > 0 or beta >= 0."""


class SubsolveError(RuntimeError):
    """Raised when a preconditioner subsolver breaks down."""


class ConfigError(ValueError):
    """Raised for invalid experiment configurations."""
