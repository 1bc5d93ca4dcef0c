"""Exception types shared across the toolkit."""


class DataValidationError(ValueError):
    """Input records, files, or configs violate their schema or contract."""


class NumericalFailure(RuntimeError):
    """An optimizer diverged, failed to converge, or left the finite range."""
