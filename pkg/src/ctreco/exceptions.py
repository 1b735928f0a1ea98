"""Package exceptions.

Input problems raise :class:`ValidationError` (a ValueError, so callers
validating by hand keep working); breakdowns of the numerics -- singular
or ill-conditioned solves -- raise :class:`NumericalError`.  The CLI maps
them to exit codes 2 and 3 respectively.
"""


class ValidationError(ValueError):
    """Invalid inputs or configuration."""


class NumericalError(RuntimeError):
    """A linear-algebra step failed or is too ill-conditioned to trust."""
