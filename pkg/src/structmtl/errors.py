"""Shared error and warning types.

ParameterError signals invalid user input (bad shapes, ranges, config keys).
NumericalError signals a failure inside a numerical routine (SVD breakdown,
non-finite objective).  GenerationError signals an infeasible synthetic-world
request.  The CLI maps these to distinct exit codes.
"""


class ParameterError(ValueError):
    """Invalid argument or configuration value."""


class NumericalError(RuntimeError):
    """A numerical routine failed (non-finite values, factorization breakdown)."""


class GenerationError(RuntimeError):
    """A synthetic-world request could not be satisfied."""


class ConvergenceWarning(UserWarning):
    """An iterative routine stopped before reaching its tolerance."""


class DegeneracyWarning(UserWarning):
    """A rank-deficient input forced a deterministic fallback."""
