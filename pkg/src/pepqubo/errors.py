"""Exception types shared across the package.

The CLI maps these onto exit codes: InputError -> 2, InfeasibleError -> 1.
"""


class PepquboError(Exception):
    """Base class for all package errors."""


class InputError(PepquboError):
    """Malformed or missing input data (files, tables, configuration)."""


class InfeasibleError(PepquboError):
    """A run produced no feasible solution."""


class ConvergenceError(PepquboError):
    """An iterative procedure failed to converge; carries its trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []
