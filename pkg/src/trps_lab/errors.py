"""Exceptions raised by trps_lab."""


class TrpsLabError(Exception):
    """Base class for all library errors."""


class InvalidInputError(TrpsLabError, ValueError):
    """An argument violates the documented precondition of an operation."""


class FitFailure(TrpsLabError):
    """Least-squares fit did not converge within the restart budget.

    The best parameters seen so far are attached as ``best`` (may be None).
    """

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual
