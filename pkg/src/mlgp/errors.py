"""Exception types shared across the package."""

import numpy as np


class InvalidInput(ValueError):
    """Raised when arguments violate a documented precondition."""


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Raised when a Cholesky factorization fails even after jitter.

    ``stage`` names the matrix or assembly step that failed (e.g. ``"Sigma0"``
    or ``"block step 3"``) so callers can report where things went wrong.
    """

    def __init__(self, message, stage=None):
        if stage is not None:
            message = f"{stage}: {message}"
        super().__init__(message)
        self.stage = stage


class NumericalOverflow(ArithmeticError):
    """Raised when a triangular solve produces non-finite values."""
