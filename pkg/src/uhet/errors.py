"""Exception hierarchy for the uhet package."""


class UhetError(Exception):
    """Base class for all uhet errors."""


class IngestionError(UhetError):
    """Raised when tabular input cannot be parsed into a dataset."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class ValidationError(UhetError):
    """Raised when a dataset or configuration violates an invariant."""


class SingularMatrixError(UhetError):
    """Raised when a factorization or solve fails on a singular matrix."""


class SingularDesignError(UhetError):
    """Raised when a regression design matrix is rank deficient."""


class NonConvergenceError(UhetError):
    """Raised when an iterative fit fails to converge.

    Carries the last iterate and gradient norm for diagnostics.
    """

    def __init__(self, message, beta=None, grad_norm=None):
        super().__init__(message)
        self.beta = beta
        self.grad_norm = grad_norm


class SeparationError(UhetError):
    """Raised when logistic regression detects (quasi-)separation."""


class TrimInfeasibleError(UhetError):
    """Raised when trimming would leave fewer than two subjects in a group."""


class DegenerateWeightsError(UhetError):
    """Raised when a group's weight sum is zero or non-finite."""


class CoverageError(UhetError):
    """Raised when tuple sampling cannot cover every subject at least once."""


class InferenceError(UhetError):
    """Raised for numerical failures inside the global test pipeline."""
