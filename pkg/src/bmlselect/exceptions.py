"""Exception types shared across the package."""


class BmlselectError(Exception):
    """Base class for all package errors."""


class CovarianceError(BmlselectError):
    """Covariance specification invalid or matrix not positive definite."""


class SingularDesignError(BmlselectError):
    """Design matrix (or a candidate submatrix) is rank deficient."""


class DegenerateVarianceError(BmlselectError):
    """Residual variance estimate is zero: the model interpolates the data."""


class SaturatedModelError(BmlselectError):
    """Residual likelihood undefined because p >= n."""


class PenaltyUndefinedError(BmlselectError):
    """Finite-sample penalty undefined because n - p - 2 <= 0."""


class LambdaEstimationError(BmlselectError):
    """Marginal-likelihood maximization over the prior scale failed."""


class CandidateExplosionError(BmlselectError):
    """Too many candidate models to enumerate exhaustively."""


class NoAdmissibleCandidateError(BmlselectError):
    """Every candidate model was excluded during selection."""


class DataParseError(BmlselectError):
    """Input CSV or configuration file could not be parsed."""
