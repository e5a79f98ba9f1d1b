"""Exception hierarchy shared by every klslab module."""


class KLSLabError(Exception):
    """Base class for all klslab errors."""


class ConstructionError(KLSLabError, ValueError):
    """Invalid parameters for a density family."""


class DimensionError(KLSLabError, ValueError):
    """Array shapes do not agree."""


class PreconditionError(KLSLabError, ValueError):
    """An input violates the precondition of a check or bound."""


class DegenerateTiltError(KLSLabError, FloatingPointError):
    """Exponential tilt left no finite, positive weight."""


class DegenerateCovarianceError(KLSLabError, ArithmeticError):
    """Empirical covariance is singular (rank deficient)."""


class PairSumCapError(KLSLabError, RuntimeError):
    """Naive O(n^2) pair sum requested above the atom cap; subsample first."""


class DisconnectedGraphError(KLSLabError, RuntimeError):
    """k-NN graph stayed disconnected after the retry."""


class VacuousScanError(KLSLabError, ValueError):
    """An estimator was asked to scan an empty family of cuts."""
