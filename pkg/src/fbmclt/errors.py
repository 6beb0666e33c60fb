"""Exception types shared across the package.

Every error raised on purpose by this package derives from FbmcltError, so
callers (and the CLI exit-code mapping) can distinguish our failures from
genuine bugs.
"""


class FbmcltError(Exception):
    """Base class for all package errors."""


class DomainError(FbmcltError):
    """An argument is outside the mathematical domain of the operation.

    Examples: Hurst index outside (1/2, 1), negative times, k <= 1,
    too few samples for a statistic to make sense.
    """


class ConfigurationError(FbmcltError):
    """A structurally invalid configuration (inconsistent or unusable).

    Examples: zero replications, fewer path components than integration
    levels, a grid that does not cover the requested horizon mode.
    """


class NumericalError(FbmcltError):
    """A numerical routine produced something unusable.

    Examples: covariance factorization fails even after the documented
    jitter retry, non-finite Monte Carlo weights.
    """


class ConvergenceError(NumericalError):
    """A quadrature failed to reach the requested tolerance.

    The best available estimate is attached as ``best`` (a QuadResult)
    so callers can decide whether to accept it.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class PartialReportError(FbmcltError):
    """An experiment ran out of budget before finishing.

    The report for the blocks that did complete is attached as ``partial``.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
