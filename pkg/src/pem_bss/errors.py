"""Exception types shared across the package."""


class PemError(Exception):
    """Base class for all package-specific errors."""


class InvalidInput(PemError):
    """An argument violates a documented precondition."""


class NotPositiveDefinite(PemError):
    """Cholesky factorization hit a non-positive pivot."""


class DomainMismatch(PemError):
    """Operation called with a source domain it does not support."""


class DegenerateMixing(PemError):
    """Mixing matrix remained column-rank deficient after resampling."""


class NumericalDivergence(PemError):
    """Fast inference produced non-finite activity.

    Carries the inner-loop iteration (`tau`) and, when raised from a full
    run, the sample index (`sample`).
    """

    def __init__(self, msg, tau=None, sample=None):
        super().__init__(msg)
        self.tau = tau
        self.sample = sample


class TooLargeForExactAlignment(PemError):
    """Brute-force permutation alignment is limited to n <= 8."""


class SpectrumAtSingularity(PemError):
    """Normalized off-diagonal matrix has an eigenvalue at the -1 singularity."""


class SpecError(PemError):
    """Experiment description failed to parse or validate."""
