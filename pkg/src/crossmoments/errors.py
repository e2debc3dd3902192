"""Exception types shared across the package."""


class CrossmomentsError(Exception):
    """Base class for all package-specific errors."""


class NonSmooth(CrossmomentsError):
    """A model lacks the derivatives required by the requested operation."""


class DegenerateLag(CrossmomentsError):
    """1 - r^2(tau) vanishes at a positive lag (periodic covariance)."""


class DegenerateObservation(CrossmomentsError):
    """Observed block of a Gaussian conditioning problem is singular."""


class QuadratureNonConvergent(CrossmomentsError):
    """Successive quadrature refinements disagree beyond tolerance."""


class InnerMCBudgetExceeded(CrossmomentsError):
    """Target Monte Carlo standard error not reached within the sample cap."""


class EmbeddingNotPSD(CrossmomentsError):
    """Circulant embedding stayed indefinite after maximal padding.

    Carries the most negative eigenvalue seen, for diagnostics.
    """

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class InconclusiveTail(CrossmomentsError):
    """Spectral tail exponent too close to the critical value to decide."""


class NewtonStall(CrossmomentsError):
    """Newton polish failed to converge inside a candidate grid cell."""


class ConfigError(CrossmomentsError):
    """Invalid experiment configuration; message names the offending key."""
