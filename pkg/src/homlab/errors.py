"""Exception types raised by homlab."""


class HomlabError(Exception):
    """Base class for all homlab errors."""


class CoefficientError(HomlabError, ValueError):
    """Coefficient fields are malformed or violate ellipticity."""


class UnderResolvedError(HomlabError, ValueError):
    """A grid is too coarse for the requested scale."""


class ConvergenceError(HomlabError, RuntimeError):
    """An iterative solver failed to reach its tolerance."""


class CoercivityError(HomlabError, ValueError):
    """The zeroth-order shift is below the computable coercivity threshold."""

    def __init__(self, lam, lam0):
        super().__init__(f"lambda={lam:g} is below the coercivity threshold lambda0={lam0:g}")
        self.lam = lam
        self.lam0 = lam0


class CompatibilityError(HomlabError, ValueError):
    """Data for a singular (pure Neumann or torus) problem is incompatible."""
