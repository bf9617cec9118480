"""Exception types raised across the package."""


class AdlabError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(AdlabError, ValueError):
    pass


class NotPSD(AdlabError, ValueError):
    pass


class NotPositiveDefinite(AdlabError, ValueError):
    pass


class NotUpperHalfPlane(AdlabError, ValueError):
    pass


class EigensolverFailure(AdlabError, RuntimeError):
    pass


class NearSingular(AdlabError, ArithmeticError):
    """Raised when ``I + alpha CM(z)`` is too ill-conditioned to invert."""


class NotAtomic(AdlabError, ValueError):
    pass


class HypothesesNotMet(AdlabError, ValueError):
    """The probe point is not a common carrier point of both measures."""


class NormalizationImpossible(AdlabError, ValueError):
    pass


class DegenerateInput(AdlabError, ValueError):
    pass


class NotCyclic(AdlabError, ValueError):
    pass
