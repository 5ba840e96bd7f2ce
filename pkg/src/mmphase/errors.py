"""Exception hierarchy.

Every failure raised by the library derives from :class:`MMPhaseError`, so
callers (and the CLI) can catch one type and report it uniformly.
"""


class MMPhaseError(Exception):
    """Base class for all library errors."""

    code = "error"


class InadmissibleParameters(MMPhaseError, ValueError):
    code = "inadmissible_parameters"


class DomainError(MMPhaseError, ValueError):
    code = "domain_error"


class SingularSlope(MMPhaseError, ZeroDivisionError):
    """Point lies on the vertical isocline, where dy/dx is undefined."""

    code = "singular_slope"


class PoleError(MMPhaseError, ZeroDivisionError):
    """K(c) evaluated at its pole c = -1/eps."""

    code = "pole"


class IntegrationError(MMPhaseError, RuntimeError):
    code = "integration_failed"


class StiffnessFailure(IntegrationError):
    """Step size collapsed below the representable resolution of the span."""

    code = "stiffness_failure"


class FitError(MMPhaseError, ValueError):
    code = "fit_failed"


class InsufficientPrecision(FitError):
    code = "insufficient_precision"


class UnsupportedResonance(MMPhaseError, ValueError):
    code = "unsupported_resonance"


class ConstructionError(MMPhaseError, RuntimeError):
    code = "construction_failed"
