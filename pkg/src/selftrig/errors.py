"""Shared exception types for the selftrig toolkit."""


class SelftrigError(Exception):
    """Base class for all toolkit errors."""


class NumericOverflow(SelftrigError):
    """A numerical evaluation left the finite range (finite-escape indicator)."""


class StiffnessFailure(SelftrigError):
    """Adaptive step size underflowed; the problem is too stiff for the method."""


class OriginReached(SelftrigError):
    """State norm collapsed to zero; ratio-based quantities are undefined there."""


class InvalidCertificate(SelftrigError):
    """Stability certificate parameters violate their invariants."""


class WeightSingularity(SelftrigError):
    """A Jacobian weight r_i/(xi + r_i) hit a zero denominator."""


class EmptyRegion(SelftrigError):
    """A search region contains no admissible points."""


class InvalidThreshold(SelftrigError):
    """Trigger threshold must be positive."""


class NotPolynomial(SelftrigError):
    """Operation requires a purely polynomial field."""


class InvalidLambda(SelftrigError):
    """Lift scale must be positive."""


class QuadratureFailure(SelftrigError):
    """Adaptive quadrature did not converge to the requested tolerance."""


class SamplePointDegenerate(SelftrigError):
    """Degree inference sampled a point where the field vanishes."""


class ConfigError(SelftrigError):
    """Run configuration failed schema validation."""
