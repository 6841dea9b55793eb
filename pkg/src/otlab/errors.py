"""Semantic exception hierarchy for otlab.

Everything raised on purpose derives from :class:`OTLabError`, so callers
(and the CLI) can separate "bad input / broken invariant" from genuine bugs.
"""


class OTLabError(Exception):
    """Base class for all otlab errors."""


class ShapeError(OTLabError):
    """Input has the wrong shape, or contains non-finite entries."""


class EmptySpaceError(OTLabError):
    """A metric space must contain at least one point."""


class InvariantError(OTLabError):
    """A validated value (measure, coupling, dual pair, ...) broke its contract."""


class SpaceMismatchError(OTLabError):
    """Two values live on incompatible metric spaces."""


class DomainError(OTLabError):
    """A scalar argument lies outside the mathematical domain of the operation."""


class ExponentError(DomainError):
    """The exponent p is outside the range this operation supports."""


class FeasibilityError(OTLabError):
    """A dual pair violates the cost constraint a(x) + b(y) <= c(x, y)."""


class GlueingError(OTLabError):
    """Two couplings cannot be glued: their middle marginals disagree."""


class UnsupportedInstanceError(OTLabError):
    """The instance is outside the (deliberately narrow) scope of this operation."""


class DegenerateTriangleError(OTLabError):
    """One leg of the triangle has zero length; use the trivial branch."""


class SolverError(OTLabError):
    """The transportation solver failed to terminate or certify."""
