"""Exception types shared across the package."""

from __future__ import annotations


class DirealityError(Exception):
    """Base class for all domain errors raised by this package."""


class NonPhysicalState(DirealityError):
    """A density operator failed the Hermitian / trace / positivity checks."""


class DegenerateSteering(DirealityError):
    """A steering outcome has (numerically) zero probability."""


class DegenerateEllipsoid(DirealityError):
    """The steering ellipsoid collapses because the steering-side marginal is pure."""


class ParallelObservables(DirealityError):
    """Two observable directions are (anti)parallel, so the construction is undefined."""


class NotConvexQuadrilateral(DirealityError):
    """Four subensemble points are not a convex quadrilateral in clockwise order."""


class SingularSystem(DirealityError):
    """The 2x2 weight-recovery system has (numerically) zero determinant."""


class LocalityBookkeepingViolated(DirealityError):
    """Count tables disagree on N(alpha, beta | E) across steering partitions."""


class AgreementViolated(DirealityError):
    """Two mixtures disagree on their joint frequencies beyond statistical tolerance."""


class NonProbabilisticResponse(DirealityError):
    """A constructed response function left the interval [0, 1]."""


class InfeasibleInput(DirealityError):
    """A correlation table admits no local deterministic model."""
