"""Device-independent joint-reality tests for two-valued observables."""

from .errors import (
    AgreementViolated,
    DegenerateEllipsoid,
    DegenerateSteering,
    DirealityError,
    InfeasibleInput,
    LocalityBookkeepingViolated,
    NonPhysicalState,
    NonProbabilisticResponse,
    NotConvexQuadrilateral,
    ParallelObservables,
    SingularSystem,
)
from .qubit_core import QubitObservable, SteeredOutcome, TwoQubitState, expectation, singlet, steer, werner

__version__ = "0.1.0"

__all__ = [
    "AgreementViolated",
    "DegenerateEllipsoid",
    "DegenerateSteering",
    "DirealityError",
    "InfeasibleInput",
    "LocalityBookkeepingViolated",
    "NonPhysicalState",
    "NonProbabilisticResponse",
    "NotConvexQuadrilateral",
    "ParallelObservables",
    "QubitObservable",
    "SingularSystem",
    "SteeredOutcome",
    "TwoQubitState",
    "__version__",
    "expectation",
    "singlet",
    "steer",
    "werner",
]
