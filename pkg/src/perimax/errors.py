"""Exception hierarchy for scenario parsing, solvability and numerics."""


class PerimaxError(Exception):
    """Base class for all errors raised by this package."""


class ScenarioFormatError(PerimaxError):
    """Scenario or observation data cannot be parsed into the expected shapes."""


class NotSolvable(PerimaxError):
    """The homogeneous system admits a nontrivial periodic solution: det(E - X(T)) is
    numerically zero, so periodic problems for this system are ill-posed."""


class DegenerateBVP(PerimaxError):
    """The closure matrix of an impulsive periodic boundary value problem is singular."""


class IntegrationOverflow(PerimaxError):
    """Fundamental matrix entries exceeded the overflow guard during integration."""


class SingularFundamental(PerimaxError):
    """A fundamental matrix node is too ill-conditioned to invert reliably."""


class ObservationMismatch(PerimaxError):
    """Observation data does not match the scenario's observation scheme or grid."""


class NumericalInconsistency(PerimaxError):
    """An internally computed quantity violates a structural property (e.g. a
    variance surrogate with a significantly negative real part)."""


class SingularReduction(PerimaxError):
    """The pointwise algebraic reduction produced a numerically singular system."""


class HasIntervals(PerimaxError):
    """A pointwise-only operation was invoked on a scenario with interval observations."""


class SingularQ(PerimaxError):
    """A weighting matrix that must be Hermitian positive definite is not."""


class IllConditionedModel(PerimaxError):
    """The quadratic cost model is too ill-conditioned for a trustworthy minimum."""


class ZeroSensitivity(PerimaxError):
    """The worst-case forcing direction is undefined because B*z vanishes."""


class ZeroControl(PerimaxError):
    """The worst-case noise direction is undefined because the control vanishes."""


class BudgetExceeded(PerimaxError):
    """Requested noise budget weights sum to more than the unit budget."""
