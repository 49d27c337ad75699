"""Guaranteed (minimax) estimation of linear functionals of periodic solutions.

The library estimates l(x) = int_0^T (x(t), l0(t)) dt for the T-periodic
solution of a linear system dx/dt = A(t) x + B(t) f(t) from noisy point and
window observations, when the forcing lives in a weighted-energy ball and the
noise correlations obey trace budgets.  The offline stage produces the
estimator (controls, constant, guaranteed error sigma) from the observation
scheme alone; the online stage evaluates it on realized data.

Typical use:

    import perimax

    scenario = perimax.load_scenario("scenario.json")
    ws = perimax.prepare(scenario)
    offline = perimax.solve_offline(ws)          # u_hat, c_hat, sigma, z_hat, p
    online = perimax.solve_online(ws, obs)       # p_hat, x_hat, l(x_hat)
    value = perimax.apply_estimator(offline, obs)
"""
from .algebraic import (
    ReductionTables,
    assemble_reduction,
    compare_solutions,
    solve_pointwise,
    zbar0,
    zbar_i,
)
from .errors import (
    BudgetExceeded,
    DegenerateBVP,
    HasIntervals,
    IllConditionedModel,
    IntegrationOverflow,
    NotSolvable,
    NumericalInconsistency,
    ObservationMismatch,
    PerimaxError,
    ScenarioFormatError,
    SingularFundamental,
    SingularQ,
    SingularReduction,
    ZeroControl,
    ZeroSensitivity,
)
from .estimator import (
    ControlVector,
    IntervalControl,
    MinimaxSolution,
    OnlineSolution,
    adjoint_state,
    apply_estimator,
    cost,
    solve_offline,
    solve_online,
)
from .floquet import (
    AdjointFundamentalTable,
    FundamentalMatrixTable,
    SolvabilityReport,
    adjoint_fundamental,
    fundamental_matrix,
    solvability_check,
)
from .kernel import backend
from .oracle import (
    BruteForceResult,
    CBSResult,
    QuadraticModel,
    WorstCaseForcing,
    WorstCaseNoise,
    brute_force_minimize,
    build_quadratic_model,
    generalized_cbs,
    worst_case_f,
    worst_case_noise,
)
from .periodic_bvp import (
    ImpulsiveLinearBVP,
    ImpulsiveTrajectory,
    solve_impulsive_adjoint,
    solve_impulsive_bvp,
    solve_periodic_forced,
)
from .providers import (
    CallableFunction,
    ConstantFunction,
    FourierFunction,
    GridFunction,
    PeriodicFunction,
    function_from_json,
)
from .scenario import (
    FunctionalSpec,
    IntervalObservation,
    ObservationScheme,
    PeriodicSystem,
    PointObservation,
    Scenario,
    SolverSettings,
    TimeGrid,
    UncertaintySpec,
    ValidationReport,
    build_grid,
    load_scenario,
    scenario_from_dict,
    validate_scenario,
)
from .sim import (
    IntervalSamples,
    NoiseRealization,
    ObservationData,
    SampledForcing,
    g1_membership,
    make_observations,
    observations_from_dict,
    observations_to_dict,
    sample_f_in_G1,
    sample_noise,
    simulate_truth,
)
from .workspace import Workspace, prepare

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "backend",
    # scenario
    "Scenario", "PeriodicSystem", "ObservationScheme", "PointObservation",
    "IntervalObservation", "UncertaintySpec", "FunctionalSpec", "SolverSettings",
    "TimeGrid", "ValidationReport", "build_grid", "load_scenario",
    "scenario_from_dict", "validate_scenario",
    # coefficient functions
    "PeriodicFunction", "ConstantFunction", "FourierFunction", "GridFunction",
    "CallableFunction", "function_from_json",
    # floquet
    "FundamentalMatrixTable", "AdjointFundamentalTable", "SolvabilityReport",
    "fundamental_matrix", "adjoint_fundamental", "solvability_check",
    # periodic BVPs
    "ImpulsiveTrajectory", "ImpulsiveLinearBVP", "solve_impulsive_bvp",
    "solve_impulsive_adjoint", "solve_periodic_forced",
    # estimation
    "Workspace", "prepare", "ControlVector", "IntervalControl",
    "MinimaxSolution", "OnlineSolution", "adjoint_state", "cost",
    "solve_offline", "solve_online", "apply_estimator",
    # algebraic reduction
    "ReductionTables", "zbar0", "zbar_i", "assemble_reduction",
    "solve_pointwise", "compare_solutions",
    # oracle
    "CBSResult", "generalized_cbs", "QuadraticModel", "build_quadratic_model",
    "BruteForceResult", "brute_force_minimize", "WorstCaseForcing",
    "worst_case_f", "WorstCaseNoise", "worst_case_noise",
    # simulation
    "ObservationData", "IntervalSamples", "SampledForcing", "NoiseRealization",
    "simulate_truth", "sample_f_in_G1", "g1_membership", "sample_noise",
    "make_observations", "observations_to_dict", "observations_from_dict",
    # errors
    "PerimaxError", "ScenarioFormatError", "NotSolvable", "DegenerateBVP",
    "IntegrationOverflow", "SingularFundamental", "ObservationMismatch",
    "NumericalInconsistency", "SingularReduction", "HasIntervals", "SingularQ",
    "IllConditionedModel", "ZeroSensitivity", "ZeroControl", "BudgetExceeded",
]
