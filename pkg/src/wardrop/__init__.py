"""Multi-population Wardrop equilibria on directed networks.

Flows of several interacting populations are driven to equilibrium by
integrating a positivity-preserving projected dynamical system on each
population's conservation polytope, and results are certified through
best-response gap functions. See :mod:`wardrop.cli` for the command-line
entry point and :mod:`wardrop.scenario` for the input format.
"""

from .costs import (
    EMISSION_TYPES,
    CostModel,
    EmissionCost,
    EmissionParams,
    FlowProfile,
    LinearSumCost,
    MonotonicityReport,
    WeightedCongestionCost,
    edge_speed,
    emission_rate,
    monotonicity_probe,
)
from .equilibrium import (
    BestResponse,
    GapCertificate,
    NegativeCycleError,
    OscillationError,
    best_response,
    certify,
    gauss_seidel_oracle,
    potential_qp_oracle,
    random_interior,
    sample_profiles,
)
from .hrf import (
    HrfState,
    SolveReport,
    SolverConfig,
    StepFailure,
    TrajectoryPoint,
    bregman_divergence,
    metric_inverse_apply,
    projected_direction,
    rhs,
    solve,
    step,
)
from .network import (
    KirchhoffSystem,
    NetworkError,
    NetworkSpec,
    PopulationSpec,
    PopulationSystem,
    ReducedPopulation,
    build_kirchhoff,
    interior_point,
    reduce_population,
)
from .scenario import (
    PRESET_NAMES,
    Scenario,
    ScenarioError,
    dump_scenario,
    load_scenario,
    parse_scenario,
    preset,
    scenario_to_dict,
)

__version__ = "0.1.0"

__all__ = [
    "BestResponse",
    "CostModel",
    "EMISSION_TYPES",
    "EmissionCost",
    "EmissionParams",
    "FlowProfile",
    "GapCertificate",
    "HrfState",
    "KirchhoffSystem",
    "LinearSumCost",
    "MonotonicityReport",
    "NegativeCycleError",
    "NetworkError",
    "NetworkSpec",
    "OscillationError",
    "PRESET_NAMES",
    "PopulationSpec",
    "PopulationSystem",
    "ReducedPopulation",
    "Scenario",
    "ScenarioError",
    "SolveReport",
    "SolverConfig",
    "StepFailure",
    "TrajectoryPoint",
    "WeightedCongestionCost",
    "best_response",
    "bregman_divergence",
    "build_kirchhoff",
    "certify",
    "dump_scenario",
    "edge_speed",
    "emission_rate",
    "gauss_seidel_oracle",
    "interior_point",
    "load_scenario",
    "metric_inverse_apply",
    "monotonicity_probe",
    "parse_scenario",
    "potential_qp_oracle",
    "preset",
    "random_interior",
    "reduce_population",
    "rhs",
    "sample_profiles",
    "scenario_to_dict",
    "solve",
    "step",
    "__version__",
]
