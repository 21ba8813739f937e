"""AdaptiveFog: empirical latency models and optimal network switching.

Library + CLI for vehicular fog/cloud latency work: ingest RTT traces
(real or synthetic), build per-location empirical latency models for
multiple LTE networks, compute weighted-confidence metrics, solve the
network-switching decision problem with closed-form threshold policies,
and evaluate achieved confidence versus switching cost by trace replay.
"""

from .errors import (
    AdaptiveFogError,
    ConfigError,
    CoverageError,
    EstimationError,
    ModelFitError,
    ScenarioError,
    SolverError,
    TraceFormatError,
    TraceRangeError,
)
from .mobility import MobilityModel, estimate_transitions, split_sessions
from .policy import (
    Finite,
    INFINITE,
    Infinite,
    SwitchPolicy,
    SwitchProblem,
    always_switch_check,
    compile_problem,
    delta_fixed_point,
    kr_table,
    myopic_policy,
    never_switch_policy,
    select_server,
    single_slot_loss_bound,
    solve_finite,
    solve_infinite,
)
from .stats import (
    CdfShiftPenalty,
    EmpiricalCdf,
    LatencyModel,
    ScalarPenalty,
    confidence,
    fit_model,
    kr_distance,
    switching_penalty,
    weighted_confidence,
)
from .trace import (
    DiscreteState,
    GridSpec,
    RttSample,
    Server,
    ServiceClass,
    discretize,
    load_config,
    parse_trace,
    serialize_trace,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptiveFogError",
    "CdfShiftPenalty",
    "ConfigError",
    "CoverageError",
    "DiscreteState",
    "EmpiricalCdf",
    "EstimationError",
    "Finite",
    "GridSpec",
    "INFINITE",
    "Infinite",
    "LatencyModel",
    "MobilityModel",
    "ModelFitError",
    "RttSample",
    "ScalarPenalty",
    "ScenarioError",
    "Server",
    "ServiceClass",
    "SolverError",
    "SwitchPolicy",
    "SwitchProblem",
    "TraceFormatError",
    "TraceRangeError",
    "always_switch_check",
    "compile_problem",
    "confidence",
    "delta_fixed_point",
    "discretize",
    "estimate_transitions",
    "fit_model",
    "kr_distance",
    "kr_table",
    "load_config",
    "myopic_policy",
    "never_switch_policy",
    "parse_trace",
    "select_server",
    "serialize_trace",
    "single_slot_loss_bound",
    "solve_finite",
    "solve_infinite",
    "split_sessions",
    "switching_penalty",
    "weighted_confidence",
]
