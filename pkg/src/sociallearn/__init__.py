"""Tools for simulating and bounding distributed learning over networks.

The package models groups of agents that observe private signals, exchange
beliefs over a communication graph, and update toward the hypotheses that
best explain what they see.  It provides the update rules themselves,
finite-time concentration bounds for their convergence, Monte Carlo
validation of those bounds, and a command line front end for running
reproducible experiments from JSON configuration files.
"""

from .hypotheses import (
    HypothesisSpace,
    InfiniteDivergenceError,
    LikelihoodModel,
    ModelReport,
    ModelViolation,
    SignalSpace,
    SupportMismatchError,
    agent_objective,
    global_objective,
    kl_divergence,
    objective_values,
    optimal_set,
    select_optimal,
    validate_distribution,
    validate_model,
)
from .graphs import (
    ConnectivityResult,
    Graph,
    GraphSequence,
    ReducibleMatrixError,
    WeightReport,
    WeightSchedule,
    WeightViolation,
    b_connectivity_check,
    complete_graph,
    directed_cycle,
    edgeless_graph,
    lazy_metropolis_weights,
    metropolis_weights,
    path_graph,
    ring_graph,
    second_eigenvalue_modulus,
    stationary_distribution,
    validate_weight_schedule,
)
from .rules import (
    AcceleratedState,
    BeliefMatrix,
    DegenerateUpdateError,
    DualAveragingState,
    InfeasibleReactionError,
    PushSumState,
    accelerated_update,
    bayes_then_geometric,
    bayes_update,
    degroot_social_update,
    dual_averaging_closed_form,
    geometric_then_bayes,
    gossip_dual_averaging_step,
    gossip_mixing_matrix,
    push_sum_update,
    reaction_update,
)
from .bounds import (
    BoundReport,
    PushSumConstants,
    belief_bound,
    constants_theorem2,
    constants_theorem3,
    gamma1_i,
    gamma2,
    lambda_theorem1,
    theorem1_report,
    theorem2_report,
    theorem3_report,
    transient_time,
    tv_concentration_bound,
)
from .simulate import (
    AssumptionError,
    ExperimentConfig,
    OracleConvergenceError,
    RULE_NAMES,
    TrajectoryLog,
    ValidationSummary,
    bound_report_for_config,
    default_burn_in,
    empirical_decay_rate,
    make_rng,
    mirror_descent_oracle,
    monte_carlo_validate,
    run_experiment,
    sample_signals,
    validate_config,
    wilson_interval,
)
from .config import ConfigError, output_directory, parse_config, serialize_config
from .persist import (
    ResultBundle,
    log_belief_bound,
    emit_plot_data,
    read_trajectory,
    write_plot_data,
    write_results,
)

__version__ = "0.1.0"

__all__ = [
    "AcceleratedState",
    "AssumptionError",
    "BeliefMatrix",
    "BoundReport",
    "ConfigError",
    "ConnectivityResult",
    "DegenerateUpdateError",
    "DualAveragingState",
    "ExperimentConfig",
    "Graph",
    "GraphSequence",
    "HypothesisSpace",
    "InfeasibleReactionError",
    "InfiniteDivergenceError",
    "LikelihoodModel",
    "ModelReport",
    "ModelViolation",
    "OracleConvergenceError",
    "PushSumConstants",
    "PushSumState",
    "RULE_NAMES",
    "ReducibleMatrixError",
    "ResultBundle",
    "SignalSpace",
    "SupportMismatchError",
    "TrajectoryLog",
    "ValidationSummary",
    "WeightReport",
    "WeightSchedule",
    "WeightViolation",
    "accelerated_update",
    "agent_objective",
    "b_connectivity_check",
    "bayes_then_geometric",
    "bayes_update",
    "belief_bound",
    "bound_report_for_config",
    "complete_graph",
    "constants_theorem2",
    "constants_theorem3",
    "default_burn_in",
    "degroot_social_update",
    "directed_cycle",
    "dual_averaging_closed_form",
    "edgeless_graph",
    "empirical_decay_rate",
    "gamma1_i",
    "gamma2",
    "geometric_then_bayes",
    "global_objective",
    "gossip_dual_averaging_step",
    "gossip_mixing_matrix",
    "kl_divergence",
    "lambda_theorem1",
    "lazy_metropolis_weights",
    "log_belief_bound",
    "make_rng",
    "metropolis_weights",
    "mirror_descent_oracle",
    "monte_carlo_validate",
    "objective_values",
    "optimal_set",
    "output_directory",
    "parse_config",
    "path_graph",
    "emit_plot_data",
    "push_sum_update",
    "read_trajectory",
    "reaction_update",
    "ring_graph",
    "run_experiment",
    "sample_signals",
    "second_eigenvalue_modulus",
    "select_optimal",
    "serialize_config",
    "stationary_distribution",
    "theorem1_report",
    "theorem2_report",
    "theorem3_report",
    "transient_time",
    "tv_concentration_bound",
    "validate_config",
    "validate_distribution",
    "validate_model",
    "validate_weight_schedule",
    "wilson_interval",
    "write_plot_data",
    "write_results",
]
