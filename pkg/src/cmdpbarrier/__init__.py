"""Safe-exploration log-barrier policy gradients for tabular constrained MDPs.

Core pieces: a finite CMDP model with exact dynamic-programming oracles,
softmax policies, Monte-Carlo value/gradient estimators with explicit
bias/deviation constants, an adaptive-stepsize barrier ascent with
high-probability feasibility handling, a fixed-step baseline, an
occupancy-measure LP ground-truth solver, and a gridworld experiment harness.
"""

from .baselines import (
    IpoConfig,
    OccupancyLpSolution,
    ipo_run,
    lp_occupancy_solve,
    lp_to_policy,
    value_iteration,
)
from .estimators import (
    ErrorBounds,
    EstimateBundle,
    MarginError,
    error_bounds,
    estimate_barrier_gradient,
    estimate_bundle,
    estimate_gradient_gpomdp,
    estimate_smoothness,
    estimate_value,
    lipschitz_and_smoothness,
    required_sample_size,
    trajectory_returns,
)
from .experiment import (
    ExperimentConfig,
    aggregate_runs,
    load_experiment_config,
    run_experiment,
)
from .gridworld import GridworldSpec, build_gridworld
from .lbsgd import (
    InfeasibleStartError,
    IterateRecord,
    LbSgdConfig,
    RecoveryConfig,
    RunHistory,
    StepDiagnostics,
    lbsgd_run,
    lbsgd_step,
    local_smoothness,
    lower_conf_margin,
    stepsize,
    upper_conf_dirderiv,
)
from .model import (
    CmdpValidationError,
    TabularCmdp,
    Trajectory,
    TrajectoryBatch,
    cmdp_from_dict,
    cmdp_to_dict,
    exact_gradient,
    exact_occupancy,
    exact_q_values,
    exact_values,
    load_cmdp,
    sample_batch,
    sample_trajectory,
    save_cmdp,
    validate,
)
from .policy import SoftmaxPolicy, action_probs, grad_log_prob, hessian_log_prob
from .simplex import SimplexResult, solve_lp

__version__ = "0.1.0"
