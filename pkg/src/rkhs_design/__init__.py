"""Experimental design, robust estimation and elimination bandits in kernel feature spaces."""

from .bandits import (
    Environment,
    PhaseRecord,
    RunResult,
    env_pull,
    run_ptr_pe,
    run_ptr_regret,
    run_rips_pe,
    run_rips_regret,
)
from .design import (
    DesignProblem,
    DesignSolution,
    SolverConfig,
    bar_epsilon,
    characteristic_time,
    effective_dim_cutoff,
    eval_objective,
    grad_objective,
    info_gain,
    lower_bound_F,
    max_subset_design_value,
    rho_star,
    solve_design,
    solve_logdet,
    trace_effective_dim,
)
from .errors import ConfigurationError, InsufficientSamplesError, SingularDesignError, UnsupportedModeError
from .estimation import (
    EstimateSet,
    RobustMeanConfig,
    SampleBatch,
    catoni,
    fit_dual_minmax,
    ips_estimate,
    median_of_means,
    rips_estimate,
    rls_fit,
)
from .experiments import (
    ExperimentConfig,
    ResultRow,
    emit_results,
    gen_g_optimal_scenario,
    gen_ips_vs_rips_scenario,
    gen_kernel_scenario,
    run_experiment,
)
from .features import (
    ArmSet,
    KernelSpec,
    RegularizedOperator,
    design_norm_sq,
    eig_weighted_gram,
    gram_matrix,
    reg_bilinear,
)
from .rounding import Allocation, PtrReport, caratheodory_reduce, ptr_round, round_ceiling, round_swap

__version__ = "0.1.0"
