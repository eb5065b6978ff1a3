"""Linear stochastic bandits with heavy-tailed payoffs."""
from .algorithms import (
    AlgoConfig,
    ConfidenceEllipsoid,
    CrtPolicy,
    MenuPolicy,
    MomPolicy,
    TofuPolicy,
    make_policy,
    select_optimistic_arm,
)
from .environments import (
    BanditInstance,
    LowerBoundInstance,
    NoiseModel,
    generate_instance,
    lower_bound_instance,
    optimal_value,
    sample_payoff,
    verify_moment_bound,
)
from .errors import ConfigError, InternalError, InvalidInputError
from .harness import AggregateCurve, RunRecord, aggregate, emit_plot, export_csv, fit_scaling_exponent, run_experiment
from .kernels import BACKEND
from .linalg import DesignState, compute_weight_rows, inv_sqrt, ridge_solve, update_design, weighted_norm

__version__ = "0.1.0"
