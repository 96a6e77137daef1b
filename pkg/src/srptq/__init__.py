"""Multiserver queue with abandonment: SRPT vs blind disciplines.

Simulation engine, large-system limit formulas, and steady-state output
analysis for the overloaded many-server regime, plus a CLI that emits CSV
tables and companion figures.
"""

from .analytics import (
    AsymptoticReport,
    BoundMode,
    KnapsackBound,
    NotOverloadedError,
    SrptLimits,
    ThresholdResult,
    asymptotic_report,
    erlang_blocking,
    erlang_blocking_integral,
    fcfs_fluid_boundary,
    fcfs_fluid_wait,
    lcfs_fluid_wait,
    loss_class1_throughput,
    solve_threshold,
    srpt_limits,
    throughput_bound_oracle,
)
from .config import ConfigError, SystemConfig, config_from_dict, config_from_file
from .dists import (
    DistributionSpec,
    Family,
    RandomStream,
    deterministic,
    exponential,
    pareto,
    weibull,
)
from .simcore import (
    ArrivalScript,
    CoupledCounters,
    CouplingViolationError,
    Customer,
    Discipline,
    JobClass,
    SimTrace,
    Status,
    generate_script,
    run,
    run_coupled,
    run_loss,
)
from .stats import (
    Estimate,
    InsufficientDataError,
    SimMetrics,
    SweepReport,
    convergence_sweep,
    estimate,
    pool,
)

__version__ = "0.1.0"
