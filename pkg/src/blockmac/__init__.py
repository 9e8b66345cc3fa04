"""Performance laboratory for blockchain consensus over CSMA/CA wireless LANs.

Two engines share one parameterization: an analytic engine solving the
per-node Markov-chain fixed points of four block access control variants,
and a discrete-event simulator of the same protocols.  A sweep harness
runs both over parameter grids and cross-validates them.
"""

__version__ = "0.1.0"

from .chain import (
    ChainSolution,
    ChannelProbabilities,
    NoConvergence,
    SingularDenominator,
    channel_probabilities,
    exit_distribution,
    leave_probability,
    queue_occupancy,
    solve_tau,
    stationary_closed_form,
)
from .harness import (
    SweepRow,
    SweepSpec,
    Tolerances,
    compare_engines,
    load_sweep_spec,
    run_sweep,
)
from .metrics import (
    MetricsReport,
    ZeroActivity,
    discard_rate,
    evaluate_metrics,
    throughput,
    utilization_and_pause,
)
from .scenario import (
    BacVariant,
    ChannelTimes,
    ConfigError,
    DEFAULT_PARAMS,
    ScenarioParams,
    channel_times,
    load_scenario,
    window_schedule,
)
from .sim import NodeState, SimReport, run as run_simulation

__all__ = [
    "BacVariant",
    "ChainSolution",
    "ChannelProbabilities",
    "ChannelTimes",
    "ConfigError",
    "DEFAULT_PARAMS",
    "MetricsReport",
    "NoConvergence",
    "NodeState",
    "ScenarioParams",
    "SimReport",
    "SingularDenominator",
    "SweepRow",
    "SweepSpec",
    "Tolerances",
    "ZeroActivity",
    "channel_probabilities",
    "channel_times",
    "compare_engines",
    "discard_rate",
    "evaluate_metrics",
    "exit_distribution",
    "leave_probability",
    "load_scenario",
    "load_sweep_spec",
    "queue_occupancy",
    "run_simulation",
    "run_sweep",
    "solve_tau",
    "stationary_closed_form",
    "throughput",
    "utilization_and_pause",
    "window_schedule",
]
