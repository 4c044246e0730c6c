"""Throughput-optimal scheduling over Markov ON/OFF fading channels with
ARQ-only feedback: belief-state machinery, closed-form Whittle indices,
threshold-policy initialization, exact oracles, and a slot-level simulator.
"""

__version__ = "0.1.0"

from .channel import (
    Belief,
    ChannelParams,
    STATIONARY,
    advance_belief,
    belief_from_pos,
    belief_pos,
    belief_table,
    belief_value,
    num_states,
    stationary_prob,
)
from .whittle import (
    Threshold,
    activation_rate,
    activation_time,
    f_tau,
    g_tau,
    second_branch_index,
    tau0,
    transmission_rate,
    whittle_index,
    whittle_table,
)
from .policy import (
    QwiPolicy,
    ThresholdPolicy,
    initialize,
    solve_rho,
)
from .sim import (
    Metrics,
    RepMetrics,
    SimConfig,
    constraint_audit,
    estimate_rate_point,
    run,
    run_replication,
    stability_probe,
)

__all__ = [
    "Belief",
    "ChannelParams",
    "STATIONARY",
    "advance_belief",
    "belief_from_pos",
    "belief_pos",
    "belief_table",
    "belief_value",
    "num_states",
    "stationary_prob",
    "Threshold",
    "activation_rate",
    "activation_time",
    "f_tau",
    "g_tau",
    "second_branch_index",
    "tau0",
    "transmission_rate",
    "whittle_index",
    "whittle_table",
    "QwiPolicy",
    "ThresholdPolicy",
    "initialize",
    "solve_rho",
    "Metrics",
    "RepMetrics",
    "SimConfig",
    "constraint_audit",
    "estimate_rate_point",
    "run",
    "run_replication",
    "stability_probe",
    "__version__",
]
