"""Optimal water-filling power allocation for downlink multi-cluster NOMA."""

from .allocator import (
    FeasibilityReport,
    InfeasibleProblem,
    VirtualUser,
    cluster_rate_at_budget,
    feasibility,
    intra_cluster_allocate,
    intra_cluster_constants,
    q_min,
    solve,
    waterfill,
)
from .grouping import Scheme, SchemeSpec, group_users, num_subchannels
from .kernels import BACKEND as KERNEL_BACKEND
from .model import (
    ClusterInstance,
    PowerSolution,
    ProblemInstance,
    UserChannel,
    cluster_sum_rate,
    dbm_to_watt,
    rate,
    sinr,
)

__version__ = "0.1.0"
