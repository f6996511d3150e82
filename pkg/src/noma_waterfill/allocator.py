"""Globally optimal joint intra- and inter-cluster power allocation.

Pipeline for a :class:`~noma_waterfill.model.ProblemInstance`:

1. per cluster, the minimum feasible budget ``Q_min`` (all demands tight);
2. feasibility: ``Q_min <= P_mask`` per cluster and ``sum(Q_min) <= P_max``;
3. per cluster, the affine optimal split ``p_k = slope_k * q + c_k`` in which
   every non-head user sits exactly at its demand and the head takes
   ``alpha * q - c``;
4. each cluster becomes a single virtual OMA user with gain
   ``alpha * h_head`` and the budgets are found by box-constrained
   water-filling (bisection on the dual of the sum-power constraint);
5. the budgets are split inside each cluster with step 3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .kernels._pykernels import expm1_inf
from .model import ClusterInstance, PowerSolution, ProblemInstance, rate

__all__ = [
    "RateFraction",
    "VirtualUser",
    "FeasibilityReport",
    "InfeasibleProblem",
    "WaterfillResult",
    "rate_fractions",
    "q_min",
    "feasibility",
    "intra_cluster_constants",
    "intra_cluster_allocate",
    "cluster_rate_at_budget",
    "waterfill",
    "solve",
    "DEFAULT_EPS",
    "DEFAULT_MAX_ITER",
]

DEFAULT_EPS = 1e-10
DEFAULT_MAX_ITER = 200
_LN2 = math.log(2.0)
_NEG_CLAMP = 1e-12
_BUDGET_TOL = 1e-9


@dataclass(frozen=True)
class RateFraction:
    """A demand expressed per unit bandwidth, with its two derived ratios.

    ``beta_pm = 2**r - 1`` is the SINR needed to meet the demand (used for
    the minimum budget); ``beta_sr = 1 - 2**-r`` is the fraction of the
    remaining power a non-head user must take (used in the affine split).
    """

    r: float

    def __post_init__(self):
        if not (math.isfinite(self.r) and self.r >= 0):
            raise ValueError(f"rate fraction must be nonnegative and finite, got {self.r!r}")

    @property
    def beta_pm(self) -> float:
        return expm1_inf(self.r * _LN2)

    @property
    def beta_sr(self) -> float:
        return -math.expm1(-self.r * _LN2)


def rate_fractions(cluster: ClusterInstance) -> list[RateFraction]:
    return [RateFraction(x) for x in cluster.rate_fractions]


@dataclass(frozen=True)
class VirtualUser:
    """One cluster seen as a single OMA user after the affine reduction.

    Attributes
    ----------
    alpha, c : float
        Head power is ``alpha * q - c`` for cluster budget ``q``.
    h_eff : float
        Effective gain ``alpha * h_head``.
    q_min : float
        Minimum cluster budget.
    q_min_shifted, p_mask_shifted : float
        Box for the shifted budget ``q - c / alpha``.
    slopes, intercepts : tuple of float
        Per-member affine coefficients in decoding order (head last).
    """

    alpha: float
    c: float
    h_eff: float
    q_min: float
    q_min_shifted: float
    p_mask_shifted: float
    slopes: tuple[float, ...] = ()
    intercepts: tuple[float, ...] = ()

    @property
    def offset(self) -> float:
        """``c / alpha``, the budget shift between real and virtual user."""
        return self.c / self.alpha


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    q_min: tuple[float, ...]
    reason: str | None = None  # "mask" or "cellular"
    cluster: int | None = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.feasible


class InfeasibleProblem(ValueError):
    """The minimum-rate demands cannot be met under the power constraints."""

    def __init__(self, report: FeasibilityReport):
        super().__init__(report.detail or "infeasible instance")
        self.report = report


@dataclass(frozen=True)
class WaterfillResult:
    budgets: np.ndarray
    shifted: np.ndarray
    nu: float
    iterations: int
    converged: bool
    residual: float
    p_max_shifted: float


def _arrays(cluster: ClusterInstance) -> tuple[np.ndarray, np.ndarray]:
    return cluster.cnrs, cluster.rate_fractions


def q_min(cluster: ClusterInstance) -> float:
    """Smallest cluster budget that meets every member's demand.

    Members are processed from the head downward, each taking exactly the
    power that makes its rate equal its demand given the stronger users'
    power as interference.
    """
    h, r = _arrays(cluster)
    return kernels.cluster_constants(h, r)[4]


def feasibility(instance: ProblemInstance) -> FeasibilityReport:
    """Check the minimum budgets against every mask, then the total power.

    The first violated bound is reported.
    """
    qmins = tuple(q_min(cl) for cl in instance.clusters)
    for n, (qm, mask) in enumerate(zip(qmins, instance.p_mask)):
        if qm > mask:
            return FeasibilityReport(
                False, qmins, "mask", n,
                f"cluster {n} needs {qm:.6g} W but its mask is {mask:.6g} W",
            )
    total = math.fsum(qmins)
    if total > instance.p_max:
        return FeasibilityReport(
            False, qmins, "cellular", None,
            f"clusters need {total:.6g} W in total but p_max is {instance.p_max:.6g} W",
        )
    return FeasibilityReport(True, qmins)


def intra_cluster_constants(cluster: ClusterInstance, p_mask: float | None = None) -> VirtualUser:
    """Affine split coefficients and virtual-user parameters of a cluster.

    ``p_mask`` only affects ``p_mask_shifted``; it defaults to infinity.
    """
    h, r = _arrays(cluster)
    slopes, intercepts, alpha, c, qmin = kernels.cluster_constants(h, r)
    offset = c / alpha
    mask = math.inf if p_mask is None else p_mask
    return VirtualUser(
        alpha=alpha,
        c=c,
        h_eff=alpha * h[-1],
        q_min=qmin,
        q_min_shifted=qmin - offset,
        p_mask_shifted=mask - offset,
        slopes=tuple(slopes.tolist()),
        intercepts=tuple(intercepts.tolist()),
    )


def _split(vu: VirtualUser, q: float, qmin_ref: float) -> np.ndarray:
    if q < qmin_ref - _BUDGET_TOL * max(qmin_ref, 1e-300):
        raise InfeasibleProblem(FeasibilityReport(
            False, (qmin_ref,), "budget", None,
            f"budget {q:.6g} W is below the cluster minimum {qmin_ref:.6g} W",
        ))
    p = np.asarray(vu.slopes) * q + np.asarray(vu.intercepts)
    floor = -_NEG_CLAMP * max(q, 1.0)
    if np.any(p < floor):
        raise InfeasibleProblem(FeasibilityReport(
            False, (qmin_ref,), "budget", None,
            f"budget {q:.6g} W yields negative power {p.min():.3g} W",
        ))
    return np.maximum(p, 0.0)


def intra_cluster_allocate(cluster: ClusterInstance, q: float, constants: VirtualUser | None = None) -> np.ndarray:
    """Optimal member powers for cluster budget ``q``, in decoding order.

    Raises
    ------
    InfeasibleProblem
        If ``q`` is below the cluster's minimum budget.
    """
    vu = constants if constants is not None else intra_cluster_constants(cluster)
    return _split(vu, float(q), vu.q_min)


def cluster_rate_at_budget(cluster: ClusterInstance, q: float, constants: VirtualUser | None = None) -> float:
    """Optimal cluster sum-rate as a function of its budget alone.

    Non-head users contribute exactly their demands; the head gets the rest.
    """
    vu = constants if constants is not None else intra_cluster_constants(cluster)
    if q < vu.q_min - _BUDGET_TOL * max(vu.q_min, 1e-300):
        raise InfeasibleProblem(FeasibilityReport(
            False, (vu.q_min,), "budget", None,
            f"budget {q:.6g} W is below the cluster minimum {vu.q_min:.6g} W",
        ))
    head_power = max(vu.alpha * q - vu.c, 0.0)
    ws = cluster.bandwidth
    head_rate = ws * math.log1p(head_power * cluster.head.cnr) / _LN2
    return math.fsum([u.min_rate for u in cluster.users[:-1]] + [head_rate])


def waterfill(
    virtual_users: Sequence[VirtualUser],
    p_max: float,
    bandwidth: float,
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_MAX_ITER,
) -> WaterfillResult:
    """Distribute ``p_max`` across virtual users by box-constrained water-filling.

    Works on shifted budgets ``q - c/alpha`` in ``[q_min_shifted,
    p_mask_shifted]`` whose total is ``p_max - sum(c/alpha)``. If every
    mask fits under that total, all masks are returned saturated.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not virtual_users:
        raise ValueError("no virtual users")
    offsets = np.array([vu.offset for vu in virtual_users])
    lo = np.array([vu.q_min_shifted for vu in virtual_users])
    hi = np.array([vu.p_mask_shifted for vu in virtual_users])
    h_eff = np.array([vu.h_eff for vu in virtual_users])
    if np.any(lo > hi):
        n = int(np.argmax(lo > hi))
        raise InfeasibleProblem(FeasibilityReport(
            False, tuple(lo + offsets), "mask", n, f"cluster {n}: minimum budget exceeds its mask",
        ))
    p_tilde = p_max - math.fsum(offsets)
    if math.fsum(lo) > p_tilde * (1 + _BUDGET_TOL) + _BUDGET_TOL * p_max:
        raise InfeasibleProblem(FeasibilityReport(
            False, tuple(lo + offsets), "cellular", None, "minimum budgets exceed p_max",
        ))
    shifted, nu, iters, converged, residual = kernels.waterfill_bisect(
        h_eff, lo, hi, float(p_tilde), float(bandwidth), float(eps), int(max_iter),
    )
    shifted = np.asarray(shifted)
    return WaterfillResult(
        budgets=shifted + offsets,
        shifted=shifted,
        nu=float(nu),
        iterations=int(iters),
        converged=bool(converged),
        residual=float(residual),
        p_max_shifted=float(p_tilde),
    )


def solve(
    instance: ProblemInstance,
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_MAX_ITER,
) -> PowerSolution:
    """Maximize the total sum-rate of ``instance`` subject to all demands.

    Raises
    ------
    InfeasibleProblem
        With a :class:`FeasibilityReport` naming the violated bound.
    """
    report = feasibility(instance)
    if not report:
        raise InfeasibleProblem(report)
    vus = [intra_cluster_constants(cl, mask) for cl, mask in zip(instance.clusters, instance.p_mask)]
    wf = waterfill(vus, instance.p_max, instance.bandwidth, eps, max_iter)

    powers: dict[int, float] = {}
    rates: dict[int, float] = {}
    budgets = []
    for cl, vu, q, mask in zip(instance.clusters, vus, wf.budgets, instance.p_mask):
        # keep round-off in the shift from leaving the box
        q = float(min(max(q, vu.q_min), mask))
        budgets.append(q)
        p = _split(vu, q, vu.q_min)
        for k, u in enumerate(cl.users):
            powers[u.user_id] = float(p[k])
            rates[u.user_id] = rate(cl, p, k)
    return PowerSolution(
        powers=powers,
        cluster_budgets=tuple(budgets),
        rates=rates,
        dual_nu=wf.nu,
        iterations=wf.iterations,
        converged=wf.converged,
        residual=wf.residual,
        shifted_budgets=tuple(wf.shifted.tolist()),
    )
