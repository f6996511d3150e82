"""Independent verifiers for the allocator.

Nothing here uses the allocator's closed forms. Minimum budgets come from
scalar root-finding on each rate equation, intra-cluster optimality from
exhaustive grids, and water-filling from an exact breakpoint sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import ClusterInstance, ProblemInstance, UserChannel

__all__ = [
    "OracleReport",
    "GridResult",
    "qmin_by_bisection",
    "grid_search_intra",
    "breakpoint_waterfill",
    "waterfill_objective",
    "random_cluster",
    "random_instance",
    "agreement_suite",
]

_LN2 = math.log(2.0)


@dataclass
class OracleReport:
    name: str
    max_abs_gap: float = 0.0
    max_rel_gap: float = 0.0
    argmax_case: str = ""
    cases: int = 0
    tolerance: float | None = None
    extra: dict = field(default_factory=dict)

    def update(self, abs_gap: float, rel_gap: float, case: str) -> None:
        self.cases += 1
        if rel_gap > self.max_rel_gap or (rel_gap == self.max_rel_gap and not self.argmax_case):
            self.argmax_case = case
        self.max_abs_gap = max(self.max_abs_gap, abs_gap)
        self.max_rel_gap = max(self.max_rel_gap, rel_gap)

    @property
    def passed(self) -> bool:
        return self.tolerance is None or self.max_rel_gap <= self.tolerance

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "cases": self.cases,
            "max_abs_gap": self.max_abs_gap,
            "max_rel_gap": self.max_rel_gap,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "argmax_case": self.argmax_case,
            **self.extra,
        }


def _own_rate(ws: float, p: float, h: float, interference: float) -> float:
    return ws * math.log2(1.0 + p * h / (interference * h + 1.0))


def qmin_by_bisection(cluster: ClusterInstance, rel_tol: float = 1e-15, max_iter: int = 4000) -> float:
    """Minimum cluster budget found by solving each rate equation numerically.

    From the head down, each user's power is the root of
    ``rate(p; interference from stronger users) = demand``.
    """
    ws = cluster.bandwidth
    assigned = 0.0
    for u in reversed(cluster.users):
        if u.min_rate == 0:
            continue
        lo, hi = 0.0, 1.0 / u.cnr
        while _own_rate(ws, hi, u.cnr, assigned) < u.min_rate:
            hi *= 2.0
        for _ in range(max_iter):
            mid = 0.5 * (lo + hi)
            if mid <= lo or mid >= hi or hi - lo <= rel_tol * hi:
                break
            if _own_rate(ws, mid, u.cnr, assigned) < u.min_rate:
                lo = mid
            else:
                hi = mid
        assigned += hi
    return assigned


@dataclass(frozen=True)
class GridResult:
    powers: np.ndarray
    sum_rate: float
    step: float
    rate_bound: float
    feasible_points: int


def _grid_rates(cluster: ClusterInstance, p: np.ndarray) -> np.ndarray:
    # p has shape (points, members) in decoding order
    h = cluster.cnrs
    stronger = np.cumsum(p[:, ::-1], axis=1)[:, ::-1] - p
    gamma = p * h / (stronger * h + 1.0)
    return cluster.bandwidth * np.log2(1.0 + gamma)


def grid_search_intra(cluster: ClusterInstance, q: float, grid_points: int = 1001,
                      rel_tol: float = 1e-12) -> GridResult:
    """Best split of budget ``q`` over a uniform grid, subject to the demands.

    For two members the grid is ``grid_points`` values of the weak user's
    power in ``[0, q]``; for three it is the triangular grid with that many
    points per axis.

    Raises
    ------
    ValueError
        For clusters of more than three users, or if no grid point meets
        every demand.
    """
    m = len(cluster)
    if m > 3:
        raise ValueError(f"grid search supports at most 3 users, got {m}")
    if grid_points < 2:
        raise ValueError("grid_points must be at least 2")
    step = q / (grid_points - 1)
    axis = np.linspace(0.0, q, grid_points)
    if m == 1:
        p = np.array([[q]])
    elif m == 2:
        p = np.column_stack([axis, q - axis])
    else:
        a, b = np.meshgrid(axis, axis, indexing="ij")
        a, b = a.ravel(), b.ravel()
        keep = a + b <= q * (1 + 1e-15)
        a, b = a[keep], b[keep]
        p = np.column_stack([a, b, np.maximum(q - a - b, 0.0)])
    rates = _grid_rates(cluster, p)
    need = cluster.min_rates * (1 - rel_tol)
    ok = np.all(rates >= need, axis=1)
    if not np.any(ok):
        raise ValueError("no grid point satisfies every minimum rate")
    totals = np.where(ok, rates.sum(axis=1), -np.inf)
    best = int(np.argmax(totals))
    # moving one grid step of power changes each rate by at most W h / ln2 per Watt
    bound = cluster.bandwidth / _LN2 * float(cluster.cnrs.sum()) * step * (m - 1)
    return GridResult(p[best].copy(), float(totals[best]), step, bound, int(ok.sum()))


def breakpoint_waterfill(h_eff: Sequence[float], lower: Sequence[float], upper: Sequence[float],
                         total: float) -> tuple[np.ndarray, float]:
    """Exact box-constrained water-filling without iteration.

    Solves ``sum(clip(level - 1/h_eff, lower, upper)) == total`` by sorting
    the ``2N`` levels at which a box edge activates and solving the linear
    piece that contains ``total``.

    Returns
    -------
    budgets : ndarray
    level : float
        Water level (``inf``-free; for saturated masks it is the top breakpoint).

    Raises
    ------
    ValueError
        If ``sum(lower) > total`` (infeasible) or a box is empty.
    """
    inv = 1.0 / np.asarray(h_eff, dtype=float)
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    if np.any(lo > hi):
        raise ValueError("empty box: lower bound above upper bound")
    if math.fsum(lo) > total * (1 + 1e-12) + 1e-300:
        raise ValueError(f"infeasible: lower bounds sum to {math.fsum(lo):.6g} > {total:.6g}")
    if math.fsum(hi) <= total:
        return hi.copy(), float(np.max(hi + inv))

    starts = lo + inv  # level where the channel leaves its lower bound
    stops = hi + inv   # level where it reaches its upper bound
    levels = np.unique(np.concatenate([starts, stops]))

    def filled(level):
        return math.fsum(np.clip(level - inv, lo, hi))

    prev = levels[0]
    if filled(prev) >= total:
        return lo.copy(), float(prev)
    for level in levels[1:]:
        if filled(level) >= total:
            break
        prev = level
    # on (prev, level] the free channels are those with start <= prev < stop
    free = (starts <= prev) & (stops > prev)
    below = starts > prev
    above = stops <= prev
    fixed = math.fsum(lo[below]) + math.fsum(hi[above])
    mu = (total - fixed + math.fsum(inv[free])) / int(free.sum())
    return np.clip(mu - inv, lo, hi), float(mu)


def waterfill_objective(h_eff: Sequence[float], shifted: Sequence[float], bandwidth: float) -> float:
    h = np.asarray(h_eff, dtype=float)
    q = np.asarray(shifted, dtype=float)
    return bandwidth * math.fsum(np.log1p(q * h)) / _LN2


def random_cluster(rng: np.random.Generator, size: int, subchannel_id: int = 0, first_id: int = 0,
                   bandwidth: float = 1.0, r_max: float = 4.0, h_decades: float = 6.0,
                   h_floor: float = 1e-2) -> ClusterInstance:
    """Random cluster: CNR log-uniform over ``h_decades`` decades, ``r`` uniform in ``[0, r_max]``."""
    h = h_floor * 10.0 ** rng.uniform(0.0, h_decades, size)
    r = rng.uniform(0.0, r_max, size)
    users = [UserChannel(first_id + k, float(h[k]), float(r[k] * bandwidth)) for k in range(size)]
    return ClusterInstance(subchannel_id, tuple(users), bandwidth)


def random_instance(rng: np.random.Generator, max_clusters: int = 8, max_size: int = 6,
                    bandwidth: float = 1.0, r_max: float = 4.0) -> ProblemInstance:
    """Random feasible instance with a mix of binding and slack masks."""
    n = int(rng.integers(1, max_clusters + 1))
    clusters = []
    uid = 0
    for s in range(n):
        size = int(rng.integers(1, max_size + 1))
        clusters.append(random_cluster(rng, size, s, uid, bandwidth, r_max))
        uid += size
    qmins = np.array([qmin_by_bisection(cl) for cl in clusters])
    p_max = float(qmins.sum() * rng.uniform(1.05, 5.0) + rng.uniform(0.0, 1.0) * max(qmins.max(), 1.0))
    if rng.random() < 0.5:
        mask = None
    else:
        mask = tuple(float(qm + rng.uniform(0.05, 1.0) * (p_max - qm)) for qm in qmins)
    return ProblemInstance(tuple(clusters), p_max, mask)


def agreement_suite(instances: int = 1000, seed: int = 0, eps: float = 1e-10,
                    max_iter: int = 200) -> dict[str, OracleReport]:
    """Compare allocator against the oracles on random feasible instances."""
    from . import allocator

    rng = np.random.default_rng(seed)
    budgets = OracleReport("waterfill_budget_gap_over_pmax", tolerance=1e-6)
    objective = OracleReport("waterfill_objective_gap", tolerance=1e-8)
    qmin = OracleReport("qmin_vs_bisection", tolerance=1e-9)
    residual = OracleReport("bisection_residual", tolerance=1e-10)
    worst_iters = 0
    all_converged = True
    for i in range(instances):
        inst = random_instance(rng)
        case = f"seed={seed} instance={i}"
        for cl in inst.clusters:
            a = allocator.q_min(cl)
            b = qmin_by_bisection(cl)
            gap = abs(a - b)
            qmin.update(gap, gap / b if b > 0 else gap, case)
        vus = [allocator.intra_cluster_constants(cl, mk) for cl, mk in zip(inst.clusters, inst.p_mask)]
        wf = allocator.waterfill(vus, inst.p_max, inst.bandwidth, eps, max_iter)
        h_eff = [vu.h_eff for vu in vus]
        ref, _ = breakpoint_waterfill(h_eff, [vu.q_min_shifted for vu in vus],
                                      [vu.p_mask_shifted for vu in vus], wf.p_max_shifted)
        gap = float(np.max(np.abs(wf.shifted - ref)))
        budgets.update(gap, gap / inst.p_max, case)
        fa = waterfill_objective(h_eff, wf.shifted, inst.bandwidth)
        fb = waterfill_objective(h_eff, ref, inst.bandwidth)
        og = abs(fa - fb)
        objective.update(og, og / max(abs(fb), 1e-300), case)
        residual.update(wf.residual * wf.p_max_shifted, wf.residual, case)
        worst_iters = max(worst_iters, wf.iterations)
        all_converged &= wf.converged
    residual.extra = {"max_iterations": worst_iters, "all_converged": all_converged}
    return {r.name: r for r in (qmin, budgets, objective, residual)}
