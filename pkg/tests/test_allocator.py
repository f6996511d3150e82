import math

import numpy as np
import pytest

from noma_waterfill import allocator, oracle
from noma_waterfill.allocator import (
    InfeasibleProblem,
    RateFraction,
    VirtualUser,
    cluster_rate_at_budget,
    feasibility,
    intra_cluster_allocate,
    intra_cluster_constants,
    q_min,
    solve,
    waterfill,
)
from noma_waterfill.model import ClusterInstance, ProblemInstance, UserChannel, cluster_sum_rate, rate


def single(h, r=0.0, uid=0, sid=0, ws=1.0):
    return ClusterInstance(sid, (UserChannel(uid, h, r * ws),), ws)


def cluster(hs, rs, first_id=0, sid=0, ws=1.0):
    return ClusterInstance(sid, tuple(UserChannel(first_id + i, h, r * ws) for i, (h, r) in enumerate(zip(hs, rs))), ws)


def vu(h_eff, lo=0.0, hi=math.inf):
    return VirtualUser(alpha=1.0, c=0.0, h_eff=h_eff, q_min=lo, q_min_shifted=lo, p_mask_shifted=hi)


# -- rate fractions --------------------------------------------------------

@pytest.mark.parametrize("r", [0.0, 0.3, 1.0, 4.0])
def test_rate_fraction_betas(r):
    f = RateFraction(r)
    assert f.beta_pm == pytest.approx(2 ** r - 1, rel=1e-15, abs=1e-15)
    assert f.beta_sr == pytest.approx((2 ** r - 1) / 2 ** r, rel=1e-15, abs=1e-15)
    assert f.beta_sr == pytest.approx(f.beta_pm / (1 + f.beta_pm), rel=1e-15, abs=1e-15)
    assert f.beta_sr < 1
    assert (f.beta_pm == 0) == (r == 0) == (f.beta_sr == 0)


# -- minimum budget --------------------------------------------------------

def test_qmin_single():
    assert q_min(single(2.0, 1.0)) == pytest.approx(0.5)


def test_qmin_two_user(two_user):
    assert oracle.qmin_by_bisection(two_user) == pytest.approx(1.5, rel=1e-12)
    assert q_min(two_user) == pytest.approx(1.5, rel=1e-14)


def test_qmin_zero_demand():
    assert q_min(cluster([0.3, 2.0, 9.0], [0, 0, 0])) == 0.0


def test_qmin_matches_bisection(rng):
    for _ in range(50):
        cl = oracle.random_cluster(rng, 6)
        assert q_min(cl) == pytest.approx(oracle.qmin_by_bisection(cl), rel=1e-9)


# -- feasibility -----------------------------------------------------------

def test_feasibility_zero_demand():
    inst = ProblemInstance((cluster([1, 4], [0, 0]), cluster([2], [0], first_id=5, sid=1)), 1.0)
    rep = feasibility(inst)
    assert rep.feasible and rep.q_min == (0.0, 0.0)


def test_feasibility_mask(two_user):
    rep = feasibility(ProblemInstance((two_user,), 10.0, (1.0,)))
    assert not rep and rep.reason == "mask" and rep.cluster == 0


def test_feasibility_cellular(two_user):
    other = cluster([1, 4], [1, 1], first_id=2, sid=1)
    assert feasibility(ProblemInstance((two_user, other), 3.0))
    rep = feasibility(ProblemInstance((two_user, other), 3.0 * (1 - 1e-12)))
    assert not rep and rep.reason == "cellular"


# -- affine split ----------------------------------------------------------

def test_constants_single():
    v = intra_cluster_constants(single(7.0, 2.0))
    assert (v.alpha, v.c, v.h_eff) == (1.0, 0.0, 7.0)
    assert v.q_min == pytest.approx(3 / 7)


def test_constants_two_user(two_user):
    v = intra_cluster_constants(two_user)
    assert v.slopes[0] == pytest.approx(0.5) and v.intercepts[0] == pytest.approx(0.5)
    assert v.alpha == pytest.approx(0.5) and v.c == pytest.approx(0.5)
    assert v.h_eff == pytest.approx(2.0)
    assert v.q_min_shifted == pytest.approx(0.5)


def test_constants_zero_demand():
    v = intra_cluster_constants(cluster([1, 2, 3], [0, 0, 0]))
    assert v.slopes[:-1] == (0.0, 0.0) and v.intercepts[:-1] == (0.0, 0.0)
    assert v.alpha == 1.0 and v.c == 0.0


def _affine_literal(h, r):
    """Direct product/sum evaluation of the affine coefficients."""
    beta = [(2 ** x - 1) / 2 ** x for x in r]
    m = len(h)
    slopes, cs = [], []
    for k in range(m - 1):
        slopes.append(beta[k] * math.prod(1 - beta[j] for j in range(k)))
        s = sum(math.prod(1 - beta[l] for l in range(j + 1, k)) * beta[j] / h[j] for j in range(k))
        cs.append(beta[k] * (1 / h[k] - s))
    alpha = 1 - sum(slopes)
    return slopes, cs, alpha, sum(cs)


def test_constants_match_literal_products(rng):
    for _ in range(100):
        m = int(rng.integers(2, 7))
        h = np.sort(10 ** rng.uniform(-1, 3, m))
        r = rng.uniform(0, 2, m)
        v = intra_cluster_constants(cluster(h, r))
        slopes, cs, alpha, c = _affine_literal(h, r)
        np.testing.assert_allclose(v.slopes[:-1], slopes, rtol=1e-12)
        np.testing.assert_allclose(v.intercepts[:-1], cs, rtol=1e-9, atol=1e-12 * max(map(abs, cs)))
        assert v.alpha == pytest.approx(alpha, rel=1e-10)
        assert v.c == pytest.approx(c, rel=1e-10)


def test_allocate_two_user(two_user):
    p = intra_cluster_allocate(two_user, 3.0)
    np.testing.assert_allclose(p, [2.0, 1.0])
    assert rate(two_user, p, 0) == pytest.approx(1.0)


def test_allocate_at_qmin(two_user):
    p = intra_cluster_allocate(two_user, 1.5)
    np.testing.assert_allclose(p, [1.25, 0.25])
    assert rate(two_user, p, 0) == pytest.approx(1.0)
    assert rate(two_user, p, 1) == pytest.approx(1.0)


def test_allocate_single():
    np.testing.assert_allclose(intra_cluster_allocate(single(3.0, 1.0), 2.0), [2.0])


def test_allocate_below_qmin(two_user):
    with pytest.raises(InfeasibleProblem):
        intra_cluster_allocate(two_user, 1.4)


def test_rate_at_budget(two_user):
    assert cluster_rate_at_budget(two_user, 3.0) == pytest.approx(1 + math.log2(5))
    assert cluster_rate_at_budget(two_user, 1.5) == pytest.approx(2.0)
    assert cluster_rate_at_budget(single(3.0), 2.0) == pytest.approx(math.log2(7))


def test_rate_at_budget_matches_direct_sum(rng):
    for _ in range(200):
        cl = oracle.random_cluster(rng, int(rng.integers(1, 8)), bandwidth=1e6)
        q = q_min(cl) * (1 + rng.exponential())
        p = intra_cluster_allocate(cl, q)
        assert cluster_rate_at_budget(cl, q) == pytest.approx(cluster_sum_rate(cl, p), rel=1e-9)


def test_split_beats_grid(two_user):
    g = oracle.grid_search_intra(two_user, 3.0, 3001)
    assert np.max(np.abs(g.powers - [2.0, 1.0])) <= 2 * g.step
    assert cluster_rate_at_budget(two_user, 3.0) >= g.sum_rate - 1e-12


# -- water-filling ---------------------------------------------------------

def test_waterfill_single():
    wf = waterfill([vu(3.0, hi=5.0)], 7.0, 1.0)
    assert wf.budgets[0] == 5.0
    wf = waterfill([vu(3.0, hi=9.0)], 7.0, 1.0)
    assert wf.budgets[0] == pytest.approx(7.0, rel=1e-10)


def test_waterfill_two_channel_closed_form():
    # level mu solves (mu - 1/2) + (mu - 1) = 1
    wf = waterfill([vu(2.0), vu(1.0)], 1.0, 1.0)
    np.testing.assert_allclose(wf.budgets, [0.75, 0.25], rtol=1e-9)
    assert wf.nu == pytest.approx(1 / (math.log(2) * 1.25), rel=1e-9)


def test_waterfill_symmetric_split():
    wf = waterfill([vu(4.0), vu(4.0), vu(4.0)], 3.0, 2.0)
    np.testing.assert_allclose(wf.budgets, [1.0, 1.0, 1.0], rtol=1e-9)


def test_waterfill_respects_boxes():
    wf = waterfill([vu(100.0, 0.0, 0.2), vu(1.0, 0.5, 10.0), vu(0.01, 0.0, 10.0)], 2.0, 1.0)
    assert wf.shifted[0] == 0.2
    assert 0.5 <= wf.shifted[1] <= 10
    assert wf.shifted[2] == 0.0
    assert wf.shifted.sum() == pytest.approx(2.0, rel=1e-10)


def test_waterfill_rejects_bad_input():
    with pytest.raises(ValueError):
        waterfill([vu(1.0)], 1.0, 1.0, eps=0)
    with pytest.raises(InfeasibleProblem):
        waterfill([vu(1.0, 2.0, 3.0)], 1.0, 1.0)


def test_waterfill_nonconvergence_flag():
    wf = waterfill([vu(2.0), vu(1.0)], 1.0, 1.0, eps=1e-10, max_iter=3)
    assert not wf.converged and wf.iterations == 3
    assert wf.residual > 1e-10


# -- end to end ------------------------------------------------------------

def test_solve_zero_demand_single_cluster():
    cl = cluster([0.5, 2.0, 8.0], [0, 0, 0])
    sol = solve(ProblemInstance((cl,), 4.0))
    assert sol.powers == {0: 0.0, 1: 0.0, 2: pytest.approx(4.0)}


def _classic_waterfill(h, total):
    """Textbook water-filling: drop the worst channel until all powers are positive."""
    order = np.argsort(h)[::-1]
    inv = 1.0 / np.asarray(h)[order]
    for n in range(len(h), 0, -1):
        mu = (total + inv[:n].sum()) / n
        if mu > inv[n - 1]:
            break
    p = np.zeros(len(h))
    p[order[:n]] = mu - inv[:n]
    return p


def test_solve_fdma_is_classic_waterfilling(rng):
    for _ in range(20):
        k = int(rng.integers(1, 9))
        h = 10 ** rng.uniform(-1, 2, k)
        inst = ProblemInstance(tuple(single(h[i], 0.0, uid=i, sid=i, ws=2.0) for i in range(k)), 3.0)
        sol = solve(inst)
        np.testing.assert_allclose(sol.cluster_budgets, _classic_waterfill(h, 3.0), atol=1e-8 * 3.0)


def _zoom_max(f, lo, hi, points=41, rounds=30):
    """Repeatedly refined grid search; ``f`` maps an array of points to values."""
    for _ in range(rounds):
        xs = np.linspace(lo, hi, points)
        vals = f(xs)
        i = int(np.argmax(vals))
        step = (hi - lo) / (points - 1)
        lo, hi = max(lo, xs[i] - 2 * step), min(hi, xs[i] + 2 * step)
    return xs[i], vals[i]


def _two_user_rates(cl, pw, q):
    (w, hd), ws = cl.users, cl.bandwidth
    ph = q - pw
    rw = ws * np.log2(1 + pw * w.cnr / (ph * w.cnr + 1))
    rh = ws * np.log2(1 + ph * hd.cnr)
    return rw, rh


def _intra_opt(cl, q):
    """Best two-user split by refined grid search inside the feasible interval."""
    w, hd = cl.users
    # both constraints are monotone in the weak user's power, so bisect for the edges
    lo, hi = 0.0, q
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if _two_user_rates(cl, mid, q)[0] >= w.min_rate else (mid, hi)
    left = hi
    lo, hi = 0.0, q
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if _two_user_rates(cl, mid, q)[1] >= hd.min_rate else (lo, mid)
    right = lo
    if left > right:
        return -np.inf
    return _zoom_max(lambda pw: sum(_two_user_rates(cl, pw, q)), left, right)[1]


def test_solve_two_cluster_matches_grid_oracle():
    a = cluster([1.0, 4.0], [1.0, 1.0])
    b = cluster([2.0, 10.0], [0.5, 0.5], first_id=2, sid=1)
    p_max = 10.0
    inst = ProblemInstance((a, b), p_max)
    sol = solve(inst)
    qa, qb = oracle.qmin_by_bisection(a), oracle.qmin_by_bisection(b)
    q1, best = _zoom_max(np.vectorize(lambda q: _intra_opt(a, q) + _intra_opt(b, p_max - q)), qa, p_max - qb)
    assert sol.cluster_budgets[0] == pytest.approx(q1, abs=1e-6 * p_max)
    assert sol.sum_rate >= best - 1e-9


def test_solve_tightness_and_budgets(rng):
    for _ in range(100):
        inst = oracle.random_instance(rng)
        sol = solve(inst)
        assert sol.converged
        assert sol.total_power <= inst.p_max * (1 + 1e-9)
        assert sol.total_power == pytest.approx(min(inst.p_max, sum(inst.p_mask)), rel=1e-9)
        for cl, q, mask in zip(inst.clusters, sol.cluster_budgets, inst.p_mask):
            powers = [sol.powers[u] for u in cl.user_ids]
            assert math.fsum(powers) == pytest.approx(q, rel=1e-9)
            assert q <= mask * (1 + 1e-12)
            for u in cl.users[:-1]:
                assert sol.rates[u.user_id] == pytest.approx(u.min_rate, rel=1e-9, abs=1e-12)
            assert sol.rates[cl.head.user_id] >= cl.head.min_rate * (1 - 1e-9)


def test_solve_infeasible_reports_bound(two_user):
    # the default mask equals p_max, so the per-cluster bound is hit first
    with pytest.raises(InfeasibleProblem) as info:
        solve(ProblemInstance((two_user,), 1.0))
    assert info.value.report.reason == "mask"
    other = cluster([1, 4], [1, 1], first_id=2, sid=1)
    with pytest.raises(InfeasibleProblem) as info:
        solve(ProblemInstance((two_user, other), 2.0))
    assert info.value.report.reason == "cellular"


def test_solve_all_masks_saturated():
    a, b = single(1.0, uid=0, sid=0), single(2.0, uid=1, sid=1)
    sol = solve(ProblemInstance((a, b), 10.0, (1.0, 2.0)))
    assert sol.cluster_budgets == (1.0, 2.0)


def test_objective_monotone_in_pmax(rng):
    for _ in range(20):
        inst = oracle.random_instance(rng)
        prev = -math.inf
        for scale in (1.0, 1.3, 2.0, 5.0):
            cur = solve(ProblemInstance(inst.clusters, inst.p_max * scale, inst.p_mask)).sum_rate
            assert cur >= prev - 1e-9 * abs(cur)
            prev = cur


def test_water_level_structure(rng):
    for _ in range(100):
        inst = oracle.random_instance(rng)
        vus = [intra_cluster_constants(cl, m) for cl, m in zip(inst.clusters, inst.p_mask)]
        wf = waterfill(vus, inst.p_max, inst.bandwidth)
        level = inst.bandwidth / (math.log(2) * wf.nu)
        for v, x in zip(vus, wf.shifted):
            if v.q_min_shifted < x < v.p_mask_shifted:
                assert x == pytest.approx(level - 1 / v.h_eff, rel=1e-12, abs=1e-12 * level)
            else:
                assert x in (v.q_min_shifted, v.p_mask_shifted)
