import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noma_waterfill.model import (
    ClusterInstance,
    ProblemInstance,
    UserChannel,
    cluster_sum_rate,
    dbm_to_watt,
    decoding_sinr,
    rate,
    sinr,
    watt_to_dbm,
)


@pytest.mark.parametrize("dbm, watt", [(30, 1.0), (0, 1e-3), (46, 39.810717055349734)])
def test_dbm_to_watt(dbm, watt):
    assert dbm_to_watt(dbm) == pytest.approx(watt, rel=1e-12)


def test_dbm_roundtrip():
    assert watt_to_dbm(dbm_to_watt(-107.01)) == pytest.approx(-107.01)
    with pytest.raises(ValueError):
        dbm_to_watt(math.inf)


def test_user_channel_validation():
    with pytest.raises(ValueError):
        UserChannel(0, 0.0)
    with pytest.raises(ValueError):
        UserChannel(0, 1.0, -1.0)
    with pytest.raises(ValueError):
        UserChannel(0, math.nan)


def test_cluster_sorted_with_id_tiebreak():
    cl = ClusterInstance(0, (UserChannel(5, 2.0), UserChannel(3, 2.0), UserChannel(1, 9.0), UserChannel(0, 0.5)), 1.0)
    assert cl.user_ids == [0, 3, 5, 1]
    assert cl.head.user_id == 1


def test_cluster_rejects_empty_and_duplicates():
    with pytest.raises(ValueError):
        ClusterInstance(0, (), 1.0)
    with pytest.raises(ValueError):
        ClusterInstance(0, (UserChannel(1, 1.0), UserChannel(1, 2.0)), 1.0)


def test_problem_invariants():
    a = ClusterInstance(0, (UserChannel(0, 1.0),), 1.0)
    b = ClusterInstance(1, (UserChannel(0, 2.0),), 1.0)
    with pytest.raises(ValueError, match="more than one cluster"):
        ProblemInstance((a, b), 1.0)
    c = ClusterInstance(1, (UserChannel(1, 2.0),), 2.0)
    with pytest.raises(ValueError, match="bandwidth"):
        ProblemInstance((a, c), 1.0)
    inst = ProblemInstance((a, ClusterInstance(1, (UserChannel(1, 2.0),), 1.0)), 3.0)
    assert inst.p_mask == (3.0, 3.0)


def test_sinr_single_user():
    cl = ClusterInstance(0, (UserChannel(0, 3.0),), 1.0)
    assert sinr(cl, [2.0], 0) == 6.0


def test_sinr_two_user(two_user):
    p = [2.0, 1.0]
    assert sinr(two_user, p, 0) == pytest.approx(1.0)
    assert sinr(two_user, p, 1) == pytest.approx(4.0)
    with pytest.raises(IndexError):
        sinr(two_user, p, 2)


def test_rate_values(two_user):
    one = ClusterInstance(0, (UserChannel(0, 1.0),), 1.0)
    assert rate(one, [0.0], 0) == 0.0
    assert rate(one, [1.0], 0) == pytest.approx(1.0)
    wide = ClusterInstance(0, (UserChannel(0, 1.0),), 2.5e6)
    assert rate(wide, [3.0], 0) == pytest.approx(5e6)


def test_cluster_sum_rate(two_user):
    assert cluster_sum_rate(two_user, [0.0, 0.0]) == 0.0
    assert cluster_sum_rate(two_user, [2.0, 1.0]) == pytest.approx(1 + math.log2(5))


def test_power_shape_checked(two_user):
    with pytest.raises(ValueError):
        sinr(two_user, [1.0], 0)
    with pytest.raises(ValueError):
        sinr(two_user, [1.0, -1.0], 0)


cluster_sizes = st.integers(min_value=1, max_value=6)


@st.composite
def cluster_and_powers(draw):
    m = draw(cluster_sizes)
    h = draw(st.lists(st.floats(1e-2, 1e4), min_size=m, max_size=m))
    p = draw(st.lists(st.floats(0.0, 1e2), min_size=m, max_size=m))
    users = tuple(UserChannel(i, x) for i, x in enumerate(h))
    cl = ClusterInstance(0, users, 1.0)
    return cl, np.array(p)


@settings(max_examples=200, deadline=None)
@given(cluster_and_powers())
def test_head_rate_ignores_other_powers(data):
    cl, p = data
    only_head = np.zeros_like(p)
    only_head[-1] = p[-1]
    assert rate(cl, p, len(cl) - 1) == rate(cl, only_head, len(cl) - 1)


@settings(max_examples=200, deadline=None)
@given(cluster_and_powers())
def test_degradedness(data):
    cl, p = data
    m = len(cl)
    for j in range(m):
        own = sinr(cl, p, j)
        for i in range(j + 1, m):
            assert decoding_sinr(cl, p, i, j) >= own * (1 - 1e-12)


@settings(max_examples=200, deadline=None)
@given(cluster_and_powers(), st.floats(0.0, 10.0))
def test_rate_monotone_in_own_power(data, extra):
    cl, p = data
    for k in range(len(cl)):
        q = p.copy()
        q[k] += extra
        assert rate(cl, q, k) >= rate(cl, p, k)
