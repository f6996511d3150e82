"""Domain types and Shannon-rate evaluation for multi-cluster downlink NOMA.

All quantities are linear SI units: Watt, Hz, bits/second. A user's CNR
``h`` already has the noise power folded in (1/Watt), so ``p * h`` is the
received SNR of an interference-free link.

Within a cluster, members are kept in SIC decoding order: ascending CNR,
with exact ties broken by ``user_id`` (lower id is treated as weaker). The
last member is the cluster head, which cancels every co-cluster signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

_LN2 = math.log(2.0)

__all__ = [
    "UserChannel",
    "ClusterInstance",
    "ProblemInstance",
    "PowerSolution",
    "dbm_to_watt",
    "watt_to_dbm",
    "sinr",
    "decoding_sinr",
    "rate",
    "cluster_sum_rate",
]


def dbm_to_watt(x_dbm: float) -> float:
    """Convert a power level in dBm to Watt."""
    if not math.isfinite(x_dbm):
        raise ValueError(f"power level must be finite, got {x_dbm!r} dBm")
    return 10.0 ** ((x_dbm - 30.0) / 10.0)


def watt_to_dbm(x_watt: float) -> float:
    if x_watt <= 0:
        raise ValueError(f"power must be positive, got {x_watt!r} W")
    return 10.0 * math.log10(x_watt) + 30.0


@dataclass(frozen=True)
class UserChannel:
    """One user's link on the subchannel it occupies.

    Attributes
    ----------
    user_id : int
        Global user index, unique across all clusters.
    cnr : float
        Channel-to-noise ratio ``|g|^2 / sigma^2`` in 1/Watt.
    min_rate : float
        Minimum rate demand in bits/second.
    """

    user_id: int
    cnr: float
    min_rate: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.cnr) and self.cnr > 0):
            raise ValueError(f"user {self.user_id}: cnr must be positive and finite, got {self.cnr!r}")
        if not (math.isfinite(self.min_rate) and self.min_rate >= 0):
            raise ValueError(
                f"user {self.user_id}: min_rate must be nonnegative and finite, got {self.min_rate!r}"
            )


@dataclass(frozen=True)
class ClusterInstance:
    """Users superposed on one subchannel, stored in decoding order.

    ``users`` may be passed in any order; they are sorted ascending by
    ``(cnr, user_id)`` on construction so ``users[-1]`` is always the head.
    """

    subchannel_id: int
    users: tuple[UserChannel, ...]
    bandwidth: float

    def __post_init__(self):
        if len(self.users) == 0:
            raise ValueError(f"cluster {self.subchannel_id} has no users")
        if not (math.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ValueError(f"cluster {self.subchannel_id}: bandwidth must be positive, got {self.bandwidth!r}")
        ordered = tuple(sorted(self.users, key=lambda u: (u.cnr, u.user_id)))
        ids = [u.user_id for u in ordered]
        if len(set(ids)) != len(ids):
            raise ValueError(f"cluster {self.subchannel_id} lists a user twice")
        object.__setattr__(self, "users", ordered)

    def __len__(self) -> int:
        return len(self.users)

    @property
    def head(self) -> UserChannel:
        return self.users[-1]

    @property
    def cnrs(self) -> np.ndarray:
        return np.array([u.cnr for u in self.users], dtype=float)

    @property
    def min_rates(self) -> np.ndarray:
        return np.array([u.min_rate for u in self.users], dtype=float)

    @property
    def rate_fractions(self) -> np.ndarray:
        """Minimum rates in bits/s/Hz, ``R_min / W_s``."""
        return self.min_rates / self.bandwidth

    @property
    def user_ids(self) -> list[int]:
        return [u.user_id for u in self.users]


@dataclass(frozen=True)
class ProblemInstance:
    """Joint intra/inter-cluster power allocation problem.

    ``p_mask`` defaults to ``p_max`` on every subchannel.
    """

    clusters: tuple[ClusterInstance, ...]
    p_max: float
    p_mask: tuple[float, ...] | None = None

    def __post_init__(self):
        clusters = tuple(self.clusters)
        if not clusters:
            raise ValueError("problem has no clusters")
        if not (math.isfinite(self.p_max) and self.p_max > 0):
            raise ValueError(f"p_max must be positive, got {self.p_max!r}")
        mask = (self.p_max,) * len(clusters) if self.p_mask is None else tuple(float(m) for m in self.p_mask)
        if len(mask) != len(clusters):
            raise ValueError(f"p_mask has {len(mask)} entries for {len(clusters)} clusters")
        if any(not (math.isfinite(m) and m > 0) for m in mask):
            raise ValueError("p_mask entries must be positive and finite")
        seen: set[int] = set()
        for cl in clusters:
            for uid in cl.user_ids:
                if uid in seen:
                    raise ValueError(f"user {uid} appears in more than one cluster")
                seen.add(uid)
        ws = clusters[0].bandwidth
        if any(cl.bandwidth != ws for cl in clusters):
            raise ValueError("all clusters must share the same subchannel bandwidth")
        object.__setattr__(self, "clusters", clusters)
        object.__setattr__(self, "p_mask", mask)

    @property
    def bandwidth(self) -> float:
        return self.clusters[0].bandwidth

    @property
    def num_users(self) -> int:
        return sum(len(cl) for cl in self.clusters)


@dataclass(frozen=True)
class PowerSolution:
    powers: Mapping[int, float]
    cluster_budgets: tuple[float, ...]
    rates: Mapping[int, float]
    dual_nu: float
    iterations: int
    converged: bool
    residual: float = 0.0
    shifted_budgets: tuple[float, ...] = field(default=(), repr=False)

    @property
    def sum_rate(self) -> float:
        return math.fsum(self.rates.values())

    @property
    def total_power(self) -> float:
        return math.fsum(self.cluster_budgets)


def _check_powers(cluster: ClusterInstance, powers: Sequence[float]) -> np.ndarray:
    p = np.asarray(powers, dtype=float)
    if p.shape != (len(cluster),):
        raise ValueError(f"expected {len(cluster)} powers, got shape {p.shape}")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("powers must be nonnegative and finite")
    return p


def sinr(cluster: ClusterInstance, powers: Sequence[float], user_index: int) -> float:
    """SINR of member ``user_index`` decoding its own signal after SIC.

    Only members later in decoding order (stronger users) interfere.
    """
    p = _check_powers(cluster, powers)
    m = len(cluster)
    if not -m <= user_index < m:
        raise IndexError(f"user index {user_index} out of range for cluster of {m}")
    k = user_index % m
    h = cluster.users[k].cnr
    interference = math.fsum(p[k + 1:]) * h
    return p[k] * h / (interference + 1.0)


def rate(cluster: ClusterInstance, powers: Sequence[float], user_index: int) -> float:
    """Achievable rate in bits/second, ``W_s log2(1 + sinr)``."""
    return cluster.bandwidth * math.log1p(sinr(cluster, powers, user_index)) / _LN2


def decoding_sinr(cluster: ClusterInstance, powers: Sequence[float], decoder: int, signal: int) -> float:
    """SINR seen by member ``decoder`` when decoding member ``signal``'s symbol.

    Signals weaker than ``signal`` are assumed already cancelled; those
    stronger than it remain as interference. ``decoder == signal`` reduces
    to :func:`sinr`.
    """
    p = _check_powers(cluster, powers)
    m = len(cluster)
    for idx in (decoder, signal):
        if not 0 <= idx < m:
            raise IndexError(f"user index {idx} out of range for cluster of {m}")
    h = cluster.users[decoder].cnr
    return p[signal] * h / (math.fsum(p[signal + 1:]) * h + 1.0)


def cluster_sum_rate(cluster: ClusterInstance, powers: Sequence[float]) -> float:
    return math.fsum(rate(cluster, powers, k) for k in range(len(cluster)))
