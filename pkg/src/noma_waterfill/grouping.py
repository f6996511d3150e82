"""User grouping for fully SC-SIC, X-NOMA and FDMA."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import ClusterInstance, UserChannel

__all__ = ["Scheme", "SchemeSpec", "num_subchannels", "group_users"]


class Scheme(enum.Enum):
    FULLY_SCSIC = "sc-sic"
    NOMA = "noma"
    FDMA = "fdma"


@dataclass(frozen=True)
class SchemeSpec:
    kind: Scheme
    u_max: int | None = None

    def __post_init__(self):
        if self.kind is Scheme.NOMA:
            if self.u_max is None or self.u_max < 2:
                raise ValueError("NOMA needs u_max >= 2")
        elif self.u_max is not None:
            raise ValueError(f"u_max only applies to NOMA, not {self.kind.value}")

    @classmethod
    def parse(cls, text: str) -> "SchemeSpec":
        """Parse ``"sc-sic"``, ``"fdma"`` or ``"<X>-noma"`` (e.g. ``"4-noma"``)."""
        t = text.strip().lower()
        if t in ("sc-sic", "scsic", "fully-sc-sic"):
            return cls(Scheme.FULLY_SCSIC)
        if t in ("fdma", "oma"):
            return cls(Scheme.FDMA)
        head, sep, tail = t.partition("-")
        if sep and tail == "noma" and head.isdigit():
            return cls(Scheme.NOMA, int(head))
        raise ValueError(f"unknown scheme {text!r}; expected sc-sic, fdma or <X>-noma")

    @property
    def label(self) -> str:
        if self.kind is Scheme.NOMA:
            return f"{self.u_max}-noma"
        return self.kind.value


def num_subchannels(spec: SchemeSpec, num_users: int) -> int:
    if num_users < 1:
        raise ValueError("need at least one user")
    if spec.kind is Scheme.FULLY_SCSIC:
        return 1
    if spec.kind is Scheme.FDMA:
        return num_users
    return math.ceil(num_users / spec.u_max)


def group_users(cnrs, spec: SchemeSpec, min_rates=0.0, bandwidth: float | None = None,
                total_bandwidth: float | None = None) -> list[ClusterInstance]:
    """Partition users into one cluster per subchannel.

    Passes sweep the subchannels in index order; in each pass every
    subchannel that is not full takes the unassigned user with the highest
    CNR on it. The first pass therefore picks the cluster heads.

    Parameters
    ----------
    cnrs : array_like, shape (K, N)
        CNR of every user on every subchannel of the scheme's grid.
    spec : SchemeSpec
    min_rates : float or array_like
        Per-user demands in bits/second.
    bandwidth : float, optional
        Subchannel bandwidth ``W_s``. Give this or ``total_bandwidth``
        (split equally over ``N``); defaults to 1 Hz.
    """
    table = np.ascontiguousarray(cnrs, dtype=float)
    if table.ndim != 2:
        raise ValueError("cnr table must be two-dimensional (users x subchannels)")
    k_users, n_sub = table.shape
    if k_users < n_sub:
        raise ValueError(f"{k_users} users cannot fill {n_sub} subchannels")
    expected = num_subchannels(spec, k_users)
    if n_sub != expected:
        raise ValueError(f"{spec.label} with {k_users} users needs {expected} subchannels, table has {n_sub}")
    if bandwidth is None:
        bandwidth = (total_bandwidth / n_sub) if total_bandwidth is not None else 1.0
    cap = spec.u_max if spec.kind is Scheme.NOMA else k_users
    demand = np.broadcast_to(np.asarray(min_rates, dtype=float), (k_users,))

    assign = kernels.greedy_assign(table, cap)
    members: list[list[UserChannel]] = [[] for _ in range(n_sub)]
    for k in range(k_users):
        n = int(assign[k])
        members[n].append(UserChannel(k, float(table[k, n]), float(demand[k])))
    return [ClusterInstance(n, tuple(members[n]), bandwidth) for n in range(n_sub)]
