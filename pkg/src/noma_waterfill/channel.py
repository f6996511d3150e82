"""Single-cell downlink channel realizations.

Users are dropped uniformly over an annulus around the BS. Each link gets
distance-dependent path loss, one lognormal shadowing draw, and unit-mean
exponential (Rayleigh power) fading. Noise power per subchannel is the AWGN
density times ``W / N``.

Two fading models are available. ``"flat"`` (default) draws one fade per
user for the whole band, so every subchannel grid sees the same channel and
fully SC-SIC is a true single Gaussian broadcast channel. ``"per-subchannel"``
draws an independent fade for every (user, subchannel) pair of each grid.

Randomness is split with :class:`numpy.random.SeedSequence`: positions and
shadowing come from one child stream, and fading from children keyed by the
grid size ``N`` (``N = 0`` for the flat draw). Schemes evaluated on the same
realization therefore always share geometry and shadowing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import dbm_to_watt

__all__ = [
    "ScenarioConfig",
    "ChannelRealization",
    "sample_positions",
    "path_loss_db",
    "path_loss_linear",
    "noise_power",
    "realize",
    "realize_cnrs",
]


FADING_MODELS = ("flat", "per-subchannel")


@dataclass(frozen=True)
class ScenarioConfig:
    """Cell and link parameters. Defaults are the evaluation settings."""

    num_users: int = 30
    cell_radius_m: float = 500.0
    min_distance_m: float = 20.0
    total_bandwidth_hz: float = 5e6
    bs_power_dbm: float = 46.0
    noise_density_dbm_hz: float = -174.0
    shadowing_sigma_db: float = 8.0
    fading_model: str = "flat"
    seed: int = 0

    def __post_init__(self):
        if self.num_users < 1:
            raise ValueError("num_users must be at least 1")
        if not 0 < self.min_distance_m < self.cell_radius_m:
            raise ValueError("need 0 < min_distance_m < cell_radius_m")
        if self.total_bandwidth_hz <= 0:
            raise ValueError("total_bandwidth_hz must be positive")
        if self.shadowing_sigma_db < 0:
            raise ValueError("shadowing_sigma_db must be nonnegative")
        if self.fading_model not in FADING_MODELS:
            raise ValueError(f"fading_model must be one of {FADING_MODELS}, got {self.fading_model!r}")

    @property
    def p_max_watt(self) -> float:
        return dbm_to_watt(self.bs_power_dbm)


def sample_positions(config: ScenarioConfig, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Distances of users placed uniformly over the annulus ``[min, radius]``."""
    n = config.num_users if size is None else size
    d2 = rng.uniform(config.min_distance_m ** 2, config.cell_radius_m ** 2, n)
    return np.sqrt(d2)


def path_loss_db(d_m):
    d = np.asarray(d_m, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    return 128.1 + 37.6 * np.log10(d / 1000.0)


def path_loss_linear(d_m):
    """Linear attenuation ``10**(-PL/10)`` with ``PL = 128.1 + 37.6 log10(d/km)``."""
    out = 10.0 ** (-path_loss_db(d_m) / 10.0)
    return float(out) if np.ndim(out) == 0 else out


def noise_power(config: ScenarioConfig, num_subchannels: int) -> float:
    """AWGN power over one of ``num_subchannels`` equal subchannels, in Watt."""
    return dbm_to_watt(config.noise_density_dbm_hz) * config.total_bandwidth_hz / num_subchannels


@dataclass
class ChannelRealization:
    """Large-scale gains plus lazily drawn per-grid fading tables."""

    distances: np.ndarray
    large_scale: np.ndarray
    seed_seq: np.random.SeedSequence | None = None
    fading_model: str = "flat"
    _fading: dict = field(default_factory=dict, repr=False)

    @property
    def num_users(self) -> int:
        return len(self.large_scale)

    def fading(self, num_subchannels: int) -> np.ndarray:
        """``(K, N)`` table of unit-mean exponential power gains for an ``N`` grid."""
        if num_subchannels < 1:
            raise ValueError("num_subchannels must be at least 1")
        table = self._fading.get(num_subchannels)
        if table is None:
            if self.fading_model == "flat":
                per_user = self._draw(0, 1)
                table = np.repeat(per_user, num_subchannels, axis=1)
            else:
                table = self._draw(num_subchannels, num_subchannels)
            self._fading[num_subchannels] = table
        return table

    def _draw(self, key: int, columns: int) -> np.ndarray:
        if self.seed_seq is None:
            raise ValueError("realization has no fading stream; set tables with set_fading()")
        child = np.random.SeedSequence(self.seed_seq.entropy, spawn_key=(*self.seed_seq.spawn_key, 1, key))
        return np.random.default_rng(child).exponential(1.0, (self.num_users, columns))

    def set_fading(self, num_subchannels: int, table) -> None:
        table = np.asarray(table, dtype=float)
        if table.shape != (self.num_users, num_subchannels) or np.any(table <= 0):
            raise ValueError("fading table must be positive with shape (K, N)")
        self._fading[num_subchannels] = table


def realize(config: ScenarioConfig, trial_seed: int | np.random.SeedSequence | None = None,
            num_users: int | None = None) -> ChannelRealization:
    """Draw positions and shadowing for one Monte Carlo trial.

    ``trial_seed`` defaults to ``config.seed``. Identical seeds give
    identical realizations, including every fading table drawn later.
    """
    if isinstance(trial_seed, np.random.SeedSequence):
        ss = trial_seed
    else:
        ss = np.random.SeedSequence(config.seed if trial_seed is None else trial_seed)
    geo = np.random.default_rng(np.random.SeedSequence(ss.entropy, spawn_key=(*ss.spawn_key, 0)))
    k = config.num_users if num_users is None else num_users
    d = sample_positions(config, geo, k)
    shadow_db = geo.normal(0.0, config.shadowing_sigma_db, k)
    large = path_loss_linear(d) * 10.0 ** (shadow_db / 10.0)
    return ChannelRealization(np.atleast_1d(d), np.atleast_1d(large), ss, config.fading_model)


def realize_cnrs(config: ScenarioConfig, realization: ChannelRealization, num_subchannels: int) -> np.ndarray:
    """Per-user, per-subchannel CNR in 1/Watt, shape ``(K, N)``."""
    if num_subchannels < 1:
        raise ValueError("num_subchannels must be at least 1")
    noise = noise_power(config, num_subchannels)
    return realization.large_scale[:, None] * realization.fading(num_subchannels) / noise

