"""Monte Carlo experiments, configuration files and instance documents.

An experiment sweeps either the per-user minimum rate or the number of
users and, for every point, runs the same channel trials through each
multiple-access scheme. A trial is in outage when the demands fail the
feasibility test; outage trials count as zero sum-rate.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import allocator
from .channel import ChannelRealization, ScenarioConfig, realize, realize_cnrs
from .grouping import SchemeSpec, group_users, num_subchannels
from .model import ClusterInstance, PowerSolution, ProblemInstance, UserChannel

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

__all__ = [
    "ExperimentConfig",
    "TrialOutcome",
    "SweepRow",
    "SweepResult",
    "InstanceFormatError",
    "CSV_HEADER",
    "run_trial",
    "run_sweep",
    "emit_csv",
    "read_csv",
    "load_config",
    "parse_config",
    "load_instance",
    "parse_instance",
    "instance_to_dict",
    "solution_to_dict",
    "infeasibility_to_dict",
    "solve_file",
    "write_json",
    "DEFAULT_SCHEMES",
]

DEFAULT_SCHEMES = ("sc-sic", "6-noma", "4-noma", "2-noma", "fdma")

CSV_HEADER = (
    "sweep_variable",
    "sweep_value",
    "scheme",
    "u_max",
    "trials",
    "outage_probability",
    "avg_sum_rate_bps",
    "infeasible_count",
    "nonconverged_count",
)

SWEEP_VARIABLES = ("min_rate", "num_users")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    schemes: tuple[SchemeSpec, ...] = tuple(SchemeSpec.parse(s) for s in DEFAULT_SCHEMES)
    sweep_variable: str = "min_rate"
    sweep_values: tuple[float, ...] = tuple(0.25e6 * i for i in range(1, 21))
    fixed_min_rate_bps: float = 3e6
    fixed_num_users: int = 30
    trials: int = 500
    output_path: str = "results.csv"
    eps: float = allocator.DEFAULT_EPS
    max_iter: int = allocator.DEFAULT_MAX_ITER

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.sweep_variable not in SWEEP_VARIABLES:
            raise ValueError(f"sweep variable must be one of {SWEEP_VARIABLES}, got {self.sweep_variable!r}")
        if len(self.sweep_values) == 0:
            raise ValueError("sweep values must be non-empty")
        if not self.schemes:
            raise ValueError("at least one scheme is required")
        if self.sweep_variable == "num_users" and any(v < 1 or v != int(v) for v in self.sweep_values):
            raise ValueError("num_users sweep values must be positive integers")


@dataclass(frozen=True)
class TrialOutcome:
    feasible: bool
    sum_rate_bps: float
    converged: bool = True
    infeasible_reason: str | None = None


@dataclass(frozen=True)
class SweepRow:
    sweep_variable: str
    sweep_value: float
    scheme: str
    u_max: int | None
    trials: int
    outage_probability: float
    avg_sum_rate_bps: float
    infeasible_count: int
    nonconverged_count: int


@dataclass
class SweepResult:
    rows: list[SweepRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def lookup(self, sweep_value: float, scheme: str) -> SweepRow:
        for row in self.rows:
            if row.sweep_value == sweep_value and row.scheme == scheme:
                return row
        raise KeyError((sweep_value, scheme))


def build_instance(clusters: Sequence[ClusterInstance], p_max: float) -> ProblemInstance:
    # mask left unset: every subchannel may use up to p_max
    return ProblemInstance(tuple(clusters), p_max)


def run_trial(scenario: ScenarioConfig, scheme: SchemeSpec, min_rate: float, num_users: int,
              trial_seed=None, *, realization: ChannelRealization | None = None,
              eps: float = allocator.DEFAULT_EPS, max_iter: int = allocator.DEFAULT_MAX_ITER) -> TrialOutcome:
    """One channel draw, grouped and solved under ``scheme``.

    ``realization`` lets several schemes share the same draw; otherwise
    one is generated from ``trial_seed``.
    """
    if realization is None:
        realization = realize(scenario, trial_seed, num_users)
    elif realization.num_users != num_users:
        raise ValueError("realization does not match num_users")
    n_sub = num_subchannels(scheme, num_users)
    cnrs = realize_cnrs(scenario, realization, n_sub)
    clusters = group_users(cnrs, scheme, min_rate, total_bandwidth=scenario.total_bandwidth_hz)
    instance = build_instance(clusters, scenario.p_max_watt)
    report = allocator.feasibility(instance)
    if not report:
        return TrialOutcome(False, 0.0, True, report.reason)
    sol = allocator.solve(instance, eps, max_iter)
    if not sol.converged:
        log.warning("water-filling did not converge (residual %.3g) for %s", sol.residual, scheme.label)
    return TrialOutcome(True, sol.sum_rate, sol.converged)


def _trial_seed(base_seed: int, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([base_seed, trial])


def run_sweep(config: ExperimentConfig, progress=None) -> SweepResult:
    """Run every sweep point x scheme x trial and aggregate.

    Trial ``t`` uses the same seed at every sweep point and for every
    scheme, so schemes (and neighbouring points) are compared on paired
    geometry and shadowing.
    """
    result = SweepResult()
    sc = config.scenario
    for value in config.sweep_values:
        if config.sweep_variable == "min_rate":
            min_rate, k_users = float(value), config.fixed_num_users
        else:
            min_rate, k_users = config.fixed_min_rate_bps, int(value)
        scenario = replace(sc, num_users=k_users)
        counts = {s.label: [0, 0, 0] for s in config.schemes}  # run, infeasible, nonconverged
        rate_terms: dict[str, list[float]] = {s.label: [] for s in config.schemes}
        for t in range(config.trials):
            real = realize(scenario, _trial_seed(sc.seed, t), k_users)
            for spec in config.schemes:
                out = run_trial(scenario, spec, min_rate, k_users, realization=real,
                                eps=config.eps, max_iter=config.max_iter)
                c = counts[spec.label]
                if not out.converged:
                    c[2] += 1
                    continue
                c[0] += 1
                if not out.feasible:
                    c[1] += 1
                rate_terms[spec.label].append(out.sum_rate_bps)
            if progress is not None:
                progress(value, t)
        for spec in config.schemes:
            run, infeasible, nonconv = counts[spec.label]
            outage = infeasible / run if run else math.nan
            avg = math.fsum(rate_terms[spec.label]) / run if run else math.nan
            result.rows.append(SweepRow(
                config.sweep_variable, float(value), spec.label, spec.u_max, run,
                outage, avg, infeasible, nonconv,
            ))
    return result


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def emit_csv(results: SweepResult | Iterable[SweepRow], path) -> Path:
    rows = list(results)
    if not rows:
        raise ValueError("no results to write")
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for row in rows:
                writer.writerow([_fmt(getattr(row, col)) for col in CSV_HEADER])
    except OSError as exc:
        raise OSError(f"cannot write results to {path}: {exc.strerror or exc}") from exc
    return path


def read_csv(path) -> SweepResult:
    out = SweepResult()
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for rec in reader:
            out.rows.append(SweepRow(
                rec["sweep_variable"],
                float(rec["sweep_value"]),
                rec["scheme"],
                int(rec["u_max"]) if rec["u_max"] else None,
                int(rec["trials"]),
                float(rec["outage_probability"]),
                float(rec["avg_sum_rate_bps"]),
                int(rec["infeasible_count"]),
                int(rec["nonconverged_count"]),
            ))
    return out


# -- configuration ---------------------------------------------------------

_SCENARIO_KEYS = {f for f in ScenarioConfig.__dataclass_fields__}
_EXPERIMENT_KEYS = {"schemes", "fixed_min_rate_bps", "fixed_num_users", "trials", "output_path", "eps", "max_iter"}


def parse_config(doc: dict, source: str = "<config>") -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from a parsed TOML document.

    Sections: ``[scenario]`` (ScenarioConfig fields), ``[experiment]`` and
    ``[sweep]`` with ``variable`` and ``values``. Missing keys keep their
    defaults; unknown keys are rejected.
    """
    for section in doc:
        if section not in ("scenario", "experiment", "sweep"):
            raise ValueError(f"{source}: unknown section [{section}]")
    scen = dict(doc.get("scenario", {}))
    unknown = set(scen) - _SCENARIO_KEYS
    if unknown:
        raise ValueError(f"{source}: unknown scenario key(s) {sorted(unknown)}")
    exp = dict(doc.get("experiment", {}))
    unknown = set(exp) - _EXPERIMENT_KEYS
    if unknown:
        raise ValueError(f"{source}: unknown experiment key(s) {sorted(unknown)}")
    sweep = dict(doc.get("sweep", {}))
    unknown = set(sweep) - {"variable", "values"}
    if unknown:
        raise ValueError(f"{source}: unknown sweep key(s) {sorted(unknown)}")

    kwargs: dict = {}
    try:
        kwargs["scenario"] = ScenarioConfig(**scen)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{source}: [scenario]: {exc}") from exc
    if "schemes" in exp:
        kwargs["schemes"] = tuple(SchemeSpec.parse(s) for s in exp.pop("schemes"))
    kwargs.update(exp)
    if "variable" in sweep:
        kwargs["sweep_variable"] = sweep["variable"]
    if "values" in sweep:
        kwargs["sweep_values"] = tuple(float(v) for v in sweep["values"])
    elif kwargs.get("sweep_variable") == "num_users":
        kwargs["sweep_values"] = tuple(float(k) for k in range(5, 61, 5))
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{source}: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ValueError(f"{path}: {exc}") from exc
    return parse_config(doc, str(path))


def config_to_dict(config: ExperimentConfig) -> dict:
    return {
        "scenario": asdict(config.scenario),
        "experiment": {
            "schemes": [s.label for s in config.schemes],
            "fixed_min_rate_bps": config.fixed_min_rate_bps,
            "fixed_num_users": config.fixed_num_users,
            "trials": config.trials,
            "output_path": config.output_path,
            "eps": config.eps,
            "max_iter": config.max_iter,
        },
        "sweep": {"variable": config.sweep_variable, "values": list(config.sweep_values)},
    }


# -- instance and solution documents --------------------------------------

class InstanceFormatError(ValueError):
    """An instance document is malformed; the message names the field."""


def _field(obj: dict, key: str, where: str, kind=float, required: bool = True, default=None):
    if not isinstance(obj, dict):
        raise InstanceFormatError(f"{where}: expected an object")
    if key not in obj:
        if required:
            raise InstanceFormatError(f"{where}.{key}: missing required field")
        return default
    val = obj[key]
    try:
        if kind is float:
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                raise TypeError
            val = float(val)
        elif kind is int:
            if isinstance(val, bool) or not isinstance(val, int):
                raise TypeError
        elif kind is list and not isinstance(val, list):
            raise TypeError
    except TypeError:
        raise InstanceFormatError(f"{where}.{key}: expected {kind.__name__}, got {type(val).__name__}") from None
    return val


def parse_instance(doc: dict) -> ProblemInstance:
    """Build a :class:`ProblemInstance` from a decoded instance document.

    Expected layout::

        {"bandwidth_hz": 1.0, "p_max_watt": 3.0, "p_mask_watt": [3.0],
         "clusters": [{"subchannel_id": 0, "users": [
             {"user_id": 0, "cnr_per_watt": 1.0, "min_rate_bps": 1.0}, ...]}]}

    ``p_mask_watt`` is optional and defaults to ``p_max_watt``; a cluster
    may override ``bandwidth_hz``.
    """
    where = "instance"
    ws = _field(doc, "bandwidth_hz", where)
    p_max = _field(doc, "p_max_watt", where)
    mask = _field(doc, "p_mask_watt", where, list, required=False)
    raw_clusters = _field(doc, "clusters", where, list)
    clusters = []
    for i, rc in enumerate(raw_clusters):
        cw = f"{where}.clusters[{i}]"
        sid = _field(rc, "subchannel_id", cw, int, required=False, default=i)
        cws = _field(rc, "bandwidth_hz", cw, required=False, default=ws)
        users = []
        for j, ru in enumerate(_field(rc, "users", cw, list)):
            uw = f"{cw}.users[{j}]"
            uid = _field(ru, "user_id", uw, int)
            h = _field(ru, "cnr_per_watt", uw)
            rmin = _field(ru, "min_rate_bps", uw, required=False, default=0.0)
            try:
                users.append(UserChannel(uid, h, rmin))
            except ValueError as exc:
                raise InstanceFormatError(f"{uw}: {exc}") from None
        try:
            clusters.append(ClusterInstance(sid, tuple(users), cws))
        except ValueError as exc:
            raise InstanceFormatError(f"{cw}: {exc}") from None
    if mask is not None:
        for i, m in enumerate(mask):
            if isinstance(m, bool) or not isinstance(m, (int, float)):
                raise InstanceFormatError(f"{where}.p_mask_watt[{i}]: expected float")
    try:
        return ProblemInstance(tuple(clusters), p_max, None if mask is None else tuple(mask))
    except ValueError as exc:
        raise InstanceFormatError(f"{where}: {exc}") from None


def load_instance(path) -> ProblemInstance:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    try:
        return parse_instance(doc)
    except InstanceFormatError as exc:
        raise InstanceFormatError(f"{path}: {exc}") from None


def instance_to_dict(instance: ProblemInstance) -> dict:
    return {
        "bandwidth_hz": instance.bandwidth,
        "p_max_watt": instance.p_max,
        "p_mask_watt": list(instance.p_mask),
        "clusters": [
            {
                "subchannel_id": cl.subchannel_id,
                "users": [
                    {"user_id": u.user_id, "cnr_per_watt": u.cnr, "min_rate_bps": u.min_rate}
                    for u in cl.users
                ],
            }
            for cl in instance.clusters
        ],
    }


def solution_to_dict(instance: ProblemInstance, sol: PowerSolution) -> dict:
    clusters = []
    for cl, q in zip(instance.clusters, sol.cluster_budgets):
        clusters.append({
            "subchannel_id": cl.subchannel_id,
            "budget_watt": q,
            "head_user_id": cl.head.user_id,
            "users": [
                {
                    "user_id": u.user_id,
                    "power_watt": sol.powers[u.user_id],
                    "rate_bps": sol.rates[u.user_id],
                    "min_rate_bps": u.min_rate,
                }
                for u in cl.users
            ],
        })
    return {
        "status": "optimal",
        "sum_rate_bps": sol.sum_rate,
        "total_power_watt": sol.total_power,
        "dual_nu": sol.dual_nu,
        "iterations": sol.iterations,
        "converged": sol.converged,
        "residual": sol.residual,
        "clusters": clusters,
    }


def infeasibility_to_dict(report: allocator.FeasibilityReport) -> dict:
    return {
        "status": "infeasible",
        "violated_bound": report.reason,
        "cluster": report.cluster,
        "detail": report.detail,
        "q_min_watt": list(report.q_min),
    }


def write_json(doc: dict, path) -> None:
    text = json.dumps(doc, indent=2) + "\n"
    if path is None or str(path) == "-":
        print(text, end="")
        return
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def solve_file(instance_path, output_path=None, eps: float = allocator.DEFAULT_EPS,
               max_iter: int = allocator.DEFAULT_MAX_ITER) -> bool:
    """Solve an instance document; write the solution or infeasibility report.

    Returns ``True`` if the instance was feasible.
    """
    instance = load_instance(instance_path)
    try:
        sol = allocator.solve(instance, eps, max_iter)
    except allocator.InfeasibleProblem as exc:
        write_json(infeasibility_to_dict(exc.report), output_path)
        return False
    write_json(solution_to_dict(instance, sol), output_path)
    return True
