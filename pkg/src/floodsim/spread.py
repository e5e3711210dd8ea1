"""Seeded dissemination runs and parameter sweeps.

Every agent starts with a unique bit at a uniformly random node. Whenever
agents meet (see ``contact``), everyone in the contact component learns the
union of the component's bits. A realization records, per bit, the first
time it is known by all agents (its broadcast time) and the first time all
agents know all bits (the flood time), stopping there or at ``max_steps``
(censored).

Sweeps run many independent seeded realizations per parameter value, in
parallel across worker threads; the per-run seed depends only on (master
seed, point index, rep index), so results are identical at any thread count.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _backend
from .contact import ContactConfig
from .core import derive_run_seed
from .mobility import MobilityPolicy, PolicyKind

__all__ = [
    "SCHEMA_VERSION",
    "SimConfig",
    "RealizationResult",
    "RunRecord",
    "SweepPoint",
    "SweepResult",
    "run_realization",
    "sweep_m",
    "sweep_n",
    "sweep_alpha",
    "default_max_steps",
    "resolve_threads",
]

SCHEMA_VERSION = 1

# A sweep point with more than this fraction of censored runs is a failure.
MAX_CENSORED_FRACTION = 0.05

_POLICY_CODES = {
    PolicyKind.RANDOM_WALK: _backend.POLICY_RW,
    PolicyKind.RANDOM_WAYPOINT: _backend.POLICY_WAYPOINT,
    PolicyKind.MANHATTAN_WAYPOINT: _backend.POLICY_WAYPOINT,
    PolicyKind.LEVY_WALK: _backend.POLICY_LEVY,
}


def default_max_steps(n: int, m: int) -> int:
    """Censoring horizon: a generous constant multiple of the expected scale.

    Large enough that hitting it signals a bug rather than bad luck.
    """
    return int(math.ceil(200.0 * n * math.ceil(n / m) * (1.0 + math.log2(m))))


def resolve_threads(threads: int | None) -> int:
    if threads is not None and threads >= 1:
        return threads
    env = os.environ.get("FLOODSIM_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class SimConfig:
    n: int
    m: int
    policy: MobilityPolicy
    contact: ContactConfig = ContactConfig(0)
    max_steps: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("need at least one agent")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")

    @property
    def resolved_max_steps(self) -> int:
        if self.max_steps is not None:
            return self.max_steps
        return default_max_steps(self.n, self.m)


@dataclass(frozen=True)
class RealizationResult:
    flood_time: int | None
    broadcast_times: tuple[int | None, ...]
    contact_count: int
    steps_run: int

    @property
    def censored(self) -> bool:
        return self.flood_time is None


def run_realization(cfg: SimConfig) -> RealizationResult:
    """One seeded realization; deterministic in (config, seed)."""
    alpha = cfg.policy.levy.alpha if cfg.policy.levy is not None else 0.0
    flood, bts, contacts, steps = _backend.run_grid_realization(
        cfg.n,
        cfg.m,
        _POLICY_CODES[cfg.policy.kind],
        alpha,
        cfg.contact.radius,
        cfg.resolved_max_steps,
        cfg.seed,
    )
    broadcast = tuple(int(b) if b >= 0 else None for b in bts)
    return RealizationResult(
        flood_time=int(flood) if flood >= 0 else None,
        broadcast_times=broadcast,
        contact_count=int(contacts),
        steps_run=int(steps),
    )


@dataclass(frozen=True)
class RunRecord:
    param: str
    value: float | str
    rep: int
    seed: int
    flood_time: int | None

    @property
    def censored(self) -> bool:
        return self.flood_time is None


@dataclass
class SweepPoint:
    param: str
    value: float | str
    runs: list[RunRecord] = field(default_factory=list)

    @property
    def flood_times(self) -> list[int]:
        return [r.flood_time for r in self.runs if r.flood_time is not None]

    @property
    def n_censored(self) -> int:
        return sum(1 for r in self.runs if r.censored)

    @property
    def mean(self) -> float | None:
        vals = self.flood_times
        return float(np.mean(vals)) if vals else None

    @property
    def std(self) -> float | None:
        vals = self.flood_times
        if not vals:
            return None
        return float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0

    @property
    def all_censored(self) -> bool:
        return self.n_censored == len(self.runs)

    @property
    def failed(self) -> bool:
        return self.n_censored > MAX_CENSORED_FRACTION * len(self.runs)


@dataclass
class SweepResult:
    points: list[SweepPoint]
    master_seed: int

    def point(self, param: str, value) -> SweepPoint:
        for p in self.points:
            if p.param == param and p.value == value:
                return p
        raise KeyError(f"no sweep point ({param}, {value})")

    @property
    def failed_points(self) -> list[SweepPoint]:
        return [p for p in self.points if p.failed]

    def write_runs_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(
                ["schema_version", "param", "value", "rep", "seed",
                 "flood_time", "censored"]
            )
            for p in self.points:
                for r in p.runs:
                    w.writerow(
                        [SCHEMA_VERSION, r.param, _fmt(r.value), r.rep, r.seed,
                         "" if r.flood_time is None else r.flood_time,
                         int(r.censored)]
                    )

    def write_summary_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(
                ["schema_version", "param", "value", "mean", "std",
                 "n_reps", "n_censored"]
            )
            for p in self.points:
                w.writerow(
                    [SCHEMA_VERSION, p.param, _fmt(p.value),
                     "" if p.mean is None else repr(p.mean),
                     "" if p.std is None else repr(p.std),
                     len(p.runs) - p.n_censored, p.n_censored]
                )


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    f = float(value)
    return str(int(f)) if f.is_integer() else repr(f)


def _sweep_config(base: SimConfig, param: str, value) -> SimConfig:
    if param == "m":
        return replace(base, m=int(value))
    if param == "n":
        return replace(base, n=int(value))
    if param == "alpha":
        return replace(base, policy=MobilityPolicy.levy_walk(float(value)))
    if param == "ref":
        if value == "rw":
            return replace(base, policy=MobilityPolicy.random_walk())
        if value == "mrwp":
            return replace(base, policy=MobilityPolicy.waypoint())
        raise ValueError(f"unknown reference policy {value!r}")
    raise ValueError(f"unknown sweep parameter {param!r}")


def run_sweep(
    base: SimConfig,
    param: str,
    values,
    reps: int,
    threads: int | None = None,
    include_references: bool = False,
) -> SweepResult:
    """Independent seeded realizations for every (value, rep) pair."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    master = base.seed
    labels: list[tuple[str, float | str]] = [(param, v) for v in values]
    if include_references:
        labels += [("ref", "rw"), ("ref", "mrwp")]

    jobs = []
    for pidx, (pname, value) in enumerate(labels):
        cfg = _sweep_config(base, pname, value)
        for rep in range(reps):
            seed = derive_run_seed(master, pidx, rep)
            jobs.append((pidx, pname, value, rep, replace(cfg, seed=seed)))

    results: dict[tuple[int, int], RealizationResult] = {}
    nworkers = resolve_threads(threads)
    if nworkers <= 1:
        for pidx, _, _, rep, cfg in jobs:
            results[(pidx, rep)] = run_realization(cfg)
    else:
        with ThreadPoolExecutor(max_workers=nworkers) as pool:
            futures = {
                pool.submit(run_realization, cfg): (pidx, rep)
                for pidx, _, _, rep, cfg in jobs
            }
            for fut, key in futures.items():
                results[key] = fut.result()

    points = []
    for pidx, (pname, value) in enumerate(labels):
        runs = [
            RunRecord(
                param=pname,
                value=value,
                rep=rep,
                seed=derive_run_seed(master, pidx, rep),
                flood_time=results[(pidx, rep)].flood_time,
            )
            for rep in range(reps)
        ]
        points.append(SweepPoint(param=pname, value=value, runs=runs))
    return SweepResult(points=points, master_seed=master)


def sweep_m(base: SimConfig, m_values, reps: int, threads=None) -> SweepResult:
    """Mean flood time versus agent count at fixed grid side."""
    return run_sweep(base, "m", list(m_values), reps, threads)


def sweep_n(base: SimConfig, n_values, reps: int, threads=None) -> SweepResult:
    """Mean flood time versus grid side at fixed agent count."""
    return run_sweep(base, "n", list(n_values), reps, threads)


def sweep_alpha(base: SimConfig, alpha_values, reps: int, threads=None) -> SweepResult:
    """Mean flood time versus decay exponent, plus random-walk and waypoint
    reference rows under identical (n, m, reps)."""
    if base.policy.kind is not PolicyKind.LEVY_WALK:
        raise ValueError("alpha sweep requires a levy policy in the base config")
    return run_sweep(
        base, "alpha", list(alpha_values), reps, threads, include_references=True
    )
