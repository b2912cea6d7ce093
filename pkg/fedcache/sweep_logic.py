from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import pandas as pd
from tqdm.auto import tqdm
from tqdm.contrib.concurrent import process_map

from fedcache.cache import CachePolicy
from fedcache.engine import ExperimentConfig, run_experiment
from fedcache.errors import ConfigError
from fedcache.metrics import RunMetrics, reduction_vs_baseline

logger = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "policy",
    "tau",
    "capacity",
    "seed",
    "rounds",
    "comm_bytes",
    "cache_hits",
    "peak_mem_bytes",
    "final_accuracy",
    "reduction_vs_baseline",
]
SORT_COLUMNS = ["policy", "tau", "capacity", "seed"]

BASELINE_TAU = 0.0


class Objective(str, Enum):
    MIN_COMM_AT_ACCURACY_FLOOR = "min-comm-at-accuracy-floor"
    MAX_ACCURACY_AT_COMM_BUDGET = "max-accuracy-at-comm-budget"

    @classmethod
    def parse(cls, value) -> Objective:
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"Unknown objective '{value}'. Expected one of: {[o.value for o in cls]}")


@dataclass(frozen=True)
class SweepSpec:
    base: ExperimentConfig = field(default_factory=ExperimentConfig)
    tau_grid: tuple[float, ...] = (0.01, 0.10, 0.30)
    capacity_grid: tuple[int, ...] = (3, 4, 6, 8)
    policy_grid: tuple[CachePolicy, ...] = (CachePolicy.NONE, CachePolicy.FIFO, CachePolicy.LRU, CachePolicy.PBR)
    repeats: int = 1
    objective: Objective = Objective.MIN_COMM_AT_ACCURACY_FLOOR
    accuracy_floor: Optional[float] = None
    comm_budget_bytes: Optional[int] = None
    workers: int = 1

    def validate(self) -> SweepSpec:
        self.base.validate()
        if not self.tau_grid:
            raise ConfigError("tau_grid", "must not be empty")
        if any(not tau >= 0 for tau in self.tau_grid):
            raise ConfigError("tau_grid", f"thresholds must be >= 0, got {list(self.tau_grid)}")
        if not self.capacity_grid:
            raise ConfigError("capacity_grid", "must not be empty")
        if any(capacity <= 0 for capacity in self.capacity_grid):
            raise ConfigError("capacity_grid", f"capacities must be positive, got {list(self.capacity_grid)}")
        if not self.policy_grid:
            raise ConfigError("policy_grid", "must not be empty")
        if self.repeats < 1:
            raise ConfigError("repeats", f"must be >= 1, got {self.repeats}")
        if self.workers < 1:
            raise ConfigError("workers", f"must be >= 1, got {self.workers}")
        if self.base.seed + self.repeats > 2**64:
            raise ConfigError("repeats", "seed range overflows 64 bits")
        return self

    @property
    def seeds(self) -> list[int]:
        return [self.base.seed + r for r in range(self.repeats)]

    def cells(self) -> list[tuple[CachePolicy, float, int, int]]:
        return [
            (CachePolicy.parse(policy), float(tau), int(capacity), seed)
            for seed in self.seeds
            for policy in self.policy_grid
            for tau in self.tau_grid
            for capacity in self.capacity_grid
        ]


@dataclass(frozen=True)
class CellFailure:
    policy: str
    tau: float
    capacity: int
    seed: int
    error: str


@dataclass
class SweepResult:
    table: pd.DataFrame
    failures: list[CellFailure]
    baselines: dict[int, RunMetrics]

    @property
    def ok(self) -> bool:
        return not self.failures


def _run_key(policy: CachePolicy, tau: float, capacity: int, seed: int) -> tuple:
    # Capacity is irrelevant without a cache, so NONE cells share one run per (tau, seed).
    if policy == CachePolicy.NONE:
        return (policy.value, tau, 0, seed)
    return (policy.value, tau, capacity, seed)


def _run_cell(job: tuple[ExperimentConfig, tuple]) -> tuple[tuple, Optional[RunMetrics], Optional[str]]:
    config, key = job
    try:
        return key, run_experiment(config).metrics, None
    except Exception as e:
        return key, None, f"{type(e).__name__}: {e}"


def _cell_config(base: ExperimentConfig, key: tuple) -> ExperimentConfig:
    policy, tau, capacity, seed = key
    return replace(
        base,
        policy=CachePolicy.parse(policy),
        tau=tau,
        cache_capacity=capacity if capacity > 0 else base.cache_capacity,
        seed=seed,
    )


def run_sweep(spec: SweepSpec) -> SweepResult:
    """
    Run every (policy, τ, C, seed) cell plus the (τ = 0, NONE) baseline per seed.

    Cells are independent and may run in worker processes; a failing cell is recorded and
    never aborts its siblings. Rows are sorted, so the table does not depend on scheduling.

    Args:
        spec (SweepSpec): Base configuration, grids, repeat count and worker count.

    Raises:
        ConfigError: If the base configuration or a grid is invalid.
    """
    # Validate and collect the distinct runs (NONE cells share one run per τ and seed)
    spec.validate()
    cells = spec.cells()
    baseline_keys = {_run_key(CachePolicy.NONE, BASELINE_TAU, 0, seed) for seed in spec.seeds}
    keys = sorted({_run_key(*cell) for cell in cells} | baseline_keys)
    jobs = [(_cell_config(spec.base, key), key) for key in keys]
    logger.info(f"Sweep: {len(cells)} cells, {len(jobs)} distinct runs, {spec.workers} worker(s)")

    # Run every distinct configuration once
    if spec.workers > 1:
        results = process_map(_run_cell, jobs, max_workers=spec.workers, chunksize=1, desc="Sweep cells")
    else:
        results = [_run_cell(job) for job in tqdm(jobs, desc="Sweep cells")]

    # Split results into metrics and errors
    metrics_by_key: dict[tuple, RunMetrics] = {}
    errors_by_key: dict[tuple, str] = {}
    for key, metrics, error in results:
        if error is None:
            metrics_by_key[key] = metrics
        else:
            errors_by_key[key] = error
            logger.error(f"Cell policy={key[0]} tau={key[1]} capacity={key[2]} seed={key[3]} failed: {error}")

    # Per-seed baseline runs (τ = 0, no cache)
    baselines = {
        seed: metrics_by_key[key]
        for seed in spec.seeds
        if (key := _run_key(CachePolicy.NONE, BASELINE_TAU, 0, seed)) in metrics_by_key
    }

    rows, failures = [], []
    baseline_in_grid = BASELINE_TAU in spec.tau_grid and CachePolicy.NONE in spec.policy_grid
    for seed in spec.seeds:
        key = _run_key(CachePolicy.NONE, BASELINE_TAU, 0, seed)
        if key in errors_by_key and not baseline_in_grid:
            failures.append(CellFailure(CachePolicy.NONE.value, BASELINE_TAU, 0, seed, errors_by_key[key]))

    # One report row per grid cell
    for policy, tau, capacity, seed in cells:
        key = _run_key(policy, tau, capacity, seed)
        if key in errors_by_key:
            failures.append(CellFailure(policy.value, tau, capacity, seed, errors_by_key[key]))
            continue
        metrics = metrics_by_key[key]
        baseline = baselines.get(seed)
        if baseline is not None and baseline.comm_cost_bytes > 0:
            reduction = reduction_vs_baseline(metrics, baseline)
        else:
            reduction = math.nan
        rows.append(
            {
                "policy": policy.value,
                "tau": tau,
                "capacity": capacity,
                "seed": seed,
                "rounds": spec.base.rounds,
                **metrics.as_row(),
                "reduction_vs_baseline": reduction,
            }
        )

    table = sort_table(pd.DataFrame(rows, columns=REPORT_COLUMNS))
    tqdm.write(f"Sweep finished: {len(table)} rows, {len(failures)} failed cell(s)")
    return SweepResult(table=table, failures=failures, baselines=baselines)


def sort_table(table: pd.DataFrame) -> pd.DataFrame:
    return table.sort_values(SORT_COLUMNS, kind="mergesort").reset_index(drop=True)
