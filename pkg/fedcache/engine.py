from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import pandas as pd
from tqdm.auto import tqdm

from fedcache.cache import CachePolicy, PriorityConfig, UpdateCache, mem_usage
from fedcache.core_model import AggregationSet, ClientUpdate, GlobalModel, fedavg_aggregate, should_transmit
from fedcache.errors import ConfigError
from fedcache.metrics import RunMetrics, accumulate
from fedcache.rng import substream
from fedcache.workloads import (
    Federation,
    Task,
    WorkloadSpec,
    evaluate_global,
    generate_federation,
    initial_model,
    local_train,
)

logger = logging.getLogger(__name__)

ROUND_LOG_COLUMNS = [
    "round",
    "transmitted_ids",
    "cache_hit_ids",
    "skipped_ids",
    "n_transmitted",
    "n_cache_hits",
    "n_skipped",
    "bytes_sent",
    "cache_mem_bytes",
    "eval_accuracy",
    "eval_loss",
]


@dataclass(frozen=True)
class ExperimentConfig:
    n_clients: int = 10
    clients_per_round: int = 10
    tau: float = 0.10
    cache_capacity: int = 4
    policy: CachePolicy = CachePolicy.LRU
    priority_config: PriorityConfig = field(default_factory=PriorityConfig)
    rounds: int = 100
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    seed: int = 0
    mem_limit_bytes: Optional[int] = None

    def validate(self) -> ExperimentConfig:
        """Check every field before round 0; the first offending field is named in the error."""
        if self.n_clients <= 0:
            raise ConfigError("n_clients", f"must be positive, got {self.n_clients}")
        if self.clients_per_round <= 0:
            raise ConfigError("clients_per_round", f"must be positive, got {self.clients_per_round}")
        if self.clients_per_round > self.n_clients:
            raise ConfigError(
                "clients_per_round", f"{self.clients_per_round} exceeds n_clients={self.n_clients}"
            )
        if not self.tau >= 0:
            raise ConfigError("tau", f"must be >= 0, got {self.tau}")
        if self.cache_capacity <= 0:
            raise ConfigError("cache_capacity", f"must be positive, got {self.cache_capacity}")
        try:
            CachePolicy.parse(self.policy)
        except ValueError as e:
            raise ConfigError("policy", str(e))
        if self.rounds < 0:
            raise ConfigError("rounds", f"must be non-negative, got {self.rounds}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed", f"must be an unsigned 64-bit integer, got {self.seed}")
        if self.mem_limit_bytes is not None and self.mem_limit_bytes <= 0:
            raise ConfigError("mem_limit_bytes", f"must be positive when set, got {self.mem_limit_bytes}")
        try:
            Task.parse(self.workload.task)
        except ValueError as e:
            raise ConfigError("task", str(e))
        self.workload.validate(self.n_clients)
        return self

    def with_overrides(self, **overrides) -> ExperimentConfig:
        return replace(self, **{key: value for key, value in overrides.items() if value is not None})


@dataclass(frozen=True)
class RoundOutcome:
    round: int
    transmitted_ids: tuple[int, ...]
    cache_hit_ids: tuple[int, ...]
    skipped_ids: tuple[int, ...]
    bytes_sent: int
    cache_mem_bytes: int
    eval_accuracy: float
    eval_loss: float

    def __post_init__(self):
        groups = [set(self.transmitted_ids), set(self.cache_hit_ids), set(self.skipped_ids)]
        if sum(len(group) for group in groups) != len(set().union(*groups)):
            raise ValueError(f"Round {self.round}: transmitted, cache-hit and skipped ids overlap")

    @property
    def selected_ids(self) -> tuple[int, ...]:
        return tuple(sorted(self.transmitted_ids + self.cache_hit_ids + self.skipped_ids))


@dataclass
class SimulationState:
    model: GlobalModel
    federation: Federation
    cache: Optional[UpdateCache] = None

    @property
    def round(self) -> int:
        return self.model.round


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    metrics: RunMetrics
    outcomes: list[RoundOutcome]
    trajectory: list[np.ndarray]

    def round_log(self) -> pd.DataFrame:
        return round_log_frame(self.outcomes)


def select_clients(config: ExperimentConfig, round_index: int) -> tuple[int, ...]:
    """Uniform k-subset of clients from the (seed, round) selection stream, sorted."""
    if config.clients_per_round >= config.n_clients:
        return tuple(range(config.n_clients))
    rng = substream(config.seed, "select", round_index=round_index)
    chosen = rng.choice(config.n_clients, size=config.clients_per_round, replace=False)
    return tuple(sorted(int(client_id) for client_id in chosen))


def build_cache(config: ExperimentConfig) -> Optional[UpdateCache]:
    policy = CachePolicy.parse(config.policy)
    if policy == CachePolicy.NONE:
        return None
    return UpdateCache(config.cache_capacity, policy, config.priority_config)


def initial_state(config: ExperimentConfig) -> SimulationState:
    federation = generate_federation(config.workload, config.seed, config.n_clients)
    return SimulationState(
        model=initial_model(federation.spec, config.seed),
        federation=federation,
        cache=build_cache(config),
    )


def run_round(state: SimulationState, config: ExperimentConfig) -> RoundOutcome:
    """
    One synchronous round: train, gate, substitute from cache, aggregate, evaluate.

    Clients gate themselves, so withheld updates cost no bytes. A withheld client whose cache
    entry is missing (or filtered out by γ under PBR) is skipped and carries no weight.
    """
    now = state.round
    spec = state.federation.spec
    selected = select_clients(config, now)

    transmitted: list[ClientUpdate] = []
    substituted: list[ClientUpdate] = []
    skipped: list[int] = []
    bytes_sent = 0

    for client_id in selected:
        update = local_train(state.federation.clients[client_id], state.model, spec)
        if should_transmit(update.significance, config.tau):
            transmitted.append(update)
            bytes_sent += update.size_bytes
            if state.cache is not None:
                state.cache.insert(update, now)
            continue

        cached = state.cache.lookup_for_substitution(client_id, now) if state.cache is not None else None
        if cached is not None:
            substituted.append(cached)
        else:
            skipped.append(client_id)

    participants = AggregationSet(transmitted=transmitted, cache_substituted=substituted)
    if len(participants) == 0:
        logger.warning(f"Round {now}: no participants, global model left unchanged")
        state.model = state.model.advanced()
    else:
        state.model = fedavg_aggregate(state.model, participants)

    accuracy, loss = evaluate_global(state.model, state.federation.clients, spec)
    outcome = RoundOutcome(
        round=now,
        transmitted_ids=tuple(update.client_id for update in transmitted),
        cache_hit_ids=tuple(update.client_id for update in substituted),
        skipped_ids=tuple(skipped),
        bytes_sent=bytes_sent,
        cache_mem_bytes=mem_usage(state.cache),
        eval_accuracy=accuracy,
        eval_loss=loss,
    )
    logger.debug(
        f"Round {now}: {len(outcome.transmitted_ids)} transmitted, {len(outcome.cache_hit_ids)} cache hits, "
        f"{len(outcome.skipped_ids)} skipped, {bytes_sent} bytes, accuracy {accuracy:.4f}"
    )
    return outcome


def run_experiment(config: ExperimentConfig, progress: bool = False) -> ExperimentResult:
    """Run T rounds; the result is a pure function of the config."""
    config.validate()
    state = initial_state(config)
    metrics = RunMetrics()
    outcomes: list[RoundOutcome] = []
    trajectory = [state.model.params.copy()]

    logger.info(
        f"Starting run: policy={CachePolicy.parse(config.policy).value} tau={config.tau} "
        f"capacity={config.cache_capacity} rounds={config.rounds} seed={config.seed}"
    )
    for _ in tqdm(range(config.rounds), desc="Rounds", disable=not progress, leave=False):
        outcome = run_round(state, config)
        accumulate(metrics, outcome, config.mem_limit_bytes)
        if config.mem_limit_bytes is not None and outcome.cache_mem_bytes > config.mem_limit_bytes:
            logger.warning(
                f"Round {outcome.round}: cache holds {outcome.cache_mem_bytes} bytes, "
                f"above the {config.mem_limit_bytes} byte memory limit"
            )
        outcomes.append(outcome)
        trajectory.append(state.model.params.copy())

    logger.info(
        f"Finished run: comm={metrics.comm_cost_bytes} bytes, cache hits={metrics.cache_hits_total}, "
        f"peak mem={metrics.peak_mem_bytes} bytes, final accuracy={metrics.final_accuracy:.4f}"
    )
    return ExperimentResult(config=config, metrics=metrics, outcomes=outcomes, trajectory=trajectory)


def _join_ids(ids) -> str:
    return ";".join(str(client_id) for client_id in ids)


def round_log_frame(outcomes: list[RoundOutcome]) -> pd.DataFrame:
    rows = [
        {
            "round": outcome.round,
            "transmitted_ids": _join_ids(outcome.transmitted_ids),
            "cache_hit_ids": _join_ids(outcome.cache_hit_ids),
            "skipped_ids": _join_ids(outcome.skipped_ids),
            "n_transmitted": len(outcome.transmitted_ids),
            "n_cache_hits": len(outcome.cache_hit_ids),
            "n_skipped": len(outcome.skipped_ids),
            "bytes_sent": outcome.bytes_sent,
            "cache_mem_bytes": outcome.cache_mem_bytes,
            "eval_accuracy": outcome.eval_accuracy,
            "eval_loss": outcome.eval_loss,
        }
        for outcome in outcomes
    ]
    return pd.DataFrame(rows, columns=ROUND_LOG_COLUMNS)
