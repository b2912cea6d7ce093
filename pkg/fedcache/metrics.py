from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable

from fedcache.errors import RoundOrderError

if TYPE_CHECKING:
    from fedcache.engine import RoundOutcome


@dataclass
class RunMetrics:
    """
    Cumulative cost metrics of one run.

    comm_cost_bytes is CommCost_T (client->server payload only), cache_hits_total is
    CacheHits_T and peak_mem_bytes is max_t MemUsage_t.
    """

    comm_cost_bytes: int = 0
    cache_hits_total: int = 0
    transmissions_total: int = 0
    skips_total: int = 0
    peak_mem_bytes: int = 0
    rounds_recorded: int = 0
    mem_by_round: list[int] = field(default_factory=list)
    accuracy_by_round: list[float] = field(default_factory=list)
    loss_by_round: list[float] = field(default_factory=list)
    final_accuracy: float = 0.0
    mem_limit_exceeded_rounds: int = 0

    @property
    def participants_total(self) -> int:
        return self.transmissions_total + self.cache_hits_total + self.skips_total

    def as_row(self) -> dict:
        return {
            "comm_bytes": self.comm_cost_bytes,
            "cache_hits": self.cache_hits_total,
            "peak_mem_bytes": self.peak_mem_bytes,
            "final_accuracy": self.final_accuracy,
        }


def accumulate(metrics: RunMetrics, outcome: RoundOutcome, mem_limit_bytes: int | None = None) -> RunMetrics:
    """Advance every accumulator by one round. Rounds must arrive in order, each exactly once."""
    if outcome.round != metrics.rounds_recorded:
        raise RoundOrderError(
            f"Expected round {metrics.rounds_recorded}, got round {outcome.round} (out of order or duplicate)"
        )

    metrics.comm_cost_bytes += outcome.bytes_sent
    metrics.cache_hits_total += len(outcome.cache_hit_ids)
    metrics.transmissions_total += len(outcome.transmitted_ids)
    metrics.skips_total += len(outcome.skipped_ids)
    metrics.mem_by_round.append(outcome.cache_mem_bytes)
    metrics.peak_mem_bytes = max(metrics.peak_mem_bytes, outcome.cache_mem_bytes)
    metrics.accuracy_by_round.append(outcome.eval_accuracy)
    metrics.loss_by_round.append(outcome.eval_loss)
    metrics.final_accuracy = outcome.eval_accuracy
    if mem_limit_bytes is not None and outcome.cache_mem_bytes > mem_limit_bytes:
        metrics.mem_limit_exceeded_rounds += 1
    metrics.rounds_recorded += 1
    return metrics


def accumulate_all(outcomes: Iterable[RoundOutcome], mem_limit_bytes: int | None = None) -> RunMetrics:
    metrics = RunMetrics()
    for outcome in outcomes:
        accumulate(metrics, outcome, mem_limit_bytes)
    return metrics


def _comm_bytes(metrics) -> int:
    return metrics.comm_cost_bytes if isinstance(metrics, RunMetrics) else int(metrics)


def reduction_vs_baseline(cached, baseline) -> float:
    """1 − CommCost(cached) / CommCost(baseline). Accepts RunMetrics or raw byte counts."""
    baseline_bytes = _comm_bytes(baseline)
    if baseline_bytes == 0:
        raise ValueError("Baseline communication cost is 0, reduction is undefined")
    return 1.0 - _comm_bytes(cached) / baseline_bytes
