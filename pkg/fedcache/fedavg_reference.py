"""Plain FedAvg with no gating and no cache.

Written without the core-model aggregation path so it can serve as an oracle for the
τ = 0 / NONE configuration, and as the `baseline` subcommand.
"""

from __future__ import annotations

import logging

import numpy as np

from fedcache.cache import CachePolicy
from fedcache.core_model import GlobalModel, update_size_bytes
from fedcache.engine import ExperimentConfig, ExperimentResult, RoundOutcome, select_clients
from fedcache.metrics import RunMetrics, accumulate
from fedcache.workloads import evaluate_global, generate_federation, initial_model, local_train

logger = logging.getLogger(__name__)


def run_plain_fedavg(config: ExperimentConfig) -> ExperimentResult:
    config = config.with_overrides(tau=0.0, policy=CachePolicy.NONE).validate()
    federation = generate_federation(config.workload, config.seed, config.n_clients)
    spec = federation.spec
    model = initial_model(spec, config.seed)
    size = update_size_bytes(model.dim)

    metrics = RunMetrics()
    outcomes = []
    trajectory = [model.params.copy()]
    for t in range(config.rounds):
        selected = select_clients(config, t)
        updates = [local_train(federation.clients[client_id], model, spec) for client_id in selected]
        total = sum(update.sample_count for update in updates)

        step = np.zeros(model.dim)
        for update in updates:
            step += (update.sample_count / total) * update.delta
        model = GlobalModel(params=model.params + step, round=t + 1)

        accuracy, loss = evaluate_global(model, federation.clients, spec)
        outcome = RoundOutcome(
            round=t,
            transmitted_ids=tuple(selected),
            cache_hit_ids=(),
            skipped_ids=(),
            bytes_sent=size * len(selected),
            cache_mem_bytes=0,
            eval_accuracy=accuracy,
            eval_loss=loss,
        )
        accumulate(metrics, outcome)
        outcomes.append(outcome)
        trajectory.append(model.params.copy())

    logger.info(
        f"Plain FedAvg finished: comm={metrics.comm_cost_bytes} bytes, final accuracy={metrics.final_accuracy:.4f}"
    )
    return ExperimentResult(config=config, metrics=metrics, outcomes=outcomes, trajectory=trajectory)
