import numpy as np
import pytest

from fedcache.cache import CachePolicy
from fedcache.core_model import ClientUpdate, update_size_bytes
from fedcache.engine import ExperimentConfig
from fedcache.workloads import Task, WorkloadSpec


@pytest.fixture
def tiny_workload() -> WorkloadSpec:
    return WorkloadSpec(task=Task.LOGISTIC_BINARY, dim=5, samples_per_client=30, batch_size=10)


@pytest.fixture
def tiny_config(tiny_workload) -> ExperimentConfig:
    return ExperimentConfig(
        n_clients=6,
        clients_per_round=6,
        tau=0.10,
        cache_capacity=3,
        policy=CachePolicy.LRU,
        rounds=6,
        workload=tiny_workload,
        seed=3,
    )


@pytest.fixture
def make_update():
    """Factory for hand-built updates; cache tests only care about id, accuracy and size."""

    def _make(client_id: int, reported_accuracy: float = 0.5, dim: int = 4, round_produced: int = 0, sample_count=10):
        return ClientUpdate(
            client_id=client_id,
            round_produced=round_produced,
            delta=np.full(dim, 0.1),
            significance=1.0,
            size_bytes=update_size_bytes(dim),
            sample_count=sample_count,
            reported_accuracy=reported_accuracy,
        )

    return _make
