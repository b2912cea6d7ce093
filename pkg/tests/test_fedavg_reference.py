from dataclasses import replace

from fedcache.cache import CachePolicy
from fedcache.core_model import update_size_bytes
from fedcache.fedavg_reference import run_plain_fedavg


def test_reference_ignores_threshold_and_cache(tiny_config):
    result = run_plain_fedavg(replace(tiny_config, tau=0.9, policy=CachePolicy.PBR))
    assert result.config.tau == 0.0
    assert result.config.policy == CachePolicy.NONE
    size = update_size_bytes(result.trajectory[0].shape[0])
    assert result.metrics.comm_cost_bytes == tiny_config.rounds * tiny_config.clients_per_round * size
    assert result.metrics.peak_mem_bytes == 0
    assert result.metrics.cache_hits_total == 0
    assert len(result.trajectory) == tiny_config.rounds + 1


def test_reference_is_deterministic(tiny_config):
    first = run_plain_fedavg(tiny_config).round_log()
    second = run_plain_fedavg(tiny_config).round_log()
    assert first.equals(second)
