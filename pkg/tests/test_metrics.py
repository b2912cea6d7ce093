import pytest

from fedcache.engine import RoundOutcome
from fedcache.errors import RoundOrderError
from fedcache.metrics import RunMetrics, accumulate, accumulate_all, reduction_vs_baseline


def _outcome(round_index, transmitted=(), hits=(), skipped=(), size=864, mem=0, accuracy=0.5):
    return RoundOutcome(
        round=round_index,
        transmitted_ids=tuple(transmitted),
        cache_hit_ids=tuple(hits),
        skipped_ids=tuple(skipped),
        bytes_sent=size * len(transmitted),
        cache_mem_bytes=mem,
        eval_accuracy=accuracy,
        eval_loss=1.0,
    )


def test_round_with_transmissions_and_a_hit():
    metrics = accumulate(RunMetrics(), _outcome(0, transmitted=(0, 1), hits=(2,), mem=1728))
    assert metrics.comm_cost_bytes == 1728
    assert metrics.cache_hits_total == 1
    assert metrics.peak_mem_bytes == 1728
    assert metrics.rounds_recorded == 1


def test_empty_round_only_advances_the_round_count():
    metrics = accumulate(RunMetrics(), _outcome(0, skipped=(0, 1)))
    assert (metrics.comm_cost_bytes, metrics.cache_hits_total, metrics.transmissions_total) == (0, 0, 0)
    assert metrics.rounds_recorded == 1
    assert metrics.participants_total == 2


def test_full_transmission_closed_form():
    rounds, k, size = 7, 3, 864
    metrics = accumulate_all(_outcome(t, transmitted=range(k), size=size) for t in range(rounds))
    assert metrics.comm_cost_bytes == rounds * k * size


def test_peak_memory_and_final_accuracy():
    outcomes = [_outcome(0, mem=100, accuracy=0.2), _outcome(1, mem=300, accuracy=0.4), _outcome(2, mem=200, accuracy=0.3)]
    metrics = accumulate_all(outcomes, mem_limit_bytes=150)
    assert metrics.peak_mem_bytes == 300
    assert metrics.mem_by_round == [100, 300, 200]
    assert metrics.final_accuracy == 0.3
    assert metrics.mem_limit_exceeded_rounds == 2


def test_out_of_order_and_duplicate_rounds_are_rejected():
    metrics = accumulate(RunMetrics(), _outcome(0))
    with pytest.raises(RoundOrderError):
        accumulate(metrics, _outcome(0))
    with pytest.raises(RoundOrderError):
        accumulate(metrics, _outcome(2))


def test_overlapping_outcome_is_rejected():
    with pytest.raises(ValueError):
        _outcome(0, transmitted=(1,), skipped=(1,))


def test_reduction_vs_baseline():
    assert reduction_vs_baseline(500, 500) == 0.0
    assert reduction_vs_baseline(886, 1052) == pytest.approx(0.15779467680608364)
    assert reduction_vs_baseline(0, 1052) == 1.0
    assert reduction_vs_baseline(RunMetrics(comm_cost_bytes=25), RunMetrics(comm_cost_bytes=100)) == 0.75
    with pytest.raises(ValueError):
        reduction_vs_baseline(10, 0)
