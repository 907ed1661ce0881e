import math
from collections import Counter

import pytest

from pcnsim.topology import generate_watts_strogatz
from pcnsim.workload import (DEFAULT_DEADLINE_TABLE, DEFAULT_SIZE_WEIGHTS, TxSpec,
                             WorkloadConfig, dump_jsonl, generate, load_jsonl,
                             mixed_deadline_sample)


@pytest.fixture(scope="module")
def graph():
    return generate_watts_strogatz(20, 4, 0.1, seed=1)


def test_deadlines_come_from_table(graph):
    cfg = WorkloadConfig(rate_per_host=10.0, horizon=5.0, seed=3, receivers_per_host=5)
    txs = generate(cfg, graph)
    assert txs, "expected a non-empty stream"
    for tx in txs:
        assert tx.deadline == DEFAULT_DEADLINE_TABLE[tx.amount]
    sizes = {tx.amount for tx in txs}
    assert 150 in sizes  # table lookup exercised beyond the small buckets
    assert DEFAULT_DEADLINE_TABLE[150] == 1.1


def test_zero_deadline_fraction(graph):
    cfg = WorkloadConfig(rate_per_host=10.0, horizon=5.0, seed=3,
                         receivers_per_host=5, deadline_fraction=0.0)
    assert all(tx.deadline is None for tx in generate(cfg, graph))


def test_stream_sorted_and_deterministic(graph):
    cfg = WorkloadConfig(rate_per_host=8.0, horizon=5.0, seed=9, receivers_per_host=5)
    a = generate(cfg, graph)
    b = generate(cfg, graph)
    assert a == b
    assert all(x.t <= y.t for x, y in zip(a, a[1:]))
    assert all(0.0 < x.t < 5.0 for x in a)
    assert all(x.sender != x.receiver for x in a)


def test_receiver_sets_fixed_per_host(graph):
    cfg = WorkloadConfig(rate_per_host=30.0, horizon=10.0, seed=5, receivers_per_host=5)
    txs = generate(cfg, graph)
    per_host = {}
    for tx in txs:
        per_host.setdefault(tx.sender, set()).add(tx.receiver)
    for receivers in per_host.values():
        assert len(receivers) <= 5


def test_interarrival_mean_matches_rate(graph):
    # law of large numbers over ~10^4 arrivals for one host
    cfg = WorkloadConfig(rate_per_host=30.0, horizon=400.0, seed=11, receivers_per_host=5)
    txs = [t for t in generate(cfg, graph) if t.sender == 0]
    assert len(txs) > 9000
    gaps = [b.t - a.t for a, b in zip(txs, txs[1:])]
    mean_gap = sum(gaps) / len(gaps)
    assert abs(mean_gap - 1 / 30.0) <= 0.05 * (1 / 30.0)


def test_size_histogram_matches_weights(graph):
    cfg = WorkloadConfig(rate_per_host=60.0, horizon=100.0, seed=13, receivers_per_host=5)
    txs = generate(cfg, graph)
    assert len(txs) >= 100_000
    counts = Counter(tx.amount for tx in txs)
    for size, weight in DEFAULT_SIZE_WEIGHTS.items():
        assert abs(counts[size] / len(txs) - weight) <= 0.01


def test_mixed_sample_strips_exact_fraction_per_bucket(graph):
    cfg = WorkloadConfig(rate_per_host=20.0, horizon=20.0, seed=7,
                         receivers_per_host=5, deadline_fraction=0.8)
    txs = mixed_deadline_sample(cfg, graph)
    by_size = {}
    for tx in txs:
        by_size.setdefault(tx.amount, []).append(tx)
    for size, bucket in by_size.items():
        stripped = sum(1 for tx in bucket if tx.deadline is None)
        assert stripped == int(0.2 * len(bucket))
    kept = [tx for tx in txs if tx.deadline is not None]
    assert all(tx.deadline == DEFAULT_DEADLINE_TABLE[tx.amount] for tx in kept)


def test_mixed_sample_bucket_of_one_keeps_deadline(graph):
    cfg = WorkloadConfig(rate_per_host=0.02, horizon=5.0, seed=2,
                         receivers_per_host=5, deadline_fraction=0.8)
    txs = mixed_deadline_sample(cfg, graph)
    for tx in txs:
        bucket = [t for t in txs if t.amount == tx.amount]
        if len(bucket) == 1:
            assert bucket[0].deadline is not None


@pytest.mark.parametrize("fraction", [0.6, 0.7, 0.8, 0.9, 1.0])
def test_mixed_sample_fraction_sweep(graph, fraction):
    cfg = WorkloadConfig(rate_per_host=10.0, horizon=10.0, seed=4,
                         receivers_per_host=5, deadline_fraction=fraction)
    txs = mixed_deadline_sample(cfg, graph)
    with_ddl = sum(1 for tx in txs if tx.deadline is not None)
    assert with_ddl >= fraction * len(txs) - len(DEFAULT_SIZE_WEIGHTS)


def test_dump_load_round_trip(tmp_path, graph):
    cfg = WorkloadConfig(rate_per_host=5.0, horizon=5.0, seed=21,
                         receivers_per_host=5, deadline_fraction=0.5)
    txs = generate(cfg, graph)
    path = str(tmp_path / "wl.jsonl")
    dump_jsonl(txs, path)
    assert load_jsonl(path) == txs


def test_load_rejects_bad_line(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"t": 0.1, "s": 0, "r": 1, "amt": 5, "ddl": null}\nnot json\n')
    with pytest.raises(ValueError, match="line 2"):
        load_jsonl(str(p))


def test_config_validation(graph):
    with pytest.raises(ValueError, match="receivers_per_host"):
        WorkloadConfig(receivers_per_host=50).validate(20)
    with pytest.raises(ValueError, match="sum to 1"):
        WorkloadConfig(size_weights={5: 0.5, 15: 0.4}).validate(20)
    with pytest.raises(ValueError, match="rate_per_host"):
        WorkloadConfig(rate_per_host=0).validate(20)
    with pytest.raises(ValueError, match="deadline_table"):
        WorkloadConfig(size_weights={5: 1.0}, deadline_table={}).validate(20)
