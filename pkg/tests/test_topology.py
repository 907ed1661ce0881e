import json
import random
from pathlib import Path

import pytest

from pcnsim.topology import (Channel, Graph, TopologyError, assign_capacities,
                             generate_barabasi_albert, generate_watts_strogatz,
                             k_widest_disjoint_paths, load_topology, save_topology)


def make_graph(n, edges):
    """edges: list of (u, v, capacity)."""
    channels = tuple(
        Channel(u=min(u, v), v=max(u, v), capacity=c, delay=0.03,
                balance_u=c - c // 2, balance_v=c // 2)
        for u, v, c in edges
    )
    return Graph(n=n, channels=channels)


# ---------------- generators ----------------

def test_watts_strogatz_paper_scale():
    g = generate_watts_strogatz(50, 8, 0.1, seed=7)
    assert g.n == 50
    assert len(g.channels) == 200
    assert g.is_connected()
    assert all(ch.delay == 0.030 for ch in g.channels)


def test_watts_strogatz_zero_rewire_is_ring_lattice():
    g = generate_watts_strogatz(10, 4, 0.0, seed=1)
    expected = set()
    for i in range(10):
        for off in (1, 2):
            expected.add((min(i, (i + off) % 10), max(i, (i + off) % 10)))
    assert {(ch.u, ch.v) for ch in g.channels} == expected


def test_watts_strogatz_deterministic():
    a = generate_watts_strogatz(10, 4, 0.2, seed=42)
    b = generate_watts_strogatz(10, 4, 0.2, seed=42)
    assert a.channels == b.channels
    assert a.adjacency == b.adjacency


@pytest.mark.parametrize("args", [(2, 2, 0.1), (10, 3, 0.1), (10, 10, 0.1), (10, 4, 1.5)])
def test_watts_strogatz_rejects_bad_params(args):
    with pytest.raises(TopologyError):
        generate_watts_strogatz(*args, seed=1)


def test_barabasi_albert_paper_scale():
    g = generate_barabasi_albert(50, 8, seed=5)
    assert g.n == 50
    assert len(g.channels) == 336
    assert g.is_connected()


def test_barabasi_albert_m1_is_tree():
    g = generate_barabasi_albert(5, 1, seed=2)
    assert len(g.channels) == 4
    assert g.is_connected()


def test_barabasi_albert_heavy_tail():
    # scale-free degree distribution: hubs dominate the mean
    for seed in range(20):
        g = generate_barabasi_albert(50, 8, seed=seed)
        deg = [len(a) for a in g.adjacency]
        assert max(deg) > 2 * (sum(deg) / len(deg))


def test_barabasi_albert_rejects_bad_m():
    with pytest.raises(TopologyError):
        generate_barabasi_albert(5, 5, seed=1)
    with pytest.raises(TopologyError):
        generate_barabasi_albert(5, 0, seed=1)


def test_generated_graph_deterministic_bit_exact():
    a = generate_barabasi_albert(30, 4, seed=9)
    b = generate_barabasi_albert(30, 4, seed=9)
    assert a.channels == b.channels


# ---------------- file I/O ----------------

def _write_json(tmp_path, data, name="topo.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def test_load_topology_round_trip(tmp_path):
    path = _write_json(tmp_path, {
        "nodes": 3,
        "channels": [
            {"u": 0, "v": 1, "capacity": 100, "delay_ms": 30.0},
            {"u": 2, "v": 1, "capacity": 51, "delay_ms": 0.5},
        ],
    })
    g = load_topology(path)
    assert g.n == 3
    assert len(g.channels) == 2
    # endpoints normalized, balances split with odd unit to the low endpoint
    ch = g.channels[1]
    assert (ch.u, ch.v) == (1, 2)
    assert (ch.balance_u, ch.balance_v) == (26, 25)
    out = str(tmp_path / "copy.json")
    save_topology(g, out)
    g2 = load_topology(out)
    assert g2.channels == g.channels
    assert g2.n == g.n


def test_load_topology_clamps_delays(tmp_path):
    path = _write_json(tmp_path, {
        "nodes": 2,
        "channels": [{"u": 0, "v": 1, "capacity": 10, "delay_ms": 500.0}],
    })
    g = load_topology(path)
    assert g.channels[0].delay == pytest.approx(0.130)


def test_load_topology_empty_channels_error(tmp_path):
    path = _write_json(tmp_path, {"nodes": 2, "channels": []})
    with pytest.raises(TopologyError):
        load_topology(path)


def test_load_topology_duplicate_edge_error(tmp_path):
    path = _write_json(tmp_path, {
        "nodes": 2,
        "channels": [
            {"u": 0, "v": 1, "capacity": 10, "delay_ms": 1.0},
            {"u": 1, "v": 0, "capacity": 20, "delay_ms": 1.0},
        ],
    })
    with pytest.raises(TopologyError, match="duplicate"):
        load_topology(path)


def test_load_topology_parse_error_names_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"nodes": 2,\n  "channels": [,]}')
    with pytest.raises(TopologyError, match="line 2"):
        load_topology(str(p))


def test_load_topology_disconnected_warns(tmp_path):
    path = _write_json(tmp_path, {
        "nodes": 4,
        "channels": [
            {"u": 0, "v": 1, "capacity": 10, "delay_ms": 1.0},
            {"u": 2, "v": 3, "capacity": 10, "delay_ms": 1.0},
        ],
    })
    with pytest.warns(UserWarning, match="not connected"):
        load_topology(path)


def test_ln_sample_file_scale():
    g = load_topology(str(Path(__file__).resolve().parents[1] / "data" / "ln_sample_106.json"))
    assert g.n == 106
    assert len(g.channels) == 265
    assert g.is_connected()
    assert all(0.00029 <= ch.delay <= 0.130 for ch in g.channels)


# ---------------- capacity assignment ----------------

def test_assign_capacities_constant():
    g = generate_watts_strogatz(10, 4, 0.0, seed=1)
    g = assign_capacities(g, 900, {"kind": "constant"}, seed=1)
    for ch in g.channels:
        assert ch.capacity == 900
        assert (ch.balance_u, ch.balance_v) == (450, 450)


def test_assign_capacities_lognormal_mean_within_one_percent():
    g = generate_watts_strogatz(50, 8, 0.1, seed=2)
    for mean in (900, 1350, 2750, 4000, 8750):
        ga = assign_capacities(g, mean, {"kind": "lognormal", "sigma": 1.0}, seed=2)
        caps = [ch.capacity for ch in ga.channels]
        sample_mean = sum(caps) / len(caps)
        assert abs(sample_mean - mean) <= 0.01 * mean
        for ch in ga.channels:
            assert ch.balance_u + ch.balance_v == ch.capacity
            assert ch.balance_u - ch.balance_v in (0, 1)


def test_assign_capacities_proportional_preserves_shape():
    g = make_graph(3, [(0, 1, 100), (1, 2, 300)])
    ga = assign_capacities(g, 1000, {"kind": "proportional"}, seed=0)
    caps = [ch.capacity for ch in ga.channels]
    assert caps == [500, 1500]


def test_assign_capacities_deterministic():
    g = generate_watts_strogatz(20, 4, 0.1, seed=3)
    a = assign_capacities(g, 4000, seed=11)
    b = assign_capacities(g, 4000, seed=11)
    assert a.channels == b.channels


# ---------------- widest disjoint paths ----------------

def brute_force_widest(g, src, dst):
    """Oracle: enumerate all simple paths, take max bottleneck."""
    best = None
    stack = [(src, [src], [], set())]
    while stack:
        node, nodes, chans, used = stack.pop()
        if node == dst:
            bneck = min(g.channels[ci].capacity for ci in chans)
            if best is None or bneck > best[0]:
                best = (bneck, nodes)
            continue
        for ci in g.adjacency[node]:
            if ci in used:
                continue
            nxt = g.channels[ci].other(node)
            if nxt in nodes:
                continue
            stack.append((nxt, nodes + [nxt], chans + [ci], used | {ci}))
    return best


def test_diamond_two_disjoint_paths():
    # 0-1-3 bottleneck 10, 0-2-3 bottleneck 5
    g = make_graph(4, [(0, 1, 10), (1, 3, 12), (0, 2, 5), (2, 3, 7)])
    paths = k_widest_disjoint_paths(g, 0, 3, 2)
    assert len(paths) == 2
    assert paths[0].nodes == (0, 1, 3)
    assert paths[0].bottleneck_capacity == 10
    assert paths[1].nodes == (0, 2, 3)
    assert paths[1].bottleneck_capacity == 5
    oracle = brute_force_widest(g, 0, 3)
    assert oracle[0] == paths[0].bottleneck_capacity


def test_single_chain_k1():
    g = make_graph(4, [(0, 1, 5), (1, 2, 9), (2, 3, 7)])
    paths = k_widest_disjoint_paths(g, 0, 3, 1)
    assert len(paths) == 1
    assert paths[0].nodes == (0, 1, 2, 3)
    assert paths[0].bottleneck_capacity == 5


def test_adjacent_pair_disjointness_exhausts_edges():
    g = make_graph(2, [(0, 1, 42)])
    paths = k_widest_disjoint_paths(g, 0, 1, 8)
    assert len(paths) == 1


def test_no_path_returns_empty():
    g = make_graph(4, [(0, 1, 5), (2, 3, 5)])
    assert k_widest_disjoint_paths(g, 0, 3, 2) == []


def test_src_eq_dst_rejected():
    g = make_graph(2, [(0, 1, 5)])
    with pytest.raises(ValueError):
        k_widest_disjoint_paths(g, 1, 1, 1)


def test_first_path_matches_brute_force_on_random_graphs():
    rng = random.Random(4)
    for trial in range(30):
        n = rng.randint(4, 8)
        edges = []
        seen = set()
        for _ in range(rng.randint(n, 2 * n)):
            u, v = rng.sample(range(n), 2)
            key = (min(u, v), max(u, v))
            if key in seen:
                continue
            seen.add(key)
            edges.append((u, v, rng.randint(1, 50)))
        g = make_graph(n, edges)
        oracle = brute_force_widest(g, 0, n - 1)
        got = k_widest_disjoint_paths(g, 0, n - 1, 1)
        if oracle is None:
            assert got == []
        else:
            assert got[0].bottleneck_capacity == oracle[0]


def test_paths_pairwise_disjoint_and_ordered():
    rng = random.Random(9)
    for trial in range(20):
        g = assign_capacities(generate_watts_strogatz(20, 6, 0.2, seed=trial), 1000, seed=trial)
        src, dst = rng.sample(range(20), 2)
        paths = k_widest_disjoint_paths(g, src, dst, 8)
        assert paths, "small-world graph should always connect"
        used = set()
        for p in paths:
            assert p.nodes[0] == src and p.nodes[-1] == dst
            assert not used.intersection(p.channels)
            used.update(p.channels)
            assert p.bottleneck_capacity == min(g.channels[ci].capacity for ci in p.channels)
        bnecks = [p.bottleneck_capacity for p in paths]
        assert bnecks[0] == max(bnecks)
        assert bnecks == sorted(bnecks, reverse=True)
