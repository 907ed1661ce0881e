"""Payment-channel graph construction, file I/O, and widest-path routing.

A topology is an undirected simple graph of funded channels over dense
integer node ids. Everything here is pure: functions build and return new
``Graph`` values and never mutate their inputs, so they are safe to call
from any thread. Channel runtime state (locks, queues) lives in the engine.
"""

from __future__ import annotations

import json
import random
import warnings
from dataclasses import dataclass, field, replace
from heapq import heappop, heappush

import networkx as nx

DEFAULT_LINK_DELAY_S = 0.030
FILE_DELAY_MIN_S = 0.00029
FILE_DELAY_MAX_S = 0.130
_CONNECT_TRIES = 100


class TopologyError(ValueError):
    """Invalid generator parameters or a malformed topology file."""


@dataclass(frozen=True)
class Channel:
    """One bidirectional channel. Endpoints are normalized so u < v.

    ``balance_u + balance_v == capacity`` once capacities are assigned; the
    engine adds per-direction locked funds on top of these initial balances.
    """

    u: int
    v: int
    capacity: int
    delay: float  # one-way propagation delay, seconds
    balance_u: int = 0
    balance_v: int = 0

    def other(self, node: int) -> int:
        return self.v if node == self.u else self.u


@dataclass(frozen=True)
class Path:
    """A simple sender->receiver path over channels.

    ``directions[i]`` is True when hop i traverses its channel u->v.
    ``delays`` caches per-hop propagation delays for the event loop.
    """

    nodes: tuple[int, ...]
    channels: tuple[int, ...]
    directions: tuple[bool, ...]
    delays: tuple[float, ...]
    bottleneck_capacity: int

    def __len__(self) -> int:
        return len(self.channels)


@dataclass
class Graph:
    """Undirected simple channel graph with per-node adjacency lists."""

    n: int
    channels: tuple[Channel, ...]
    meta: dict = field(default_factory=dict)
    adjacency: tuple[tuple[int, ...], ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        seen: set[tuple[int, int]] = set()
        for idx, ch in enumerate(self.channels):
            if not (0 <= ch.u < self.n and 0 <= ch.v < self.n):
                raise TopologyError(f"channel {idx} endpoint out of range: {ch.u}-{ch.v}")
            if ch.u >= ch.v:
                raise TopologyError(f"channel {idx} endpoints not normalized: {ch.u}-{ch.v}")
            key = (ch.u, ch.v)
            if key in seen:
                raise TopologyError(f"duplicate channel {ch.u}-{ch.v}")
            seen.add(key)
            adj[ch.u].append(idx)
            adj[ch.v].append(idx)
        self.adjacency = tuple(tuple(a) for a in adj)

    def is_connected(self) -> bool:
        if self.n == 0:
            return False
        seen = [False] * self.n
        seen[0] = True
        stack = [0]
        count = 1
        while stack:
            u = stack.pop()
            for ci in self.adjacency[u]:
                v = self.channels[ci].other(u)
                if not seen[v]:
                    seen[v] = True
                    count += 1
                    stack.append(v)
        return count == self.n


def _from_networkx(gnx: "nx.Graph", meta: dict) -> Graph:
    edges = sorted((min(u, v), max(u, v)) for u, v in gnx.edges())
    channels = tuple(
        Channel(u=u, v=v, capacity=0, delay=DEFAULT_LINK_DELAY_S) for u, v in edges
    )
    meta = dict(meta)
    meta["edges"] = len(channels)
    return Graph(n=gnx.number_of_nodes(), channels=channels, meta=meta)


def generate_watts_strogatz(n: int, ring_degree: int, rewire_prob: float, seed: int) -> Graph:
    """Connected small-world graph: ring lattice of even degree, rewired.

    Edge count is exactly n*ring_degree/2. Deterministic per seed; raises
    TopologyError if no connected instance is found within the retry budget.
    """
    if n < 3:
        raise TopologyError(f"need at least 3 nodes, got {n}")
    if ring_degree % 2 != 0 or not 0 < ring_degree < n:
        raise TopologyError(f"ring_degree must be even and in (0, n), got {ring_degree}")
    if not 0.0 <= rewire_prob <= 1.0:
        raise TopologyError(f"rewire_prob must be in [0, 1], got {rewire_prob}")
    try:
        gnx = nx.connected_watts_strogatz_graph(
            n, ring_degree, rewire_prob, tries=_CONNECT_TRIES, seed=seed
        )
    except nx.NetworkXError as exc:
        raise TopologyError(f"no connected small-world graph after {_CONNECT_TRIES} tries: {exc}") from exc
    return _from_networkx(
        gnx,
        {
            "generator": "watts_strogatz",
            "n": n,
            "ring_degree": ring_degree,
            "rewire_prob": rewire_prob,
            "seed": seed,
        },
    )


def generate_barabasi_albert(n: int, attach_m: int, seed: int) -> Graph:
    """Connected scale-free graph via preferential attachment.

    Each arriving node attaches `attach_m` edges, giving attach_m*(n-attach_m)
    edges total. Deterministic per seed.
    """
    if not 1 <= attach_m < n:
        raise TopologyError(f"attach_m must satisfy 1 <= attach_m < n, got m={attach_m}, n={n}")
    gnx = nx.barabasi_albert_graph(n, attach_m, seed=seed)
    g = _from_networkx(
        gnx,
        {"generator": "barabasi_albert", "n": n, "attach_m": attach_m, "seed": seed},
    )
    if not g.is_connected():  # attachment to an existing component; should not happen
        raise TopologyError("preferential-attachment graph came out disconnected")
    return g


def load_topology(path: str) -> Graph:
    """Load a topology JSON file.

    Schema: {"nodes": N, "channels": [{"u", "v", "capacity", "delay_ms"}]}.
    Capacities are integer fund-units; delays are clamped to the supported
    per-link range. Initial balances split the capacity 50/50, odd unit to
    the lower-numbered endpoint. Warns (does not fail) on disconnection.
    """
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise TopologyError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, dict) or "nodes" not in data or "channels" not in data:
        raise TopologyError(f"{path}: expected object with 'nodes' and 'channels'")
    n = data["nodes"]
    recs = data["channels"]
    if not isinstance(n, int) or n < 2:
        raise TopologyError(f"{path}: 'nodes' must be an integer >= 2")
    if not isinstance(recs, list) or not recs:
        raise TopologyError(f"{path}: channel list is empty")
    channels = []
    for i, rec in enumerate(recs):
        try:
            u, v = int(rec["u"]), int(rec["v"])
            cap = int(rec["capacity"])
            delay_ms = float(rec["delay_ms"])
        except (KeyError, TypeError, ValueError) as exc:
            raise TopologyError(f"{path}: channel {i}: {exc}") from exc
        if u == v:
            raise TopologyError(f"{path}: channel {i} is a self-loop on node {u}")
        if cap < 1:
            raise TopologyError(f"{path}: channel {i} capacity must be >= 1, got {cap}")
        if delay_ms <= 0:
            raise TopologyError(f"{path}: channel {i} delay must be positive, got {delay_ms}")
        u, v = min(u, v), max(u, v)
        delay = min(max(delay_ms / 1000.0, FILE_DELAY_MIN_S), FILE_DELAY_MAX_S)
        channels.append(
            Channel(u=u, v=v, capacity=cap, delay=delay,
                    balance_u=cap - cap // 2, balance_v=cap // 2)
        )
    g = Graph(n=n, channels=tuple(channels), meta={"source": str(path), "edges": len(channels)})
    if not g.is_connected():
        warnings.warn(f"{path}: topology is not connected", stacklevel=2)
    return g


def save_topology(g: Graph, path: str) -> None:
    """Write a Graph back to the topology JSON schema (delays in ms)."""
    data = {
        "nodes": g.n,
        "channels": [
            {"u": ch.u, "v": ch.v, "capacity": ch.capacity,
             "delay_ms": round(ch.delay * 1000.0, 6)}
            for ch in g.channels
        ],
    }
    with open(path, "w") as f:
        json.dump(data, f, indent=1)
        f.write("\n")


def assign_capacities(g: Graph, mean_capacity: float, dist=None, seed: int = 0) -> Graph:
    """Draw per-channel capacities and rescale them to the requested mean.

    ``dist`` is a spec dict: {"kind": "lognormal", "sigma": s} (default,
    heavy-tailed), {"kind": "constant"}, or {"kind": "proportional"} which
    keeps the relative sizes already on the graph (for file-loaded
    topologies). Initial balances split each capacity 50/50 with the odd
    unit going to the lower-numbered endpoint. Deterministic per seed.
    """
    if mean_capacity <= 0:
        raise ValueError(f"mean_capacity must be positive, got {mean_capacity}")
    if dist is None:
        dist = {"kind": "lognormal", "sigma": 1.0}
    if isinstance(dist, str):
        dist = {"kind": dist}
    kind = dist.get("kind")
    m = len(g.channels)
    rng = random.Random(seed)
    if kind == "lognormal":
        sigma = float(dist.get("sigma", 1.0))
        draws = [rng.lognormvariate(0.0, sigma) for _ in range(m)]
    elif kind == "constant":
        draws = [1.0] * m
    elif kind == "proportional":
        if any(ch.capacity < 1 for ch in g.channels):
            raise ValueError("proportional capacity assignment needs existing capacities")
        draws = [float(ch.capacity) for ch in g.channels]
    else:
        raise ValueError(f"unknown capacity distribution kind: {kind!r}")

    scale = mean_capacity * m / sum(draws)
    caps = [max(1, round(d * scale)) for d in draws]
    # Nudge rounding residue so the empirical mean lands on target.
    residue = round(mean_capacity * m) - sum(caps)
    step = 1 if residue > 0 else -1
    i = 0
    while residue != 0 and i < 4 * m:
        idx = i % m
        if caps[idx] + step >= 1:
            caps[idx] += step
            residue -= step
        i += 1

    channels = tuple(
        replace(ch, capacity=c, balance_u=c - c // 2, balance_v=c // 2)
        for ch, c in zip(g.channels, caps)
    )
    meta = dict(g.meta)
    meta.update({"mean_channel": mean_capacity, "capacity_dist": dict(dist), "capacity_seed": seed})
    return Graph(n=g.n, channels=channels, meta=meta)


def _widest_path(g: Graph, alive: list[bool], src: int, dst: int) -> Path | None:
    """Max-bottleneck path over the alive channels, or None.

    Bottleneck-Dijkstra: settle nodes in decreasing order of the best
    bottleneck reaching them; ties settle the smaller node id first and
    prefer the lexicographically smaller (predecessor, channel) pair, making
    the result deterministic.
    """
    inf = float("inf")
    best = [0.0] * g.n
    best[src] = inf
    pred: list[tuple[int, int]] = [(-1, -1)] * g.n
    settled = [False] * g.n
    heap: list[tuple[float, int]] = [(-inf, src)]
    channels = g.channels
    while heap:
        negw, u = heappop(heap)
        if settled[u]:
            continue
        settled[u] = True
        if u == dst:
            break
        w_u = best[u]
        for ci in g.adjacency[u]:
            if not alive[ci]:
                continue
            ch = channels[ci]
            v = ch.v if ch.u == u else ch.u
            if settled[v]:
                continue
            w = w_u if ch.capacity > w_u else float(ch.capacity)
            if w > best[v]:
                best[v] = w
                pred[v] = (u, ci)
                heappush(heap, (-w, v))
            elif w == best[v] and w > 0 and (u, ci) < pred[v]:
                pred[v] = (u, ci)
    if best[dst] <= 0:
        return None
    nodes = [dst]
    chans: list[int] = []
    dirs: list[bool] = []
    cur = dst
    while cur != src:
        pu, ci = pred[cur]
        chans.append(ci)
        dirs.append(channels[ci].u == pu)
        nodes.append(pu)
        cur = pu
    nodes.reverse()
    chans.reverse()
    dirs.reverse()
    return Path(
        nodes=tuple(nodes),
        channels=tuple(chans),
        directions=tuple(dirs),
        delays=tuple(channels[ci].delay for ci in chans),
        bottleneck_capacity=min(channels[ci].capacity for ci in chans),
    )


def k_widest_disjoint_paths(g: Graph, src: int, dst: int, k: int) -> list[Path]:
    """Up to k pairwise edge-disjoint paths, widest first.

    Greedy: repeatedly find the max-bottleneck path and remove its channels
    until k paths are found or src and dst disconnect. Returns paths in
    discovery order (non-increasing bottleneck); empty list if no path.
    """
    if src == dst:
        raise ValueError("src and dst must differ")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not (0 <= src < g.n and 0 <= dst < g.n):
        raise ValueError(f"node out of range: src={src}, dst={dst}")
    alive = [True] * len(g.channels)
    paths: list[Path] = []
    for _ in range(k):
        p = _widest_path(g, alive, src, dst)
        if p is None:
            break
        paths.append(p)
        for ci in p.channels:
            alive[ci] = False
    return paths
