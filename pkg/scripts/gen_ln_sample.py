#!/usr/bin/env python3
"""Regenerate data/ln_sample_106.json.

A synthetic stand-in for a sampled Lightning-style subnetwork: 106 nodes,
265 channels, connected, heavy-tailed capacities (base mean 4000, rescaled
per run by the proportional capacity distribution), and per-link delays
log-uniform between 0.29 ms and 130 ms.
"""

import math
import os
import random
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from pcnsim.topology import Channel, Graph, assign_capacities, save_topology

N_NODES = 106
N_CHANNELS = 265
SEED = 1906


def main() -> None:
    rng = random.Random(SEED)
    order = list(range(N_NODES))
    rng.shuffle(order)
    edges = set()
    for i in range(1, N_NODES):  # random spanning tree keeps it connected
        u = order[i]
        v = order[rng.randrange(i)]
        edges.add((min(u, v), max(u, v)))
    while len(edges) < N_CHANNELS:
        u, v = rng.sample(range(N_NODES), 2)
        edges.add((min(u, v), max(u, v)))

    lo, hi = math.log(0.29), math.log(130.0)
    channels = tuple(
        Channel(u=u, v=v, capacity=1, delay=round(math.exp(rng.uniform(lo, hi)), 3) / 1000.0)
        for u, v in sorted(edges)
    )
    g = Graph(n=N_NODES, channels=channels)
    g = assign_capacities(g, 4000, {"kind": "lognormal", "sigma": 1.0}, seed=SEED)
    out = os.path.join(os.path.dirname(__file__), "..", "data", "ln_sample_106.json")
    os.makedirs(os.path.dirname(out), exist_ok=True)
    save_topology(g, out)
    print(f"wrote {g.n} nodes / {len(g.channels)} channels to {out}")


if __name__ == "__main__":
    main()
