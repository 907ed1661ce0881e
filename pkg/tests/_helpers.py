"""Shared builders for engine-level tests."""

from pcnsim.engine import RunSettings, Simulation
from pcnsim.topology import Channel, Graph
from pcnsim.workload import TxSpec


def make_graph(n, edges, delay=0.03):
    """edges: (u, v, capacity) or (u, v, capacity, balance_u, balance_v)."""
    channels = []
    for e in edges:
        if len(e) == 3:
            u, v, cap = e
            bu, bv = cap - cap // 2, cap // 2
        else:
            u, v, cap, bu, bv = e
        assert bu + bv == cap
        channels.append(Channel(u=min(u, v), v=max(u, v), capacity=cap, delay=delay,
                                balance_u=bu, balance_v=bv))
    return Graph(n=n, channels=tuple(channels))


def make_sim(graph, txs=(), **settings_kw):
    settings_kw.setdefault("check_conservation", True)
    settings_kw.setdefault("audit_unconfirmed", True)
    settings = RunSettings(**settings_kw)
    return Simulation(graph, settings, list(txs))


def tx(t, s, r, amount, deadline=None):
    return TxSpec(t=t, sender=s, receiver=r, amount=amount, deadline=deadline)
