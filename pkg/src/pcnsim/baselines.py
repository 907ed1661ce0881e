"""Deadline-agnostic comparison protocols.

Spider-style sender: fixed-MTU splitting, FIFO queues everywhere, and a
plain marked-ack AIMD window per path (no deadline, no urgency, no
completion-time estimate). Waterfilling sender: no windows at all; each
dispatch round probes the current bottleneck balance of every path with
event-simulated messages and sends shards to the path with the largest
available balance. Neither protocol's ordering or window logic reads a
deadline field; they only resolve deadlines through the engine's expiry.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from .dpcn import PathState, _WindowedSender, split_transaction
from .engine import AckMessage, EventKind, ShardState, SubTransaction, Transaction, TxStatus
from .topology import Path


@dataclass
class SpiderParams:
    mtu: int = 1                   # fixed shard size, fund-units
    g: float = 8.0                 # multiplicative-decrease divisor
    beta: float = 1.3              # additive-increase step
    w_min: float = 1.0

    def validate(self) -> None:
        if self.mtu < 1:
            raise ValueError("mtu must be >= 1")
        if self.g <= 1 or self.beta <= 0:
            raise ValueError("g must be > 1 and beta > 0")


@dataclass
class WaterfillingParams:
    mtu: int = 1
    retry_interval: float = 0.1    # seconds between dispatch attempts while queued

    def validate(self) -> None:
        if self.mtu < 1:
            raise ValueError("mtu must be >= 1")
        if self.retry_interval <= 0:
            raise ValueError("retry_interval must be positive")


def spider_split(tx: Transaction, mtu: int, start_id: int = 0) -> list[SubTransaction]:
    """Equal parts of `mtu` fund-units plus the remainder, for every transaction."""
    return split_transaction(tx, mtu, start_id)


def spider_window_adjust(ps: PathState, ack: AckMessage, params: SpiderParams) -> None:
    """Mark-driven AIMD with no deadline inputs.

    Marked ack: multiplicative decrease by 1/g (floored at w_min).
    Unmarked ack: additive increase by beta (capped at the path bottleneck).
    """
    if ack.is_marked:
        ps.window = max(params.w_min, ps.window * (1.0 - 1.0 / params.g))
    else:
        ps.window = min(ps.w_cap, ps.window + params.beta)


def spider_queue_order(a, b) -> int:
    """FIFO over queued shards: earlier arrival first, shard id breaks ties."""
    ka = (a.enqueue_time, a.sub_id)
    kb = (b.enqueue_time, b.sub_id)
    if ka < kb:
        return -1
    if ka > kb:
        return 1
    return 0


class SpiderSender(_WindowedSender):
    """Fixed-MTU splitting sender with FIFO queues and mark-only windows."""

    def __init__(self, params: SpiderParams):
        super().__init__()
        params.validate()
        self.params = params

    def _split_size(self, tx, states) -> int:
        return self.params.mtu

    def _sender_queue_key(self, shard, now, token) -> tuple:
        return (now, token)

    def queue_key(self, shard, now, token) -> tuple:
        return (now, token)

    def _apply_ack(self, ps, ack, now) -> None:
        spider_window_adjust(ps, ack, self.params)
        ps.unconfirmed -= ack.amount


class ProbeMessage:
    """In-flight balance probe walking one path hop by hop.

    Records the minimum directional balance observed at each visit instant;
    the recorded minimum is non-increasing along the walk by construction.
    """

    __slots__ = ("path_index", "min_balance_seen", "hop")

    def __init__(self, path_index: int):
        self.path_index = path_index
        self.min_balance_seen = math.inf
        self.hop = 0  # node index reached so far


class _ProbeRound:
    __slots__ = ("pending", "min_balances")

    def __init__(self, n_paths: int):
        self.pending = n_paths
        self.min_balances = [0] * n_paths


class _PairFlow:
    __slots__ = ("sender", "receiver", "paths", "unconfirmed", "queue",
                 "probing", "wake_scheduled")

    def __init__(self, sender: int, receiver: int, paths: list[Path]):
        self.sender = sender
        self.receiver = receiver
        self.paths = paths
        self.unconfirmed = [0] * len(paths)
        self.queue: deque = deque()
        self.probing = False
        self.wake_scheduled = False


class WaterfillingSender:
    """Balance-probing sender: argmax available = min_balance - unconfirmed.

    Shards wait in a per-pair FIFO; the head blocks until some path's
    probed available balance covers it. While shards wait, a new probe
    round fires on every retry interval.
    """

    def __init__(self, params: WaterfillingParams):
        params.validate()
        self.params = params
        self.flows: dict[tuple[int, int], _PairFlow] = {}

    def _flow_for(self, sim, sender: int, receiver: int) -> _PairFlow | None:
        key = (sender, receiver)
        flow = self.flows.get(key)
        if flow is None:
            paths = sim.paths_for(sender, receiver)
            if not paths:
                return None
            flow = _PairFlow(sender, receiver, paths)
            self.flows[key] = flow
        return flow

    def on_tx_arrival(self, sim, tx: Transaction) -> None:
        flow = self._flow_for(sim, tx.sender, tx.receiver)
        if flow is None:
            tx.status = TxStatus.FAILED
            tx.resolved_at = sim.clock
            return
        n = tx.amount // self.params.mtu + (1 if tx.amount % self.params.mtu else 0)
        tx.shards = split_transaction(tx, self.params.mtu, sim.take_sub_ids(n))
        for shard in tx.shards:
            shard.state = ShardState.SENDER_QUEUED
            flow.queue.append(shard)
        self._maybe_probe(sim, flow)

    def queue_key(self, shard, now, token) -> tuple:
        return (now, token)  # router queues are FIFO

    def on_sender_ack(self, sim, shard, ack: AckMessage) -> None:
        flow = self.flows[(shard.parent.sender, shard.parent.receiver)]
        flow.unconfirmed[ack.path_index] -= ack.amount

    # ---------------- probing ----------------

    def _maybe_probe(self, sim, flow: _PairFlow) -> None:
        if flow.probing or not flow.queue:
            return
        flow.probing = True
        rnd = _ProbeRound(len(flow.paths))
        for i in range(len(flow.paths)):
            self._probe_advance(sim, flow, rnd, ProbeMessage(i))

    def _probe_advance(self, sim, flow: _PairFlow, rnd: _ProbeRound,
                       probe: ProbeMessage) -> None:
        """Read the next hop's directional balance, then cross it."""
        path = flow.paths[probe.path_index]
        h = probe.hop
        ci = path.channels[h]
        d = 0 if path.directions[h] else 1
        b = sim.bal[ci][d]
        if b < probe.min_balance_seen:
            probe.min_balance_seen = b
        probe.hop = h + 1
        if probe.hop == len(path.channels):
            # arrives at the receiver, then rides straight back
            back = sum(path.delays)
            sim.schedule(sim.clock + path.delays[h] + back, EventKind.SENDER_WAKE,
                         ("probe_done", flow, rnd, probe))
        else:
            sim.schedule(sim.clock + path.delays[h], EventKind.PROBE_HOP, (flow, rnd, probe))

    def on_probe(self, sim, payload) -> None:
        flow, rnd, probe = payload
        self._probe_advance(sim, flow, rnd, probe)

    def on_wake(self, sim, payload) -> None:
        what = payload[0]
        if what == "probe_done":
            _, flow, rnd, probe = payload
            rnd.min_balances[probe.path_index] = probe.min_balance_seen
            rnd.pending -= 1
            if rnd.pending == 0:
                flow.probing = False
                self._dispatch(sim, flow, rnd.min_balances)
        elif what == "retry":
            flow = payload[1]
            flow.wake_scheduled = False
            self._maybe_probe(sim, flow)
        else:
            raise AssertionError(f"unknown wake payload: {what!r}")

    def _dispatch(self, sim, flow: _PairFlow, min_balances: list) -> None:
        q = flow.queue
        now = sim.clock
        while q:
            shard = q[0]
            if shard.state != ShardState.SENDER_QUEUED:
                q.popleft()  # cancelled while waiting
                continue
            best = -1
            best_avail = -math.inf
            for i in range(len(flow.paths)):
                avail = min_balances[i] - flow.unconfirmed[i]
                if avail > best_avail:
                    best = i
                    best_avail = avail
            if best_avail < shard.amount:
                break
            q.popleft()
            shard.path_index = best
            shard.path = flow.paths[best]
            flow.unconfirmed[best] += shard.amount
            shard.time_sent = now
            sim.forward_or_enqueue(shard, 1, now)
        if q and not flow.wake_scheduled:
            flow.wake_scheduled = True
            sim.schedule(now + self.params.retry_interval, EventKind.SENDER_WAKE,
                         ("retry", flow))

    def audit(self, sim, truth: dict) -> None:
        for (s, r), flow in self.flows.items():
            for i, unconfirmed in enumerate(flow.unconfirmed):
                expect = truth.get((s, r, i), 0)
                if unconfirmed != expect:
                    raise AssertionError(
                        f"unconfirmed drift on pair {s}->{r} path {i}: "
                        f"{unconfirmed} != {expect}"
                    )
