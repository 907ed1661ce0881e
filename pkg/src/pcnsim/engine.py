"""Deterministic discrete-event core for payment-channel simulations.

One ``Simulation`` owns all mutable state for a run: the clock, the event
heap, per-channel balances/locks/queues, and transaction bookkeeping. The
loop is strictly single-threaded; independent runs may execute in parallel.
Events dispatch in (time, seq) order with a unique monotone seq, so a run
is bit-exact reproducible for a fixed (settings, graph, workload).

Funds model: forwarding a shard over a channel moves `amount` from the
sending side's balance into that side's locked escrow. A success ack
releases the escrow to the far side (funds cross); a failure or cancel ack
refunds the escrow to the sending side. Channel conservation
(balance_u + balance_v + locked_u + locked_v == capacity) therefore holds
after every event, which the engine can assert when checks are enabled.

Sender protocol objects (deadline-aware, fixed-MTU, balance-probing) plug
in via duck-typed hooks: ``on_tx_arrival``, ``queue_key``,
``on_sender_ack``, and optionally ``on_wake``/``on_probe``/``audit``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from enum import IntEnum
from heapq import heappop, heappush

from .metrics import MetricsLog, ShardRecord, TxRecord
from .topology import Graph, Path, k_widest_disjoint_paths


class EventKind(IntEnum):
    TX_ARRIVAL = 0
    SUBTX_HOP = 1
    ACK_HOP = 2
    CANCEL_HOP = 3
    SENDER_WAKE = 4
    DEADLINE_EXPIRY = 5
    STATS_TICK = 6
    PROBE_HOP = 7


class TxStatus(IntEnum):
    PENDING = 0
    SUCCEEDED = 1
    FAILED = 2


class ShardState(IntEnum):
    CREATED = 0
    SENDER_QUEUED = 1   # waiting at the sender for window/balance headroom
    IN_FLIGHT = 2       # traversing a channel (funds locked on the hop)
    ROUTER_QUEUED = 3   # waiting in a channel's direction queue
    RECEIVED = 4        # reached the receiver; ack traveling back
    CANCELLING = 5      # refund ack traveling back
    DONE = 6            # terminal ack delivered to the sender


# forward_or_enqueue outcomes
FORWARDED = 0
ENQUEUED = 1
DROPPED = 2


class Transaction:
    """A payment demand; `deadline` is a duration from created_at or None."""

    __slots__ = ("id", "sender", "receiver", "amount", "created_at", "deadline",
                 "status", "shards", "ok_acked", "resolved_at")

    def __init__(self, tx_id, sender, receiver, amount, created_at, deadline):
        self.id = tx_id
        self.sender = sender
        self.receiver = receiver
        self.amount = amount
        self.created_at = created_at
        self.deadline = deadline
        self.status = TxStatus.PENDING
        self.shards: list[SubTransaction] = []
        self.ok_acked = 0
        self.resolved_at: float | None = None

    @property
    def has_deadline(self) -> bool:
        return self.deadline is not None


class SubTransaction:
    """One split shard, routed independently on a single path."""

    __slots__ = ("sub_id", "parent", "amount", "path_index", "path", "time_sent",
                 "created_at", "deadline", "marked", "state", "hops_locked",
                 "queue_loc", "enqueue_time", "succeeded", "cancel_on_arrival")

    def __init__(self, sub_id: int, parent: Transaction, amount: int):
        self.sub_id = sub_id
        self.parent = parent
        self.amount = amount
        self.path_index: int | None = None
        self.path: Path | None = None
        self.time_sent: float | None = None
        self.created_at = parent.created_at
        self.deadline = parent.deadline
        self.marked = False
        self.state = ShardState.CREATED
        self.hops_locked = 0
        self.queue_loc: tuple[int, int] | None = None
        self.enqueue_time = 0.0
        self.succeeded = False
        self.cancel_on_arrival = False

    @property
    def has_deadline(self) -> bool:
        return self.deadline is not None


@dataclass(frozen=True)
class AckMessage:
    """Confirmation record forwarded back to the sender, mirroring its shard."""

    sub_id: int
    parent_id: int
    receiver: int
    path_index: int
    time_sent: float
    is_success: bool
    amount: int
    has_deadline: bool
    deadline: float | None
    is_marked: bool


@dataclass
class RouterConfig:
    mark_threshold: float = 0.2        # seconds a shard may queue before being marked
    queue_capacity: int = 8000         # queued shards per channel direction

    def validate(self) -> None:
        if self.mark_threshold <= 0:
            raise ValueError("mark_threshold must be positive")
        if self.queue_capacity < 1:
            raise ValueError("queue_capacity must be >= 1")


@dataclass
class RunSettings:
    """Everything one simulation run needs besides the graph and workload."""

    protocol: str = "dpcn"
    dpcn: object = None
    spider: object = None
    waterfilling: object = None
    router: RouterConfig = field(default_factory=RouterConfig)
    k_paths: int = 8
    global_timeout: float = 5.0        # resolution bound for no-deadline traffic
    seed: int = 0
    check_conservation: bool = False
    audit_unconfirmed: bool = False
    stats_interval: float = 1.0
    trace_path: str | None = None

    def __post_init__(self) -> None:
        if self.dpcn is None:
            from .dpcn import DpcnParams
            self.dpcn = DpcnParams()
        if self.spider is None:
            from .baselines import SpiderParams
            self.spider = SpiderParams()
        if self.waterfilling is None:
            from .baselines import WaterfillingParams
            self.waterfilling = WaterfillingParams()


def mark_if_stale(shard: SubTransaction, enqueue_time: float, dequeue_time: float,
                  threshold: float) -> SubTransaction:
    """Set the congestion mark when queue wait exceeded the threshold.

    The mark is monotone: once set it survives later, shorter waits.
    """
    if dequeue_time - enqueue_time > threshold:
        shard.marked = True
    return shard


def _make_protocol(settings: RunSettings):
    from . import baselines, dpcn
    if settings.protocol == "dpcn":
        return dpcn.DpcnSender(settings.dpcn, settings.global_timeout)
    if settings.protocol == "spider":
        return baselines.SpiderSender(settings.spider)
    if settings.protocol == "waterfilling":
        return baselines.WaterfillingSender(settings.waterfilling)
    raise ValueError(f"unknown protocol: {settings.protocol!r}")


class Simulation:
    """Single-run state: clock, event heap, channel ledger, transactions."""

    def __init__(self, graph: Graph, settings: RunSettings, workload):
        settings.router.validate()
        for ch in graph.channels:
            if ch.capacity < 1:
                raise ValueError("graph has unassigned capacities; run assign_capacities first")
        if not graph.is_connected():
            warnings.warn("graph is not connected; some pairs will have no route", stacklevel=2)
        self.graph = graph
        self.settings = settings
        self.protocol = _make_protocol(settings)

        m = len(graph.channels)
        self.cap = [ch.capacity for ch in graph.channels]
        self.bal = [[ch.balance_u, ch.balance_v] for ch in graph.channels]
        self.locked = [[0, 0] for _ in range(m)]
        self.queues: list[list[list]] = [[[], []] for _ in range(m)]
        self.qlen = [[0, 0] for _ in range(m)]

        self.clock = 0.0
        self.seq = 0
        self.heap: list = []
        self.token = 0
        self._next_sub = 0
        self._paths: dict[tuple[int, int], list[Path]] = {}
        self.shard_rows: list[ShardRecord] = []
        self._live: set[SubTransaction] | None = set() if settings.audit_unconfirmed else None

        self.txs: list[Transaction] = []
        last_t = 0.0
        for i, spec in enumerate(workload):
            if spec.amount < 1:
                raise ValueError(f"transaction {i} amount must be >= 1")
            if spec.sender == spec.receiver:
                raise ValueError(f"transaction {i} sender equals receiver")
            tx = Transaction(i, spec.sender, spec.receiver, spec.amount, spec.t, spec.deadline)
            self.txs.append(tx)
            self.schedule(spec.t, EventKind.TX_ARRIVAL, tx)
            last_t = max(last_t, spec.t)
        self._stats_until = last_t + settings.global_timeout + 1.0
        if settings.audit_unconfirmed and self.txs:
            self.schedule(settings.stats_interval, EventKind.STATS_TICK, None)

        self._handlers = [None] * len(EventKind)
        self._handlers[EventKind.TX_ARRIVAL] = self._on_tx_arrival
        self._handlers[EventKind.SUBTX_HOP] = self._on_subtx_hop
        self._handlers[EventKind.ACK_HOP] = lambda p: self._ack_walk(p, EventKind.ACK_HOP)
        self._handlers[EventKind.CANCEL_HOP] = lambda p: self._ack_walk(p, EventKind.CANCEL_HOP)
        self._handlers[EventKind.SENDER_WAKE] = lambda p: self.protocol.on_wake(self, p)
        self._handlers[EventKind.DEADLINE_EXPIRY] = self._on_deadline_expiry
        self._handlers[EventKind.STATS_TICK] = self._on_stats_tick
        self._handlers[EventKind.PROBE_HOP] = lambda p: self.protocol.on_probe(self, p)

    # ---------------- event plumbing ----------------

    def schedule(self, t: float, kind: EventKind, payload) -> None:
        self.seq += 1
        heappush(self.heap, (t, self.seq, int(kind), payload))

    def next_token(self) -> int:
        self.token += 1
        return self.token

    def take_sub_ids(self, count: int) -> int:
        start = self._next_sub
        self._next_sub += count
        return start

    def run_loop(self) -> None:
        check = self.settings.check_conservation
        trace_fh = open(self.settings.trace_path, "w") if self.settings.trace_path else None
        handlers = self._handlers
        heap = self.heap
        try:
            while heap:
                t, seq, kind, payload = heappop(heap)
                if t < self.clock:
                    raise AssertionError(f"event out of order: {t} < {self.clock}")
                self.clock = t
                if trace_fh is not None:
                    self._trace(trace_fh, t, seq, kind, payload)
                handlers[kind](payload)
                if check:
                    self.check_conservation()
        finally:
            if trace_fh is not None:
                trace_fh.close()
        if check:
            for ci, (l0, l1) in enumerate(self.locked):
                if l0 or l1:
                    raise AssertionError(f"channel {ci} still holds locks at quiescence")
            for tx in self.txs:
                if tx.status == TxStatus.PENDING:
                    raise AssertionError(f"transaction {tx.id} unresolved at quiescence")

    @staticmethod
    def _trace(fh, t, seq, kind, payload) -> None:
        rec = {"t": t, "seq": seq, "kind": EventKind(kind).name}
        if kind in (EventKind.TX_ARRIVAL, EventKind.DEADLINE_EXPIRY):
            rec["tx"] = payload.id
        elif kind == EventKind.SUBTX_HOP:
            rec["sub"] = payload[0].sub_id
            rec["hop"] = payload[1]
        elif kind in (EventKind.ACK_HOP, EventKind.CANCEL_HOP):
            rec["sub"] = payload[0].sub_id
            rec["pos"] = payload[1]
            rec["ok"] = payload[2]
        fh.write(json.dumps(rec))
        fh.write("\n")

    # ---------------- routing ----------------

    def paths_for(self, sender: int, receiver: int) -> list[Path]:
        key = (sender, receiver)
        paths = self._paths.get(key)
        if paths is None:
            paths = k_widest_disjoint_paths(self.graph, sender, receiver, self.settings.k_paths)
            self._paths[key] = paths
        return paths

    # ---------------- channel mechanics ----------------

    def forward_or_enqueue(self, shard: SubTransaction, hop: int, now: float) -> int:
        """Advance a shard onto hop (1-based): lock and fly, queue, or drop.

        Locks move `amount` from the sending side's balance into escrow and
        schedule the arrival one propagation delay later. With insufficient
        balance the shard waits in the direction queue under the protocol's
        scheduling order; a full queue drops it and routes a failure ack
        back over the hops already locked.
        """
        path = shard.path
        ci = path.channels[hop - 1]
        d = 0 if path.directions[hop - 1] else 1
        a = shard.amount
        bal = self.bal[ci]
        if bal[d] >= a:
            bal[d] -= a
            self.locked[ci][d] += a
            shard.hops_locked = hop
            shard.state = ShardState.IN_FLIGHT
            self.schedule(now + path.delays[hop - 1], EventKind.SUBTX_HOP, (shard, hop))
            return FORWARDED
        if self.qlen[ci][d] < self.settings.router.queue_capacity:
            key = self.protocol.queue_key(shard, now, self.next_token())
            heappush(self.queues[ci][d], (key, shard))
            self.qlen[ci][d] += 1
            shard.state = ShardState.ROUTER_QUEUED
            shard.queue_loc = (ci, d)
            shard.enqueue_time = now
            return ENQUEUED
        self._start_terminal_ack(shard, shard.hops_locked, False, EventKind.ACK_HOP)
        return DROPPED

    def _drain_channel(self, ci: int, d: int, now: float) -> None:
        """Release queued shards (scheduling-order head first) while balance lasts."""
        q = self.queues[ci][d]
        bal = self.bal[ci]
        loc = (ci, d)
        threshold = self.settings.router.mark_threshold
        while q:
            _, shard = q[0]
            if shard.queue_loc != loc or shard.state != ShardState.ROUTER_QUEUED:
                heappop(q)  # stale entry (cancelled elsewhere)
                continue
            a = shard.amount
            if bal[d] < a:
                break
            heappop(q)
            self.qlen[ci][d] -= 1
            shard.queue_loc = None
            mark_if_stale(shard, shard.enqueue_time, now, threshold)
            bal[d] -= a
            self.locked[ci][d] += a
            shard.hops_locked += 1
            shard.state = ShardState.IN_FLIGHT
            hop = shard.hops_locked
            self.schedule(now + shard.path.delays[hop - 1], EventKind.SUBTX_HOP, (shard, hop))

    def _on_subtx_hop(self, payload) -> None:
        shard, hop = payload
        if shard.cancel_on_arrival:
            self._start_terminal_ack(shard, hop, False, EventKind.CANCEL_HOP)
            return
        if hop == len(shard.path.channels):
            shard.state = ShardState.RECEIVED
            shard.succeeded = True
            self._start_terminal_ack(shard, hop, True, EventKind.ACK_HOP)
        else:
            self.forward_or_enqueue(shard, hop + 1, self.clock)

    def _start_terminal_ack(self, shard: SubTransaction, pos: int, ok: bool,
                            kind: EventKind) -> None:
        """Launch the backward ack from node `pos` along the path.

        Unlocks happen as the ack arrives at each hop's locking node;
        pos == 0 (nothing locked) delivers at the same timestamp.
        """
        if not ok:
            shard.state = ShardState.CANCELLING
        if pos == 0:
            self.schedule(self.clock, kind, (shard, 0, ok))
        else:
            self.schedule(self.clock + shard.path.delays[pos - 1], kind, (shard, pos, ok))

    def _ack_walk(self, payload, kind: EventKind) -> None:
        shard, pos, ok = payload
        if pos > 0:
            path = shard.path
            ci = path.channels[pos - 1]
            d = 0 if path.directions[pos - 1] else 1
            a = shard.amount
            locked = self.locked[ci]
            if locked[d] < a:
                raise AssertionError(f"unlock exceeds escrow on channel {ci}")
            locked[d] -= a
            rd = (1 - d) if ok else d  # success moves funds across; failure refunds
            self.bal[ci][rd] += a
            self._drain_channel(ci, rd, self.clock)
        if pos <= 1:
            self._deliver_ack(shard, ok)
        else:
            self.schedule(self.clock + shard.path.delays[pos - 2], kind, (shard, pos - 1, ok))

    def _deliver_ack(self, shard: SubTransaction, ok: bool) -> None:
        shard.state = ShardState.DONE
        tx = shard.parent
        if ok:
            tx.ok_acked += 1
            if tx.status == TxStatus.PENDING and tx.ok_acked == len(tx.shards):
                tx.status = TxStatus.SUCCEEDED
                tx.resolved_at = self.clock
        elif tx.status == TxStatus.PENDING:
            tx.status = TxStatus.FAILED
            tx.resolved_at = self.clock
        if shard.time_sent is not None:
            ack = AckMessage(
                sub_id=shard.sub_id, parent_id=tx.id, receiver=tx.receiver,
                path_index=shard.path_index, time_sent=shard.time_sent,
                is_success=ok, amount=shard.amount, has_deadline=shard.deadline is not None,
                deadline=shard.deadline, is_marked=shard.marked,
            )
            self.protocol.on_sender_ack(self, shard, ack)
        self.shard_rows.append(ShardRecord(
            parent_id=tx.id, amount=shard.amount,
            path_index=-1 if shard.path_index is None else shard.path_index,
            succeeded=shard.succeeded, marked=shard.marked,
        ))
        if self._live is not None:
            self._live.discard(shard)

    # ---------------- end-host events ----------------

    def _on_tx_arrival(self, tx: Transaction) -> None:
        self.protocol.on_tx_arrival(self, tx)
        if self._live is not None:
            self._live.update(tx.shards)
        bound = tx.deadline if tx.deadline is not None else self.settings.global_timeout
        self.schedule(tx.created_at + bound, EventKind.DEADLINE_EXPIRY, tx)

    def _on_deadline_expiry(self, tx: Transaction) -> None:
        """Fail a still-pending transaction and unwind its unfinished shards.

        Shards already at the receiver keep their funds moving; everything
        else is cancelled with hop-by-hop refunds of the locks it holds.
        """
        if tx.status == TxStatus.PENDING:
            tx.status = TxStatus.FAILED
            tx.resolved_at = self.clock
        for shard in tx.shards:
            st = shard.state
            if st in (ShardState.RECEIVED, ShardState.CANCELLING, ShardState.DONE):
                continue
            if st == ShardState.IN_FLIGHT:
                shard.cancel_on_arrival = True
            elif st == ShardState.ROUTER_QUEUED:
                ci, d = shard.queue_loc
                self.qlen[ci][d] -= 1
                shard.queue_loc = None
                self._start_terminal_ack(shard, shard.hops_locked, False, EventKind.CANCEL_HOP)
            else:  # SENDER_QUEUED / CREATED: never admitted, nothing locked
                shard.state = ShardState.CANCELLING
                self.schedule(self.clock, EventKind.CANCEL_HOP, (shard, 0, False))

    def _on_stats_tick(self, _payload) -> None:
        if self._live is not None:
            truth: dict[tuple[int, int, int], int] = {}
            for shard in self._live:
                if shard.time_sent is not None and shard.state != ShardState.DONE:
                    key = (shard.parent.sender, shard.parent.receiver, shard.path_index)
                    truth[key] = truth.get(key, 0) + shard.amount
            self.protocol.audit(self, truth)
        nxt = self.clock + self.settings.stats_interval
        if nxt <= self._stats_until:
            self.schedule(nxt, EventKind.STATS_TICK, None)

    # ---------------- checks & results ----------------

    def check_conservation(self) -> None:
        for ci, cap in enumerate(self.cap):
            b = self.bal[ci]
            l = self.locked[ci]
            if b[0] + b[1] + l[0] + l[1] != cap:
                raise AssertionError(
                    f"conservation violated on channel {ci}: "
                    f"{b[0]}+{b[1]}+{l[0]}+{l[1]} != {cap}"
                )

    def build_metrics(self, horizon: float) -> MetricsLog:
        tx_rows = []
        for tx in self.txs:
            ok = tx.status == TxStatus.SUCCEEDED
            tx_rows.append(TxRecord(
                tx_id=tx.id, size=tx.amount, deadline=tx.deadline,
                status="succeeded" if ok else "failed",
                latency_s=(tx.resolved_at - tx.created_at) if ok else None,
                n_shards=len(tx.shards), created_at=tx.created_at,
            ))
        return MetricsLog(
            protocol=self.settings.protocol,
            seed=self.settings.seed,
            horizon=horizon,
            transactions=tuple(tx_rows),
            shards=tuple(self.shard_rows),
            meta={"n_nodes": self.graph.n, "n_channels": len(self.graph.channels),
                  "events": self.seq},
        )


def run(settings: RunSettings, graph: Graph, workload, horizon: float | None = None) -> MetricsLog:
    """Simulate one protocol over a workload; returns the full outcome log.

    Processes every event to quiescence (all transactions resolve within
    their deadline or the global timeout). Bit-exact deterministic for a
    fixed (settings, graph, workload).
    """
    sim = Simulation(graph, settings, workload)
    sim.run_loop()
    if horizon is None:
        horizon = max((tx.t for tx in workload), default=0.0)
    return sim.build_metrics(horizon)
