"""Deadline-aware sender logic for the DPCN protocol.

Three cooperating pieces, all driven from the ack stream:

* dynamic split sizing — shard size is the pair's average path window
  scaled by a logistic split factor of the transaction's urgency (deadline
  over average completion-time estimate);
* deadline-aware scheduling — queues order shards by remaining time, then
  by size, so near-deadline traffic overtakes slack traffic;
* per-path congestion windows — an EWMA of marked acks (alpha) and of
  completion times (ET) feed a gamma-corrected penalty p = alpha^d that
  backs off slack traffic harder than urgent traffic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from heapq import heappop, heappush

from .engine import (AckMessage, ShardState, SubTransaction, Transaction,
                     TxStatus)
from .topology import Path


@dataclass
class DpcnParams:
    c: float = 8.0                 # split-curve steepness, > 1
    b: float = 0.8                 # split-curve midpoint: gamma(b) == 0.5
    e: float = 0.3                 # weight of a new marked-fraction sample
    y: float = 0.3                 # weight of a new completion-time sample
    g: float = 8.0                 # window multiplicative-decrease divisor
    beta: float = 1.3              # window additive-increase step
    tx_threshold: int = 20         # acks per congestion-estimate update
    fixed_split_nodl: int = 20     # split size for no-deadline transactions
    w_min: float = 1.0             # window floor, fund-units
    invert_urgency: bool = False   # alternative x = avg_time/deadline reading
    forced_split_size: int | None = None  # override for split-size sweeps

    def validate(self) -> None:
        if self.c <= 1:
            raise ValueError("c must be > 1")
        if not 0 < self.e <= 1 or not 0 < self.y <= 1:
            raise ValueError("e and y must be in (0, 1]")
        if self.g <= 1 or self.beta <= 0:
            raise ValueError("g must be > 1 and beta > 0")
        if self.tx_threshold < 1:
            raise ValueError("tx_threshold must be >= 1")
        if self.w_min < 1:
            raise ValueError("w_min must be >= 1")


class PathState:
    """Per-(sender, path) controller state.

    `window` caps unconfirmed fund-units in flight on the path; it starts at
    half the path's bottleneck capacity and never leaves [w_min, bottleneck].
    `est_completion` starts at the path's round-trip propagation time.
    """

    __slots__ = ("path_index", "path", "window", "w_cap", "unconfirmed",
                 "alpha", "est_completion", "tot_acks", "tot_marked", "queue")

    def __init__(self, path_index: int, path: Path):
        self.path_index = path_index
        self.path = path
        self.w_cap = float(path.bottleneck_capacity)
        self.window = 0.5 * self.w_cap
        self.unconfirmed = 0
        self.alpha = 0.0
        self.est_completion = 2.0 * sum(path.delays)
        self.tot_acks = 0
        self.tot_marked = 0
        self.queue: list = []

    @property
    def headroom(self) -> float:
        return self.window - self.unconfirmed


def urgency_x(deadline: float, p_avg_time: float) -> float:
    """Urgency factor: deadline over the average completion-time estimate."""
    if p_avg_time <= 0:
        raise ValueError("p_avg_time must be positive")
    if deadline <= 0:
        raise ValueError("deadline must be positive")
    return deadline / p_avg_time


def split_factor_gamma(x: float, c: float, b: float) -> float:
    """Logistic split factor in (0, 1): 1 / (1 + c^-(x-b)).

    Strictly increasing in x, equals 0.5 at x == b, and grows fastest there.
    """
    return 1.0 / (1.0 + c ** (-(x - b)))


def split_size(tx, path_states: list[PathState], params: DpcnParams) -> int:
    """Dynamic shard size for a transaction over its pair's paths.

    Deadline traffic: mean path window times the split factor of its
    urgency, rounded half-up and clamped to [1, amount]. No-deadline
    traffic uses the fixed size.
    """
    if tx.deadline is None:
        return params.fixed_split_nodl
    ws_avg = sum(ps.window for ps in path_states) / len(path_states)
    p_avg = sum(ps.est_completion for ps in path_states) / len(path_states)
    if params.invert_urgency:
        x = urgency_x(p_avg, tx.deadline)
    else:
        x = urgency_x(tx.deadline, p_avg)
    size = int(ws_avg * split_factor_gamma(x, params.c, params.b) + 0.5)
    return max(1, min(size, tx.amount))


def split_transaction(tx: Transaction, size: int, start_id: int = 0) -> list[SubTransaction]:
    """Split into floor(amount/size) shards of `size` plus the remainder.

    Shard amounts always sum to the parent amount; shards inherit the
    parent's deadline and creation time.
    """
    if size < 1:
        raise ValueError(f"split size must be >= 1, got {size}")
    amounts = [size] * (tx.amount // size)
    rem = tx.amount % size
    if rem:
        amounts.append(rem)
    return [SubTransaction(start_id + i, tx, a) for i, a in enumerate(amounts)]


def schedule_key(shard) -> tuple:
    """Sort key for deadline-aware queues.

    Deadline shards come first, ordered by absolute expiry instant
    (equivalent to remaining time, since `now` offsets both sides of any
    comparison equally), then by smaller amount; no-deadline shards follow,
    ordered by smaller amount. sub_id breaks remaining ties.
    """
    if shard.deadline is not None:
        return (0, shard.created_at + shard.deadline, shard.amount, shard.sub_id)
    return (1, 0.0, shard.amount, shard.sub_id)


def schedule_order(a, b, now: float = 0.0) -> int:
    """Strict total order over shards: -1 if a first, 1 if b first, 0 if same."""
    ka, kb = schedule_key(a), schedule_key(b)
    if ka < kb:
        return -1
    if ka > kb:
        return 1
    return 0


def admit_to_path(ps: PathState, shard: SubTransaction, now: float) -> bool:
    """Send iff amount + unconfirmed stays strictly under the window.

    On admission the shard's in-flight amount is charged to the path and
    its send time stamped; the caller queues it otherwise.
    """
    if shard.amount + ps.unconfirmed < ps.window:
        ps.unconfirmed += shard.amount
        shard.time_sent = now
        return True
    return False


def select_path(shard, path_states: list[PathState]) -> int:
    """Admissible path with the most headroom; ties go to the lower index.

    Falls back to the max-headroom path (for queueing) when no path can
    admit the shard right now.
    """
    best = -1
    best_h = -math.inf
    for ps in path_states:
        h = ps.headroom
        if shard.amount + ps.unconfirmed < ps.window and h > best_h:
            best = ps.path_index
            best_h = h
    if best >= 0:
        return best
    for ps in path_states:
        if ps.headroom > best_h:
            best = ps.path_index
            best_h = ps.headroom
    return best


def on_ack_update(ps: PathState, ack: AckMessage, now: float, params: DpcnParams,
                  global_timeout: float) -> None:
    """Window adjustment on each ack delivered to the end host.

    Counts marked acks into an EWMA congestion estimate once per
    tx_threshold epoch, refreshes the completion-time estimate, and applies
    the gamma-corrected AIMD step: multiplicative decrease by p/g when the
    penalty p = alpha^d is positive, else additive increase by beta. The
    urgency d divides the estimate by the ack's deadline (the global
    timeout stands in for no-deadline traffic).
    """
    ps.tot_acks += 1
    if ack.is_marked:
        ps.tot_marked += 1
    if ps.tot_acks > params.tx_threshold:
        k = ps.tot_marked / ps.tot_acks
        ps.alpha = (1.0 - params.e) * ps.alpha + params.e * k
        ps.tot_acks = 0
        ps.tot_marked = 0
    t = now - ack.time_sent
    ps.est_completion = (1.0 - params.y) * ps.est_completion + params.y * t
    bound = ack.deadline if ack.has_deadline else global_timeout
    d = ps.est_completion / bound
    p = ps.alpha ** d
    if p > 0.0:
        ps.window = max(params.w_min, ps.window * (1.0 - p / params.g))
    else:
        ps.window = min(ps.w_cap, ps.window + params.beta)
    ps.unconfirmed -= ack.amount


class _WindowedSender:
    """Shared machinery for window-gated splitting senders.

    Subclasses choose the shard size, the queue ordering, and the window
    reaction to acks. Path state is created lazily per (sender, receiver)
    pair from the k widest edge-disjoint paths.
    """

    def __init__(self):
        self.pairs: dict[tuple[int, int], list[PathState]] = {}

    # subclass hooks
    def _split_size(self, tx, states) -> int:
        raise NotImplementedError

    def _sender_queue_key(self, shard, now: float, token: int) -> tuple:
        raise NotImplementedError

    def queue_key(self, shard, now: float, token: int) -> tuple:
        raise NotImplementedError

    def _apply_ack(self, ps: PathState, ack: AckMessage, now: float) -> None:
        raise NotImplementedError

    def _states_for(self, sim, sender: int, receiver: int) -> list[PathState]:
        key = (sender, receiver)
        states = self.pairs.get(key)
        if states is None:
            states = [PathState(i, p) for i, p in enumerate(sim.paths_for(sender, receiver))]
            self.pairs[key] = states
        return states

    def on_tx_arrival(self, sim, tx: Transaction) -> None:
        states = self._states_for(sim, tx.sender, tx.receiver)
        if not states:
            tx.status = TxStatus.FAILED
            tx.resolved_at = sim.clock
            return
        size = self._split_size(tx, states)
        n = tx.amount // size + (1 if tx.amount % size else 0)
        tx.shards = split_transaction(tx, size, sim.take_sub_ids(n))
        now = sim.clock
        for shard in tx.shards:
            idx = select_path(shard, states)
            ps = states[idx]
            shard.path_index = idx
            shard.path = ps.path
            if admit_to_path(ps, shard, now):
                sim.forward_or_enqueue(shard, 1, now)
            else:
                shard.state = ShardState.SENDER_QUEUED
                heappush(ps.queue, (self._sender_queue_key(shard, now, sim.next_token()), shard))

    def on_sender_ack(self, sim, shard: SubTransaction, ack: AckMessage) -> None:
        states = self.pairs[(shard.parent.sender, shard.parent.receiver)]
        ps = states[ack.path_index]
        self._apply_ack(ps, ack, sim.clock)
        self._drain_sender_queue(sim, ps)

    def _drain_sender_queue(self, sim, ps: PathState) -> None:
        q = ps.queue
        now = sim.clock
        while q:
            _, shard = q[0]
            if shard.state != ShardState.SENDER_QUEUED:
                heappop(q)  # cancelled while waiting
                continue
            if not admit_to_path(ps, shard, now):
                break
            heappop(q)
            sim.forward_or_enqueue(shard, 1, now)

    def on_wake(self, sim, payload) -> None:
        raise NotImplementedError(f"{type(self).__name__} schedules no wakeups")

    def on_probe(self, sim, payload) -> None:
        raise NotImplementedError(f"{type(self).__name__} sends no probes")

    def audit(self, sim, truth: dict) -> None:
        """Cross-check per-path unconfirmed sums against the engine's ledger."""
        for (s, r), states in self.pairs.items():
            for ps in states:
                expect = truth.get((s, r, ps.path_index), 0)
                if ps.unconfirmed != expect:
                    raise AssertionError(
                        f"unconfirmed drift on pair {s}->{r} path {ps.path_index}: "
                        f"{ps.unconfirmed} != {expect}"
                    )


class DpcnSender(_WindowedSender):
    """Deadline-aware sender: dynamic splits, deadline-ordered queues,
    gamma-corrected window control."""

    def __init__(self, params: DpcnParams, global_timeout: float):
        super().__init__()
        params.validate()
        self.params = params
        self.global_timeout = global_timeout

    def _split_size(self, tx, states) -> int:
        if self.params.forced_split_size is not None:
            return self.params.forced_split_size
        return split_size(tx, states, self.params)

    def _sender_queue_key(self, shard, now, token) -> tuple:
        return schedule_key(shard)

    def queue_key(self, shard, now, token) -> tuple:
        return schedule_key(shard)

    def _apply_ack(self, ps, ack, now) -> None:
        on_ack_update(ps, ack, now, self.params, self.global_timeout)
