"""Reproducible transaction streams: Poisson arrivals, skewed sizes, deadlines.

Every host emits transactions as an independent Poisson process toward a
fixed random set of receiver peers. Amounts come from a discrete skewed
distribution; deadline-carrying transactions take their deadline from a
per-size table. Generation is pure and deterministic per seed.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field, replace

from .topology import Graph

# Artifact defaults: the size skew approximates "mostly small amounts";
# the deadline table maps each size to a completion budget in seconds.
DEFAULT_SIZE_WEIGHTS = {5: 0.35, 15: 0.25, 30: 0.15, 80: 0.10, 150: 0.07, 400: 0.05, 1000: 0.03}
DEFAULT_DEADLINE_TABLE = {5: 0.6, 15: 0.7, 30: 0.8, 80: 0.9, 150: 1.1, 400: 1.5, 1000: 2.0}


@dataclass(frozen=True)
class TxSpec:
    """One generated transaction demand; deadline is a duration or None."""

    t: float
    sender: int
    receiver: int
    amount: int
    deadline: float | None


@dataclass
class WorkloadConfig:
    rate_per_host: float = 30.0
    receivers_per_host: int = 10
    size_weights: dict[int, float] = field(default_factory=lambda: dict(DEFAULT_SIZE_WEIGHTS))
    deadline_table: dict[int, float] = field(default_factory=lambda: dict(DEFAULT_DEADLINE_TABLE))
    deadline_fraction: float = 1.0
    horizon: float = 30.0
    seed: int = 0

    def validate(self, n_nodes: int | None = None) -> None:
        if self.rate_per_host <= 0:
            raise ValueError(f"rate_per_host must be positive, got {self.rate_per_host}")
        if self.receivers_per_host < 1:
            raise ValueError("receivers_per_host must be >= 1")
        if n_nodes is not None and self.receivers_per_host > n_nodes - 1:
            raise ValueError(
                f"receivers_per_host={self.receivers_per_host} exceeds peer count {n_nodes - 1}"
            )
        if not 0.0 <= self.deadline_fraction <= 1.0:
            raise ValueError(f"deadline_fraction must be in [0, 1], got {self.deadline_fraction}")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        total = sum(self.size_weights.values())
        if not math.isclose(total, 1.0, abs_tol=1e-9):
            raise ValueError(f"size_weights must sum to 1, got {total}")
        for size in self.size_weights:
            if self.deadline_fraction > 0 and size not in self.deadline_table:
                raise ValueError(f"size {size} missing from deadline_table")


def generate(cfg: WorkloadConfig, graph: Graph) -> list[TxSpec]:
    """Time-ordered transaction stream, deterministic per cfg.seed.

    Each host gets exponential inter-arrivals with mean 1/rate; receivers
    are drawn uniformly from that host's fixed peer set; each transaction
    carries a deadline with probability deadline_fraction.
    """
    cfg.validate(graph.n)
    rng = random.Random(cfg.seed)
    nodes = list(range(graph.n))
    receiver_sets = []
    for h in nodes:
        peers = [x for x in nodes if x != h]
        receiver_sets.append(rng.sample(peers, cfg.receivers_per_host))
    sizes = sorted(cfg.size_weights)
    weights = [cfg.size_weights[s] for s in sizes]
    txs: list[TxSpec] = []
    for h in nodes:
        peers = receiver_sets[h]
        t = 0.0
        while True:
            t += rng.expovariate(cfg.rate_per_host)
            if t >= cfg.horizon:
                break
            receiver = peers[rng.randrange(len(peers))]
            amount = rng.choices(sizes, weights)[0]
            if cfg.deadline_fraction > 0 and rng.random() < cfg.deadline_fraction:
                deadline = cfg.deadline_table[amount]
            else:
                deadline = None
            txs.append(TxSpec(t=t, sender=h, receiver=receiver, amount=amount, deadline=deadline))
    txs.sort(key=lambda tx: (tx.t, tx.sender))
    return txs


def mixed_deadline_sample(cfg: WorkloadConfig, graph: Graph) -> list[TxSpec]:
    """Stream where exactly floor((1-f)*count) transactions per size bucket
    are deadline-free, f = cfg.deadline_fraction. Membership is randomized
    but deterministic per seed; all other transactions keep table deadlines.
    """
    base = generate(replace(cfg, deadline_fraction=1.0), graph)
    rng = random.Random(cfg.seed + 990001)
    strip: set[int] = set()
    for size in sorted(cfg.size_weights):
        bucket = [i for i, tx in enumerate(base) if tx.amount == size]
        k = int((1.0 - cfg.deadline_fraction) * len(bucket))
        if k:
            strip.update(rng.sample(bucket, k))
    return [replace(tx, deadline=None) if i in strip else tx for i, tx in enumerate(base)]


def dump_jsonl(txs: list[TxSpec], path: str) -> None:
    """Write one transaction per line for cross-protocol replay."""
    with open(path, "w") as f:
        for tx in txs:
            f.write(json.dumps(
                {"t": tx.t, "s": tx.sender, "r": tx.receiver, "amt": tx.amount, "ddl": tx.deadline}
            ))
            f.write("\n")


def load_jsonl(path: str) -> list[TxSpec]:
    txs = []
    with open(path) as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                txs.append(TxSpec(
                    t=float(rec["t"]), sender=int(rec["s"]), receiver=int(rec["r"]),
                    amount=int(rec["amt"]),
                    deadline=None if rec["ddl"] is None else float(rec["ddl"]),
                ))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: line {line_no}: {exc}") from exc
    return txs
