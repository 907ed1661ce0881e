"""Outcome aggregation: success ratio, success volume, latency, CSV output.

A ``MetricsLog`` is the immutable result of one run: one record per
generated transaction plus one record per shard. Success ratio counts
whole pre-split transactions; success volume counts shard fund-units, so
the two can diverge when large transactions die on one small shard.
"""

from __future__ import annotations

import csv
import os
import tempfile
import warnings
from dataclasses import dataclass, field

import numpy as np

RESULTS_COLUMNS = [
    "protocol", "topology", "mean_channel", "seed", "filter",
    "success_ratio", "success_volume", "mean_latency_s", "p95_latency_s", "n_tx",
]
PER_TX_COLUMNS = ["tx_id", "size", "deadline", "status", "latency_s", "n_shards"]
SHARD_COLUMNS = ["parent_id", "amount", "path_index", "succeeded", "marked"]


@dataclass(frozen=True)
class TxRecord:
    tx_id: int
    size: int
    deadline: float | None
    status: str                  # "succeeded" | "failed"
    latency_s: float | None
    n_shards: int
    created_at: float


@dataclass(frozen=True)
class ShardRecord:
    parent_id: int
    amount: int
    path_index: int
    succeeded: bool
    marked: bool


@dataclass(frozen=True)
class MetricsLog:
    protocol: str
    seed: int
    horizon: float
    transactions: tuple[TxRecord, ...]
    shards: tuple[ShardRecord, ...]
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Filter:
    """Transaction selector: size buckets, deadline presence, creation window."""

    sizes: frozenset[int] | None = None
    has_deadline: bool | None = None
    window: tuple[float, float] | None = None

    def matches(self, rec: TxRecord) -> bool:
        if self.sizes is not None and rec.size not in self.sizes:
            return False
        if self.has_deadline is not None and (rec.deadline is not None) != self.has_deadline:
            return False
        if self.window is not None and not (self.window[0] <= rec.created_at <= self.window[1]):
            return False
        return True


def measurement_window(horizon: float, trim: float = 0.10) -> tuple[float, float]:
    """Symmetric warm-up/cool-down trim: keep the middle (1 - 2*trim) span."""
    return (trim * horizon, (1.0 - trim) * horizon)


def _selected(log: MetricsLog, flt: Filter | None) -> list[TxRecord]:
    if flt is None:
        return list(log.transactions)
    return [rec for rec in log.transactions if flt.matches(rec)]


def success_ratio(log: MetricsLog, flt: Filter | None = None) -> float:
    """Completed transactions over generated transactions (pre-split count)."""
    txs = _selected(log, flt)
    if not txs:
        warnings.warn("success_ratio over empty selection; returning 0", stacklevel=2)
        return 0.0
    return sum(1 for r in txs if r.status == "succeeded") / len(txs)


def success_volume(log: MetricsLog, flt: Filter | None = None) -> float:
    """Fund-units of completed shards over fund-units of all shards."""
    wanted = {r.tx_id for r in _selected(log, flt)}
    total = 0
    ok = 0
    for sh in log.shards:
        if sh.parent_id in wanted:
            total += sh.amount
            if sh.succeeded:
                ok += sh.amount
    if total == 0:
        warnings.warn("success_volume over empty selection; returning 0", stacklevel=2)
        return 0.0
    return ok / total


def latency_stats(log: MetricsLog, flt: Filter | None = None) -> dict[str, float]:
    """Mean/median/p95 completion latency over succeeded transactions."""
    lats = [r.latency_s for r in _selected(log, flt)
            if r.status == "succeeded" and r.latency_s is not None]
    if not lats:
        return {"mean": float("nan"), "p50": float("nan"), "p95": float("nan"), "n": 0}
    arr = np.asarray(lats, dtype=float)
    return {
        "mean": float(arr.mean()),
        "p50": float(np.percentile(arr, 50)),
        "p95": float(np.percentile(arr, 95)),
        "n": len(lats),
    }


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)  # shortest round-trip form; exact on reload
    return str(value)


def _atomic_write_csv(path: str, columns: list[str], rows: list[dict]) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_fmt(row.get(c)) for c in columns])
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise OSError(f"writing {path}: {exc}") from exc


def write_results(rows: list[dict], path: str) -> None:
    """Aggregate results CSV (atomic: temp file + rename)."""
    _atomic_write_csv(path, RESULTS_COLUMNS, rows)


def read_results(path: str) -> list[dict]:
    out = []
    with open(path, newline="") as f:
        for rec in csv.DictReader(f):
            row = dict(rec)
            for k in ("success_ratio", "success_volume", "mean_latency_s", "p95_latency_s",
                      "mean_channel"):
                if row.get(k):
                    row[k] = float(row[k])
            for k in ("seed", "n_tx"):
                if row.get(k):
                    row[k] = int(row[k])
            out.append(row)
    return out


def write_per_tx(log: MetricsLog, path: str) -> None:
    rows = [
        {"tx_id": r.tx_id, "size": r.size, "deadline": r.deadline, "status": r.status,
         "latency_s": r.latency_s, "n_shards": r.n_shards}
        for r in log.transactions
    ]
    _atomic_write_csv(path, PER_TX_COLUMNS, rows)


def read_per_tx(path: str) -> list[dict]:
    out = []
    with open(path, newline="") as f:
        for rec in csv.DictReader(f):
            out.append({
                "tx_id": int(rec["tx_id"]),
                "size": int(rec["size"]),
                "deadline": float(rec["deadline"]) if rec["deadline"] else None,
                "status": rec["status"],
                "latency_s": float(rec["latency_s"]) if rec["latency_s"] else None,
                "n_shards": int(rec["n_shards"]),
            })
    return out


def write_shards(log: MetricsLog, path: str) -> None:
    rows = [
        {"parent_id": s.parent_id, "amount": s.amount, "path_index": s.path_index,
         "succeeded": s.succeeded, "marked": s.marked}
        for s in log.shards
    ]
    _atomic_write_csv(path, SHARD_COLUMNS, rows)
