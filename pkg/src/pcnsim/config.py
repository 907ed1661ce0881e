"""Run configuration: JSON schema, validation, and builders.

A config file fully describes an experiment: topology source, capacity
sweep, protocol parameters, workload shape, seeds, and output location.
Parsing is strict — unknown keys anywhere are rejected — and every
resolved value lands in the canonical dict used for the config hash, so a
results row can always be traced back to the exact inputs.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

from . import topology, workload
from .baselines import SpiderParams, WaterfillingParams
from .dpcn import DpcnParams
from .engine import RouterConfig, RunSettings

PROTOCOLS = ("dpcn", "spider", "waterfilling")

_TOPOLOGY_KEYS = {
    "watts_strogatz": {"kind", "n", "ring_degree", "rewire_prob"},
    "barabasi_albert": {"kind", "n", "attach_m"},
    "file": {"kind", "path"},
}
_PARAM_DEFAULTS = {
    "c": 8.0, "b": 0.8, "e": 0.3, "y": 0.3,
    "g": None, "beta": None,          # None: resolved by topology kind below
    "delta_ms": 200.0,
    "tx_threshold": 20,
    "fixed_split_nodl": 20,
    "k_paths": 8,
    "w_min": 1.0,
    "invert_urgency": False,
    "forced_split_size": None,
    "mtu": 1,
    "probe_retry_ms": 100.0,
}
_WORKLOAD_DEFAULTS = {
    "rate_per_host": 30.0,
    "receivers_per_host": 10,
    "size_weights": dict(workload.DEFAULT_SIZE_WEIGHTS),
    "deadline_table": dict(workload.DEFAULT_DEADLINE_TABLE),
    "deadline_fraction": 1.0,
    "stratified_mix": False,
    "horizon": 30.0,
}
_ROUTER_DEFAULTS = {"queue_capacity": 8000}
_DEBUG_DEFAULTS = {"check_conservation": False, "audit_unconfirmed": False, "trace_path": None}
_TOP_KEYS = {
    "protocol", "topology", "mean_channel", "capacity_dist", "params", "router",
    "workload", "global_timeout", "seeds", "output_dir", "split_sizes", "debug",
}


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass
class RunConfig:
    topology: dict
    protocol: str = "dpcn"
    mean_channel: list[float] = field(default_factory=lambda: [4000.0])
    capacity_dist: dict | None = None
    params: dict = field(default_factory=dict)
    router: dict = field(default_factory=dict)
    workload: dict = field(default_factory=dict)
    global_timeout: float = 5.0
    seeds: list[int] = field(default_factory=lambda: [1])
    output_dir: str = "results"
    split_sizes: list[int] = field(default_factory=lambda: [1, 5, 10, 25, 50])
    debug: dict = field(default_factory=dict)

    def canonical(self) -> dict:
        return {
            "protocol": self.protocol,
            "topology": self.topology,
            "mean_channel": self.mean_channel,
            "capacity_dist": self.capacity_dist,
            "params": self.params,
            "router": self.router,
            "workload": self.workload,
            "global_timeout": self.global_timeout,
            "seeds": self.seeds,
            "split_sizes": self.split_sizes,
        }


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(cfg.canonical(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _check_keys(obj: dict, allowed, ctx: str) -> None:
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise ConfigError(f"{ctx}: unknown keys {unknown}")


def _int_keyed(table: dict, ctx: str) -> dict[int, float]:
    out = {}
    for k, v in table.items():
        try:
            out[int(k)] = float(v)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{ctx}: bad entry {k!r}: {v!r}") from exc
    return out


def parse_config(data: dict, base_dir: str = ".") -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys(data, _TOP_KEYS, "config")

    topo = data.get("topology")
    if not isinstance(topo, dict) or "kind" not in topo:
        raise ConfigError("config: 'topology' object with a 'kind' is required")
    kind = topo["kind"]
    if kind not in _TOPOLOGY_KEYS:
        raise ConfigError(f"topology: unknown kind {kind!r}")
    _check_keys(topo, _TOPOLOGY_KEYS[kind], "topology")
    topo = dict(topo)
    if kind == "file":
        path = topo.get("path")
        if not isinstance(path, str):
            raise ConfigError("topology: file kind needs a 'path'")
        if not os.path.isabs(path):
            topo["path"] = os.path.normpath(os.path.join(base_dir, path))

    protocol = data.get("protocol", "dpcn")
    if protocol not in PROTOCOLS:
        raise ConfigError(f"config: protocol must be one of {PROTOCOLS}, got {protocol!r}")

    mean = data.get("mean_channel", [4000.0])
    if isinstance(mean, (int, float)):
        mean = [mean]
    if not isinstance(mean, list) or not mean or any(m <= 0 for m in mean):
        raise ConfigError("config: mean_channel must be a positive number or list of them")
    mean = [float(m) for m in mean]

    dist = data.get("capacity_dist")
    if dist is None:
        dist = {"kind": "proportional"} if kind == "file" else {"kind": "lognormal", "sigma": 1.0}
    if not isinstance(dist, dict) or dist.get("kind") not in ("lognormal", "constant", "proportional"):
        raise ConfigError(f"config: bad capacity_dist {dist!r}")

    params = dict(_PARAM_DEFAULTS)
    user_params = data.get("params", {})
    _check_keys(user_params, _PARAM_DEFAULTS, "params")
    params.update(user_params)
    if params["g"] is None:
        params["g"] = 7.0 if kind == "file" else 8.0
    if params["beta"] is None:
        params["beta"] = 0.8 if kind == "file" else 1.3

    router = dict(_ROUTER_DEFAULTS)
    user_router = data.get("router", {})
    _check_keys(user_router, _ROUTER_DEFAULTS, "router")
    router.update(user_router)

    wl = dict(_WORKLOAD_DEFAULTS)
    user_wl = data.get("workload", {})
    _check_keys(user_wl, _WORKLOAD_DEFAULTS, "workload")
    wl.update(user_wl)
    wl["size_weights"] = _int_keyed(wl["size_weights"], "workload.size_weights")
    wl["deadline_table"] = _int_keyed(wl["deadline_table"], "workload.deadline_table")

    debug = dict(_DEBUG_DEFAULTS)
    user_debug = data.get("debug", {})
    _check_keys(user_debug, _DEBUG_DEFAULTS, "debug")
    debug.update(user_debug)

    seeds = data.get("seeds", [1])
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("config: seeds must be a non-empty list of integers")

    split_sizes = data.get("split_sizes", [1, 5, 10, 25, 50])
    if not isinstance(split_sizes, list) or not all(isinstance(s, int) and s >= 1 for s in split_sizes):
        raise ConfigError("config: split_sizes must be a list of integers >= 1")

    cfg = RunConfig(
        topology=topo,
        protocol=protocol,
        mean_channel=mean,
        capacity_dist=dist,
        params=params,
        router=router,
        workload=wl,
        global_timeout=float(data.get("global_timeout", 5.0)),
        seeds=seeds,
        output_dir=data.get("output_dir", "results"),
        split_sizes=split_sizes,
        debug=debug,
    )
    # surface bad numbers now rather than mid-run
    build_settings(cfg, seed=0).router.validate()
    workload.WorkloadConfig(**_wl_kwargs(cfg), seed=0).validate()
    return cfg


def load_config(path: str) -> RunConfig:
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return parse_config(data, base_dir=os.path.dirname(os.path.abspath(path)))


def topology_label(cfg: RunConfig) -> str:
    topo = cfg.topology
    if topo["kind"] == "file":
        return os.path.splitext(os.path.basename(topo["path"]))[0]
    return f"{topo['kind']}_{topo['n']}"


def build_graph(cfg: RunConfig, mean_channel: float, seed: int) -> topology.Graph:
    topo = cfg.topology
    kind = topo["kind"]
    if kind == "watts_strogatz":
        g = topology.generate_watts_strogatz(
            topo["n"], topo["ring_degree"], topo.get("rewire_prob", 0.1), seed)
    elif kind == "barabasi_albert":
        g = topology.generate_barabasi_albert(topo["n"], topo["attach_m"], seed)
    else:
        g = topology.load_topology(topo["path"])
    return topology.assign_capacities(g, mean_channel, cfg.capacity_dist, seed)


def _wl_kwargs(cfg: RunConfig) -> dict:
    wl = cfg.workload
    return {
        "rate_per_host": wl["rate_per_host"],
        "receivers_per_host": wl["receivers_per_host"],
        "size_weights": wl["size_weights"],
        "deadline_table": wl["deadline_table"],
        "deadline_fraction": wl["deadline_fraction"],
        "horizon": wl["horizon"],
    }


def build_workload(cfg: RunConfig, graph: topology.Graph, seed: int) -> list[workload.TxSpec]:
    wcfg = workload.WorkloadConfig(**_wl_kwargs(cfg), seed=seed)
    if cfg.workload["stratified_mix"]:
        return workload.mixed_deadline_sample(wcfg, graph)
    return workload.generate(wcfg, graph)


def build_settings(cfg: RunConfig, seed: int, protocol: str | None = None) -> RunSettings:
    p = cfg.params
    return RunSettings(
        protocol=protocol or cfg.protocol,
        dpcn=DpcnParams(
            c=p["c"], b=p["b"], e=p["e"], y=p["y"], g=p["g"], beta=p["beta"],
            tx_threshold=p["tx_threshold"], fixed_split_nodl=p["fixed_split_nodl"],
            w_min=p["w_min"], invert_urgency=p["invert_urgency"],
            forced_split_size=p["forced_split_size"],
        ),
        spider=SpiderParams(mtu=p["mtu"], g=p["g"], beta=p["beta"], w_min=p["w_min"]),
        waterfilling=WaterfillingParams(mtu=p["mtu"], retry_interval=p["probe_retry_ms"] / 1000.0),
        router=RouterConfig(
            mark_threshold=p["delta_ms"] / 1000.0,
            queue_capacity=cfg.router["queue_capacity"],
        ),
        k_paths=p["k_paths"],
        global_timeout=cfg.global_timeout,
        seed=seed,
        check_conservation=cfg.debug["check_conservation"],
        audit_unconfirmed=cfg.debug["audit_unconfirmed"],
        trace_path=cfg.debug["trace_path"],
    )
