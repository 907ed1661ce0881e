"""Command-line entry point: experiment runs, comparisons, and sweeps.

Subcommands:
  run          simulate one protocol over a capacity sweep x seeds
  compare      run dpcn/spider/waterfilling on identical workload dumps
  sweep-split  force fixed split sizes and record small-transaction cost
  gen-topology write a sampled topology file
  gen-workload write a transaction stream dump

Every results row carries the seed and config hash; reruns with the same
pair reproduce output files byte-for-byte. Independent runs parallelize
across processes, capped by the PCNSIM_THREADS environment variable.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import engine, metrics, workload as workload_mod
from .config import (ConfigError, RunConfig, build_graph, build_settings,
                     build_workload, config_hash, load_config, topology_label)
from .metrics import Filter, latency_stats, measurement_window, success_ratio, success_volume
from .topology import TopologyError, save_topology


def _max_workers(n_jobs: int) -> int:
    env = os.environ.get("PCNSIM_THREADS", "").strip()
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, n_jobs))


def _sim_job(args):
    """Worker for process pools: one simulation, deterministic per inputs."""
    cfg, protocol, mean, seed, wl, forced_split = args
    graph = build_graph(cfg, mean, seed)
    if wl is None:
        wl = build_workload(cfg, graph, seed)
    settings = build_settings(cfg, seed, protocol=protocol)
    if forced_split is not None:
        settings.dpcn.forced_split_size = forced_split
    log = engine.run(settings, graph, wl, horizon=cfg.workload["horizon"])
    return (protocol, mean, seed, forced_split), log


def _run_all(jobs: list) -> dict:
    workers = _max_workers(len(jobs))
    results = {}
    if workers == 1 or len(jobs) == 1:
        for job in jobs:
            key, log = _sim_job(job)
            results[key] = log
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for key, log in pool.map(_sim_job, jobs):
                results[key] = log
    return results


def _agg_row(log, cfg: RunConfig, label: str, mean: float, seed: int,
             filter_name: str, flt: Filter) -> dict:
    selected = [r for r in log.transactions if flt.matches(r)]
    if selected:
        ratio = success_ratio(log, flt)
        volume = success_volume(log, flt)
        lat = latency_stats(log, flt)
        mean_lat = None if lat["n"] == 0 else lat["mean"]
        p95_lat = None if lat["n"] == 0 else lat["p95"]
    else:
        ratio, volume, mean_lat, p95_lat = 0.0, 0.0, None, None
    return {
        "protocol": log.protocol, "topology": label, "mean_channel": mean, "seed": seed,
        "filter": filter_name, "success_ratio": ratio, "success_volume": volume,
        "mean_latency_s": mean_lat, "p95_latency_s": p95_lat, "n_tx": len(selected),
    }


def _breakdown_filters(cfg: RunConfig) -> list[tuple[str, Filter]]:
    window = measurement_window(cfg.workload["horizon"])
    out = [
        ("deadline", Filter(has_deadline=True, window=window)),
        ("no_deadline", Filter(has_deadline=False, window=window)),
    ]
    for size in sorted(cfg.workload["size_weights"]):
        out.append((f"size={size}", Filter(sizes=frozenset([size]), window=window)))
    return out


def _per_tx_path(outdir: str, label: str, protocol: str, mean: float, seed: int) -> str:
    return os.path.join(outdir, f"per_tx_{label}_{protocol}_m{mean:g}_s{seed}.csv")


def _estimate_events(cfg: RunConfig, protocol: str) -> int:
    wl = cfg.workload
    n = cfg.topology.get("n", 106)
    total_tx = int(n * wl["rate_per_host"] * wl["horizon"])
    avg_amount = sum(s * w for s, w in wl["size_weights"].items())
    shards = max(1.0, avg_amount / cfg.params["mtu"]) if protocol != "dpcn" else 2.0
    return int(total_tx * shards * 8)


def _dry_run(cfg: RunConfig, command: str) -> int:
    resolved = cfg.canonical()
    resolved["output_dir"] = cfg.output_dir
    print(json.dumps(resolved, indent=2, sort_keys=True))
    protos = ["dpcn", "spider", "waterfilling"] if command == "compare" else [cfg.protocol]
    est = sum(_estimate_events(cfg, p) for p in protos)
    est *= len(cfg.seeds) * len(cfg.mean_channel)
    print(f"config_hash: {config_hash(cfg)}")
    print(f"estimated events: ~{est}")
    return 0


def cmd_run(cfg: RunConfig) -> int:
    outdir = cfg.output_dir
    os.makedirs(outdir, exist_ok=True)
    label = topology_label(cfg)
    jobs = [(cfg, cfg.protocol, mean, seed, None, None)
            for mean in cfg.mean_channel for seed in cfg.seeds]
    results = _run_all(jobs)
    window = measurement_window(cfg.workload["horizon"])
    rows = []
    for key in sorted(results):
        protocol, mean, seed, _ = key
        log = results[key]
        rows.append(_agg_row(log, cfg, label, mean, seed, "all", Filter(window=window)))
        metrics.write_per_tx(log, _per_tx_path(outdir, label, protocol, mean, seed))
    metrics.write_results(rows, os.path.join(outdir, "results.csv"))
    print(f"wrote {len(rows)} rows to {os.path.join(outdir, 'results.csv')}")
    return 0


def cmd_compare(cfg: RunConfig) -> int:
    outdir = cfg.output_dir
    os.makedirs(outdir, exist_ok=True)
    label = topology_label(cfg)
    meta = {"config_hash": config_hash(cfg), "workloads": {}}
    jobs = []
    for mean in cfg.mean_channel:
        for seed in cfg.seeds:
            graph = build_graph(cfg, mean, seed)
            wl = build_workload(cfg, graph, seed)
            wl_path = os.path.join(outdir, f"workload_m{mean:g}_s{seed}.jsonl")
            workload_mod.dump_jsonl(wl, wl_path)
            with open(wl_path, "rb") as f:
                meta["workloads"][f"m{mean:g}_s{seed}"] = hashlib.sha256(f.read()).hexdigest()
            shared = workload_mod.load_jsonl(wl_path)
            for protocol in ("dpcn", "spider", "waterfilling"):
                jobs.append((cfg, protocol, mean, seed, shared, None))
    results = _run_all(jobs)
    window = measurement_window(cfg.workload["horizon"])
    rows, brows = [], []
    for key in sorted(results):
        protocol, mean, seed, _ = key
        log = results[key]
        rows.append(_agg_row(log, cfg, label, mean, seed, "all", Filter(window=window)))
        for name, flt in _breakdown_filters(cfg):
            brows.append(_agg_row(log, cfg, label, mean, seed, name, flt))
        metrics.write_per_tx(log, _per_tx_path(outdir, label, protocol, mean, seed))
    metrics.write_results(rows, os.path.join(outdir, "comparison.csv"))
    metrics.write_results(brows, os.path.join(outdir, "breakdown.csv"))
    with open(os.path.join(outdir, "compare_meta.json"), "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"wrote {len(rows)} rows to {os.path.join(outdir, 'comparison.csv')}")
    return 0


def cmd_sweep_split(cfg: RunConfig) -> int:
    outdir = cfg.output_dir
    os.makedirs(outdir, exist_ok=True)
    label = topology_label(cfg)
    small_sizes = frozenset(s for s in cfg.workload["size_weights"] if s <= 30)
    jobs = []
    for mean in cfg.mean_channel:
        for seed in cfg.seeds:
            graph = build_graph(cfg, mean, seed)
            wl = build_workload(cfg, graph, seed)
            for size in cfg.split_sizes:
                jobs.append((cfg, "dpcn", mean, seed, wl, size))
    results = _run_all(jobs)
    window = measurement_window(cfg.workload["horizon"])
    small = Filter(sizes=small_sizes, window=window)
    rows = []
    for key in sorted(results, key=lambda k: (k[1], k[2], k[3])):
        _, mean, seed, size = key
        log = results[key]
        lat = latency_stats(log, small)
        rows.append({
            "protocol": "dpcn", "topology": label, "mean_channel": mean, "seed": seed,
            "split_size": size,
            "small_mean_latency_s": None if lat["n"] == 0 else lat["mean"],
            "small_p95_latency_s": None if lat["n"] == 0 else lat["p95"],
            "small_success_ratio": success_ratio(log, small),
            "success_volume": success_volume(log, Filter(window=window)),
            "n_small_tx": lat["n"],
        })
    columns = ["protocol", "topology", "mean_channel", "seed", "split_size",
               "small_mean_latency_s", "small_p95_latency_s", "small_success_ratio",
               "success_volume", "n_small_tx"]
    metrics._atomic_write_csv(os.path.join(outdir, "sweep_split.csv"), columns, rows)
    print(f"wrote {len(rows)} rows to {os.path.join(outdir, 'sweep_split.csv')}")
    return 0


def cmd_gen_topology(cfg: RunConfig) -> int:
    os.makedirs(cfg.output_dir, exist_ok=True)
    graph = build_graph(cfg, cfg.mean_channel[0], cfg.seeds[0])
    path = os.path.join(cfg.output_dir, "topology.json")
    save_topology(graph, path)
    print(f"wrote {graph.n} nodes / {len(graph.channels)} channels to {path}")
    return 0


def cmd_gen_workload(cfg: RunConfig) -> int:
    os.makedirs(cfg.output_dir, exist_ok=True)
    graph = build_graph(cfg, cfg.mean_channel[0], cfg.seeds[0])
    wl = build_workload(cfg, graph, cfg.seeds[0])
    path = os.path.join(cfg.output_dir, "workload.jsonl")
    workload_mod.dump_jsonl(wl, path)
    print(f"wrote {len(wl)} transactions to {path}")
    return 0


_COMMANDS = {
    "run": cmd_run,
    "compare": cmd_compare,
    "sweep-split": cmd_sweep_split,
    "gen-topology": cmd_gen_topology,
    "gen-workload": cmd_gen_workload,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcnsim",
        description="Deadline-aware payment channel network simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("-c", "--config", required=True, metavar="config.json")
        p.add_argument("-o", "--output", metavar="DIR", help="override output_dir")
        p.add_argument("--seeds", metavar="1,2,3", help="override config seeds")
        p.add_argument("--dry-run", action="store_true",
                       help="print resolved config and event estimate, then exit")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except FileNotFoundError:
        print(f"error: config file not found: {args.config}", file=sys.stderr)
        return 2
    except (ConfigError, TopologyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.output:
        cfg.output_dir = args.output
    if args.seeds:
        try:
            cfg.seeds = [int(s) for s in args.seeds.split(",") if s]
        except ValueError:
            print(f"error: bad --seeds value: {args.seeds}", file=sys.stderr)
            return 2
    if args.dry_run:
        return _dry_run(cfg, args.command)
    try:
        return _COMMANDS[args.command](cfg)
    except (TopologyError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
