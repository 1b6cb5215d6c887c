"""Command-line experiment runner.

Examples::

    scanbench --policy pbm --streams 8 --pool-frac 0.4 --csv out.csv
    scanbench --policy all --sweep pool-frac=0.1,0.2,0.4,0.6,0.8,1.0 --csv sweep.csv
    scanbench --policy opt-replay --trace pbm.trace --capacity 100
"""

from __future__ import annotations

import argparse
import itertools
import sys

from .metrics import Metrics, summarize, write_csv
from .opt import opt_missed_pages, read_trace, write_trace
from .sim import POLICIES, SimDeadlock, run
from .workload import CONFIG_KEYS, ConfigError, RunConfig, apply_settings, load_config

POLICY_CHOICES = (*POLICIES, "opt-replay", "all")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scanbench", description=__doc__.split("\n\n")[0])
    p.add_argument("--config", help="key = value workload file")
    p.add_argument("--policy", choices=POLICY_CHOICES, help="default: all")
    p.add_argument("--streams", type=int)
    p.add_argument("--pool-frac", type=float, help="pool size as a fraction of touched pages")
    p.add_argument("--bandwidth", type=float, help="I/O bandwidth in bytes per second")
    p.add_argument("--seed", type=int)
    p.add_argument("--csv", help="write results here (and sharing series to <csv>.sharing.csv)")
    p.add_argument("--trace-out", help="write the page-reference trace of the run")
    p.add_argument("--trace", help="trace file to replay (opt-replay mode)")
    p.add_argument("--capacity", type=int, help="frames; replay capacity or fixed pool size")
    p.add_argument("--sweep", action="append", default=[], metavar="KEY=V1,V2,...",
                   help="repeatable; runs the cross product")
    p.add_argument("--check-invariants", action="store_true",
                   help="run PBM bucket checks after every refresh")
    return p


def parse_sweeps(items: list[str]) -> list[tuple[str, list[str]]]:
    out = []
    for item in items:
        if "=" not in item:
            raise ConfigError(f"sweep {item!r} is not KEY=V1,V2,...")
        key, values = item.split("=", 1)
        key = key.strip().replace("-", "_")
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown sweep key {key!r}")
        vals = [v for v in values.split(",") if v.strip()]
        if not vals:
            raise ConfigError(f"sweep {key} has no values")
        out.append((key, vals))
    return out


def sweep_points(sweeps) -> list[dict]:
    if not sweeps:
        return [{}]
    keys = [k for k, _ in sweeps]
    return [dict(zip(keys, combo)) for combo in itertools.product(*(v for _, v in sweeps))]


def _base_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    settings = {}
    for name in ("streams", "pool_frac", "bandwidth", "seed", "capacity"):
        value = getattr(args, name)
        if value is not None:
            settings[name] = value
    if args.policy:
        settings["policy"] = args.policy
    return apply_settings(cfg, settings)


def run_point(cfg: RunConfig, trace_out: str | None, check: bool) -> tuple[list[Metrics], list[str]]:
    policies = list(POLICIES) if cfg.policy == "all" else [cfg.policy]
    results, problems = [], []
    pbm_trace = None
    for name in policies:
        res = run(cfg, name, check_invariants=check)
        results.append(res.metrics)
        problems.extend(f"{name}: {v}" for v in res.violations)
        if name == "pbm":
            pbm_trace = (res.trace, res.capacity)
        if trace_out and (cfg.policy != "all" or name == "pbm"):
            write_trace(res.trace, trace_out)
    if cfg.policy == "all" and pbm_trace is not None:
        trace, capacity = pbm_trace
        missed = opt_missed_pages(trace, capacity)
        base = results[0]
        table = cfg.workload.table()
        results.append(Metrics("opt", base.streams, base.pool_frac, base.bandwidth_bps, base.seed,
                               len(missed), sum(table.page_size(p) for p in missed),
                               capacity=capacity, footprint=base.footprint))
    return results, problems


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.policy == "opt-replay":
            if not args.trace or args.capacity is None:
                parser.error("opt-replay needs --trace and --capacity")
            if args.capacity < 1:
                parser.error("--capacity must be >= 1")
            misses = len(opt_missed_pages(read_trace(args.trace), args.capacity))
            print(f"opt_misses {misses}")
            return 0
        base = _base_config(args)
        points = sweep_points(parse_sweeps(args.sweep))
        configs = [apply_settings(base, point) for point in points]
    except (ConfigError, OSError, ValueError) as exc:
        parser.error(str(exc))
    if any(c.policy == "opt-replay" for c in configs):
        parser.error("opt-replay cannot be combined with a sweep or config policy")

    all_metrics, problems = [], []
    for i, cfg in enumerate(configs):
        trace_out = args.trace_out
        if trace_out and len(configs) > 1:
            trace_out = f"{trace_out}.{i}"
        try:
            metrics, issues = run_point(cfg, trace_out, args.check_invariants)
        except SimDeadlock as exc:
            print(f"deadlock: {exc}", file=sys.stderr)
            return 1
        all_metrics.extend(metrics)
        problems.extend(issues)
    if args.csv:
        write_csv(all_metrics, args.csv)
    sys.stdout.write(summarize(all_metrics))
    for p in problems:
        print(f"invariant violation: {p}", file=sys.stderr)
    return 1 if problems else 0


if __name__ == "__main__":
    sys.exit(main())
