"""Workload description, microbenchmark generator and the key=value config format."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .storage import TableDef, TupleRange, make_table

NS_PER_S = 1_000_000_000
FRACTION_SET = (0.01, 0.1, 0.5, 1.0)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class IoModel:
    bandwidth: float = 700e6  # bytes per second, one FIFO channel

    def load_time(self, nbytes: int) -> int:
        return max(1, math.ceil(nbytes * NS_PER_S / self.bandwidth))


@dataclass(frozen=True)
class WorkloadSpec:
    streams: int = 8
    queries_per_stream: int = 16
    fractions: tuple = FRACTION_SET
    seed: int = 0
    cpu_rate: float = 200_000.0
    parallelism: int = 8
    tuple_count: int = 256 * 4096
    chunk_size: int = 4096
    tuples_per_page: tuple = (512, 2048)
    page_size: int = 65_536
    # column sets alternate between streams and queries (Q1-like, Q6-like)
    query_columns: tuple = ((0, 1), (0,))
    in_order: bool = False

    def __post_init__(self):
        if self.streams < 1 or self.queries_per_stream < 0:
            raise ConfigError("streams must be >= 1 and queries_per_stream >= 0")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.cpu_rate <= 0:
            raise ConfigError("cpu_rate must be positive")
        if not self.fractions or any(not 0 < f <= 1 for f in self.fractions):
            raise ConfigError("fractions must lie in (0, 1]")
        ncols = len(self.tuples_per_page)
        for cols in self.query_columns:
            if not cols or any(not 0 <= c < ncols for c in cols):
                raise ConfigError(f"query column set {cols} does not fit {ncols} columns")

    def table(self) -> TableDef:
        return make_table(self.tuple_count, self.tuples_per_page, self.chunk_size, self.page_size)


class QuerySpec(NamedTuple):
    query_id: int
    stream_id: int
    columns: tuple
    rid_range: TupleRange
    fraction: float
    in_order: bool = False


def split_range(rng, n: int) -> list[TupleRange]:
    """Split ``[a, b)`` into ``n`` pieces with boundaries ``a + floor((b - a) * i / n)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    a, b = rng
    bounds = [a + (b - a) * i // n for i in range(n + 1)]
    return [TupleRange(lo, hi) for lo, hi in zip(bounds, bounds[1:])]


def gen_microbenchmark(spec: WorkloadSpec) -> list[list[QuerySpec]]:
    n = spec.tuple_count
    out = []
    qid = 0
    for s in range(spec.streams):
        rng = np.random.default_rng([spec.seed, s])
        queries = []
        for j in range(spec.queries_per_stream):
            frac = spec.fractions[int(rng.integers(len(spec.fractions)))]
            length = min(n, max(1, round(frac * n)))
            start = int(rng.integers(0, n - length + 1))
            cols = spec.query_columns[(s + j) % len(spec.query_columns)]
            queries.append(QuerySpec(qid, s, tuple(cols), TupleRange(start, start + length),
                                     frac, spec.in_order))
            qid += 1
        out.append(queries)
    return out


def footprint(table: TableDef, streams) -> set:
    """Distinct pages touched by all queries."""
    pages = set()
    for queries in streams:
        for q in queries:
            for col in q.columns:
                pages.update(table.pages_for_range(col, q.rid_range))
    return pages


def cpu_bound_stream_times(spec: WorkloadSpec, streams) -> list[int]:
    """Stream durations in ns if I/O were free: per query, its slowest sub-scan."""
    out = []
    for queries in streams:
        total = 0
        for q in queries:
            longest = max(len(r) for r in split_range(q.rid_range, spec.parallelism))
            total += math.ceil(longest * NS_PER_S / spec.cpu_rate)
        out.append(total)
    return out


# -- config files --------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    """Everything one simulator run needs besides the policy name."""

    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    io: IoModel = field(default_factory=IoModel)
    pool_frac: float = 0.4
    capacity: int | None = None
    time_slice: int = 100_000_000
    prefetch_depth: int = 1
    policy: str = "all"


_WORKLOAD_KEYS = {f.name for f in fields(WorkloadSpec)}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    try:
        if key == "fractions":
            return tuple(float(x) for x in raw.split(","))
        if key == "tuples_per_page":
            return tuple(int(x) for x in raw.split(","))
        if key == "query_columns":
            # "0,1;0" -> ((0, 1), (0,))
            return tuple(tuple(int(c) for c in part.split(",")) for part in raw.split(";"))
        if key == "in_order":
            if raw.lower() in ("1", "true", "yes"):
                return True
            if raw.lower() in ("0", "false", "no"):
                return False
            raise ValueError(raw)
        if key in ("cpu_rate", "bandwidth", "pool_frac"):
            return float(raw)
        if key == "policy":
            return raw
        return int(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


CONFIG_KEYS = _WORKLOAD_KEYS | {"bandwidth", "pool_frac", "capacity", "time_slice", "prefetch_depth", "policy"}


def apply_settings(cfg: RunConfig, settings: dict) -> RunConfig:
    """Return ``cfg`` with ``settings`` (key -> raw string or value) applied."""
    wl, other = {}, {}
    for key, value in settings.items():
        key = key.strip().replace("-", "_")
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(value, str):
            value = _parse_value(key, value)
        (wl if key in _WORKLOAD_KEYS else other)[key] = value
    workload = replace(cfg.workload, **wl) if wl else cfg.workload
    io = IoModel(other.pop("bandwidth")) if "bandwidth" in other else cfg.io
    if io.bandwidth <= 0:
        raise ConfigError("bandwidth must be positive")
    out = replace(cfg, workload=workload, io=io, **other)
    if not 0 < out.pool_frac <= 1 and out.capacity is None:
        raise ConfigError("pool_frac must lie in (0, 1]")
    return out


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    settings = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        key, value = line.split("=", 1)
        settings[key.strip()] = value
    return apply_settings(base or RunConfig(), settings)


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())
