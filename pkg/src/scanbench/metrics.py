"""Run measurements, sharing-potential sampling and CSV output."""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

NS_PER_S = 1_000_000_000

CSV_HEADER = ["policy", "streams", "pool_frac", "bandwidth_bps", "seed",
              "io_pages", "io_bytes", "avg_stream_s", "max_stream_s"]
SHARING_HEADER = ["time_ns", "k1", "k2", "k3", "k4plus"]


class SharingSample(NamedTuple):
    time_ns: int
    k1: int
    k2: int
    k3: int
    k4plus: int


@dataclass
class Metrics:
    policy: str
    streams: int
    pool_frac: float
    bandwidth_bps: float
    seed: int
    io_pages_loaded: int = 0
    io_bytes: int = 0
    stream_times: list = field(default_factory=list)  # ns; empty for replayed rows
    sharing_samples: list = field(default_factory=list)
    capacity: int = 0
    footprint: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def avg_stream_s(self) -> float | None:
        if not self.stream_times:
            return None
        return sum(self.stream_times) / len(self.stream_times) / NS_PER_S

    @property
    def max_stream_s(self) -> float | None:
        if not self.stream_times:
            return None
        return max(self.stream_times) / NS_PER_S


def sample_sharing_potential(wanted: Iterable[Iterable], now: int) -> SharingSample:
    """Histogram pages by how many live scans still want them.

    ``wanted`` holds one collection of pages per live scan.
    """
    counts = Counter()
    for pages in wanted:
        counts.update(set(pages))
    bins = [0, 0, 0, 0]
    for k in counts.values():
        bins[min(k, 4) - 1] += 1
    return SharingSample(now, *bins)


def _fmt_float(x) -> str:
    return "" if x is None else f"{x:.9f}"


def _row(m: Metrics) -> list[str]:
    return [m.policy, str(m.streams), _fmt_float(m.pool_frac), _fmt_float(m.bandwidth_bps),
            str(m.seed), str(m.io_pages_loaded), str(m.io_bytes),
            _fmt_float(m.avg_stream_s), _fmt_float(m.max_stream_s)]


def render_csv(metrics: Iterable[Metrics]) -> tuple[str, str]:
    """Main table and sharing series as strings. Each run's series restarts at time 0."""
    main, sharing = io.StringIO(), io.StringIO()
    w = csv.writer(main, lineterminator="\n")
    ws = csv.writer(sharing, lineterminator="\n")
    w.writerow(CSV_HEADER)
    ws.writerow(SHARING_HEADER)
    for m in metrics:
        w.writerow(_row(m))
        for s in m.sharing_samples:
            ws.writerow([str(v) for v in s])
    return main.getvalue(), sharing.getvalue()


def write_csv(metrics: Iterable[Metrics] | Metrics, path) -> None:
    if isinstance(metrics, Metrics):
        metrics = [metrics]
    main, sharing = render_csv(list(metrics))
    path = Path(path)
    path.write_text(main)
    Path(f"{path}.sharing.csv").write_text(sharing)


class CsvRow(NamedTuple):
    policy: str
    streams: int
    pool_frac: float
    bandwidth_bps: float
    seed: int
    io_pages: int
    io_bytes: int
    avg_stream_s: float | None
    max_stream_s: float | None


def _opt_float(s: str) -> float | None:
    return None if s == "" else float(s)


def read_csv(path) -> list[CsvRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        return [CsvRow(r[0], int(r[1]), float(r[2]), float(r[3]), int(r[4]), int(r[5]), int(r[6]),
                       _opt_float(r[7]), _opt_float(r[8])) for r in reader]


def read_sharing_csv(path) -> list[SharingSample]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SHARING_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        return [SharingSample(*map(int, r)) for r in reader]


def summarize(metrics: Iterable[Metrics]) -> str:
    """Per-policy I/O volume and stream time, with ratios against LRU when present."""
    metrics = list(metrics)
    groups: dict = {}
    for m in metrics:
        key = (m.streams, m.pool_frac, m.bandwidth_bps, m.seed)
        groups.setdefault(key, []).append(m)
    lines = []
    for (streams, frac, bw, seed), runs in groups.items():
        lines.append(f"streams={streams} pool_frac={frac:g} bandwidth={bw:g} seed={seed}")
        base = next((m for m in runs if m.policy == "lru"), None)
        if base is None:
            lines.append("  (no LRU baseline: ratios omitted)")
        for m in runs:
            t = m.avg_stream_s
            text = f"  {m.policy:<10} io_pages={m.io_pages_loaded:>8} io_bytes={m.io_bytes:>12}"
            text += f" avg_stream_s={t:.3f}" if t is not None else " avg_stream_s=-"
            if base is not None:
                text += f" io/lru={m.io_pages_loaded / base.io_pages_loaded:.3f}" if base.io_pages_loaded else ""
                if t is not None and base.avg_stream_s:
                    text += f" time/lru={t / base.avg_stream_s:.3f}"
            lines.append(text)
    return "\n".join(lines) + ("\n" if lines else "")
