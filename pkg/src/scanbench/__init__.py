"""Buffer management policies for concurrent scans, and a simulator to compare them."""

from .bufferpool import BufferPool
from .delta import DeltaList, Delete, Insert
from .opt import Trace, brute_force_min_misses, lru_replay, opt_replay
from .policies import ActiveBufferManager, LRUPolicy, PBMPolicy
from .sim import run
from .storage import ChunkId, PageId, TableDef, TupleRange, make_table
from .workload import IoModel, RunConfig, WorkloadSpec, gen_microbenchmark, split_range

__all__ = [
    "ActiveBufferManager", "BufferPool", "ChunkId", "Delete", "DeltaList", "Insert", "IoModel",
    "LRUPolicy", "PBMPolicy", "PageId", "RunConfig", "TableDef", "Trace", "TupleRange",
    "WorkloadSpec", "brute_force_min_misses", "gen_microbenchmark", "lru_replay", "make_table",
    "opt_replay", "run", "split_range",
]
