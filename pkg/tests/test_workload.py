import pytest
from hypothesis import given
from hypothesis import strategies as st

from scanbench.storage import TupleRange
from scanbench.workload import (ConfigError, IoModel, RunConfig, WorkloadSpec, apply_settings,
                                cpu_bound_stream_times, footprint, gen_microbenchmark, load_config,
                                parse_config, split_range)


def test_split_range_example():
    parts = split_range((0, 100), 8)
    assert [p.begin for p in parts] + [parts[-1].end] == [0, 12, 25, 37, 50, 62, 75, 87, 100]


def test_split_range_more_pieces_than_tuples():
    parts = split_range((10, 13), 5)
    assert len(parts) == 5
    assert sum(len(p) for p in parts) == 3


@given(st.integers(0, 10_000), st.integers(0, 10_000), st.integers(1, 64))
def test_split_range_partitions(a, length, n):
    parts = split_range((a, a + length), n)
    assert parts[0].begin == a and parts[-1].end == a + length
    assert all(x.end == y.begin for x, y in zip(parts, parts[1:]))
    sizes = [len(p) for p in parts]
    assert max(sizes) - min(sizes) <= 1


def test_load_time_rounds_up():
    io = IoModel(700e6)
    assert io.load_time(65_536) == 93_623
    assert io.load_time(0) == 1


def test_default_workload_shape():
    spec = WorkloadSpec()
    streams = gen_microbenchmark(spec)
    assert len(streams) == 8
    assert sum(len(s) for s in streams) == 128
    assert len({q.query_id for s in streams for q in s}) == 128
    n = spec.tuple_count
    for s in streams:
        for q in s:
            assert 0 <= q.rid_range.begin < q.rid_range.end <= n
            assert len(q.rid_range) == max(1, round(q.fraction * n))


def test_full_fraction_starts_at_zero():
    spec = WorkloadSpec(fractions=(1.0,), streams=3, queries_per_stream=4)
    for s in gen_microbenchmark(spec):
        for q in s:
            assert q.rid_range == TupleRange(0, spec.tuple_count)


def test_generation_is_deterministic():
    spec = WorkloadSpec(seed=7)
    assert gen_microbenchmark(spec) == gen_microbenchmark(spec)
    assert gen_microbenchmark(spec) != gen_microbenchmark(WorkloadSpec(seed=8))


def test_streams_independent_of_stream_count():
    few = gen_microbenchmark(WorkloadSpec(streams=2, seed=3))
    many = gen_microbenchmark(WorkloadSpec(streams=5, seed=3))
    assert [q.rid_range for q in few[1]] == [q.rid_range for q in many[1]]


def test_column_sets_alternate():
    streams = gen_microbenchmark(WorkloadSpec(streams=2, queries_per_stream=3))
    assert [q.columns for q in streams[0]] == [(0, 1), (0,), (0, 1)]
    assert [q.columns for q in streams[1]] == [(0,), (0, 1), (0,)]


def test_footprint_of_full_scan():
    spec = WorkloadSpec(streams=1, queries_per_stream=1, fractions=(1.0,))
    table = spec.table()
    fp = footprint(table, gen_microbenchmark(spec))
    assert len(fp) == table.n_pages(0) + table.n_pages(1)


def test_cpu_bound_times():
    spec = WorkloadSpec(streams=1, queries_per_stream=1, fractions=(1.0,), tuple_count=1600,
                        chunk_size=100, tuples_per_page=(100,), query_columns=((0,),))
    # 1600 tuples over 8 threads at 200k tuples/s each
    assert cpu_bound_stream_times(spec, gen_microbenchmark(spec)) == [1_000_000]


@pytest.mark.parametrize("kwargs", [dict(streams=0), dict(fractions=(0.0,)), dict(cpu_rate=0),
                                    dict(query_columns=((5,),)), dict(parallelism=0)])
def test_bad_workloads_rejected(kwargs):
    with pytest.raises(ConfigError):
        WorkloadSpec(**kwargs)


def test_parse_config():
    cfg = parse_config("""
        # small run
        streams = 3
        fractions = 0.1, 0.5
        query-columns = 0,1;1
        bandwidth = 1e9
        pool_frac = 0.25
        in_order = yes
    """)
    assert cfg.workload.streams == 3
    assert cfg.workload.fractions == (0.1, 0.5)
    assert cfg.workload.query_columns == ((0, 1), (1,))
    assert cfg.workload.in_order is True
    assert cfg.io.bandwidth == 1e9
    assert cfg.pool_frac == 0.25


@pytest.mark.parametrize("text", ["colour = blue", "streams = many", "streams", "pool_frac = 1.5",
                                  "bandwidth = 0"])
def test_parse_config_rejects(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_load_config_and_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("seed = 11\nqueries_per_stream = 2\n")
    cfg = load_config(path)
    assert cfg.workload.seed == 11
    cfg = apply_settings(cfg, {"seed": "12", "pool-frac": 0.5})
    assert (cfg.workload.seed, cfg.pool_frac, cfg.workload.queries_per_stream) == (12, 0.5, 2)
    assert RunConfig().policy == "all"
