"""End-to-end acceptance checks. Each test prints one PASS/FAIL line."""

import filecmp
import statistics
import time

import numpy as np
import pytest

from scanbench.cli import main
from scanbench.delta import Delete, DeltaList, Insert, trim_delivered
from scanbench.opt import brute_force_min_misses, lru_replay, opt_replay
from scanbench.policies.cscans import recompute_shared_prefix
from scanbench.sim import POLICIES, Simulation, run
from scanbench.storage import PageId, Snapshot, TupleRange
from scanbench.workload import IoModel, RunConfig, WorkloadSpec
from oracles import merged_keys, rids_of_sid_range

# desk-scale microbenchmark: the default table and 8 streams, shorter query batches
BENCH = WorkloadSpec(queries_per_stream=4)


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} ({detail})")
        return ok
    return emit


def quiet_run(cfg, policy, **kw):
    kw.setdefault("record_trace", False)
    kw.setdefault("sample_sharing", False)
    return run(cfg, policy, **kw)


def test_criterion_1_opt_matches_brute_force(report):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    bad = 0
    cases = 300
    for _ in range(cases):
        n = int(rng.integers(0, 21))
        cap = int(rng.integers(1, 5))
        trace = [PageId(0, 0, int(p)) for p in rng.integers(0, int(rng.integers(1, 9)), size=n)]
        bad += opt_replay(trace, cap) != brute_force_min_misses(trace, cap)
    elapsed = time.perf_counter() - start
    ok = bad == 0 and elapsed < 10
    assert report(1, ok, f"{cases} traces, {bad} mismatches, {elapsed:.1f}s")


def test_criterion_2_opt_dominates(report):
    fracs = (0.1, 0.2, 0.4, 0.6)
    worst = []
    for seed in range(20):
        wl = WorkloadSpec(queries_per_stream=2, seed=seed)
        res = run(RunConfig(workload=wl, pool_frac=fracs[seed % 4]), "pbm", sample_sharing=False)
        opt = opt_replay(res.trace, res.capacity)
        lru = lru_replay(res.trace, res.capacity)
        worst.append((opt <= res.metrics.io_pages_loaded and opt <= lru, opt, res.metrics.io_pages_loaded, lru))
    ok = all(w[0] for w in worst)
    ratio = max(w[1] / w[2] for w in worst)
    assert report(2, ok, f"20 runs, max opt/pbm = {ratio:.3f}, failures = {sum(not w[0] for w in worst)}")


def test_criterion_3_full_pool_loads_footprint(report):
    got = {}
    for policy in POLICIES:
        res = quiet_run(RunConfig(workload=BENCH, pool_frac=1.0), policy)
        got[policy] = (res.metrics.io_pages_loaded, res.footprint)
    ok = all(io == fp for io, fp in got.values())
    assert report(3, ok, ", ".join(f"{p} {io}/{fp}" for p, (io, fp) in got.items()))


def test_criterion_4_single_stream_equivalence(report):
    rows = []
    for seed in range(3):
        wl = WorkloadSpec(streams=1, seed=seed)
        io = {p: quiet_run(RunConfig(workload=wl, pool_frac=0.4), p).metrics.io_pages_loaded for p in POLICIES}
        rows.append(io)
    ok = all(len(set(io.values())) == 1 for io in rows)
    detail = "; ".join("/".join(str(io[p]) for p in POLICIES) for io in rows)
    assert report(4, ok, f"1 stream x 16 queries, lru/pbm/cscans io per seed: {detail}")


def test_criterion_5_microbenchmark_trend(report):
    start = time.perf_counter()
    order_ok, pbm_lru, low_ok = 0, [], 0
    for seed in range(10):
        wl = WorkloadSpec(queries_per_stream=4, fractions=(0.5,), seed=seed)
        io = {p: quiet_run(RunConfig(workload=wl, pool_frac=0.4), p).metrics.io_pages_loaded for p in POLICIES}
        order_ok += io["cscans"] <= io["pbm"] < io["lru"]
        pbm_lru.append(io["pbm"] / io["lru"])
        low = {p: quiet_run(RunConfig(workload=wl, pool_frac=0.1), p).metrics.io_pages_loaded
               for p in ("pbm", "cscans")}
        low_ok += low["cscans"] < low["pbm"]
    elapsed = time.perf_counter() - start
    mean = statistics.mean(pbm_lru)
    ok = order_ok >= 9 and mean < 0.9 and low_ok >= 8 and elapsed < 120
    assert report(5, ok, f"order held {order_ok}/10, mean pbm/lru {mean:.3f}, "
                         f"cscans<pbm at 10% {low_ok}/10, {elapsed:.0f}s")


def test_criterion_6_cpu_bound_convergence(report):
    group = 16
    table = {}
    for k in range(6):
        bw = 700e6 * 4 ** k
        for policy in POLICIES:
            m = quiet_run(RunConfig(workload=BENCH, io=IoModel(bw), pool_frac=0.4), policy).metrics
            bound = statistics.mean(m.extra["cpu_bound_ns"])
            table[bw, policy] = (statistics.mean(m.stream_times) / bound, m.avg_stream_s, m.io_pages_loaded)
    bws = sorted({bw for bw, _ in table})
    cpu_bound = [bw for bw in bws if all(table[bw, p][0] <= 1.05 for p in POLICIES)]
    converged = bool(cpu_bound) and cpu_bound[-1] == bws[-1] and all(
        max(table[bw, p][1] for p in POLICIES) <= 1.05 * min(table[bw, p][1] for p in POLICIES)
        for bw in cpu_bound)
    drift = {p: max(abs(table[bw, p][2] - table[bws[-1], p][2]) for bw in cpu_bound) for p in POLICIES}
    flat = all(d <= group for d in drift.values())
    ok = converged and flat
    first = f"{cpu_bound[0] / 1e9:.1f} GB/s" if cpu_bound else "never"
    assert report(6, ok, f"CPU-bound from {first}, times converged={converged}, "
                         f"io drift in pages " + ", ".join(f"{p} {d}" for p, d in drift.items()))


def test_criterion_7_pbm_invariants(report):
    violations, max_touches, leaks = 0, 0, 0
    for seed in range(10):
        wl = WorkloadSpec(queries_per_stream=2, seed=seed)
        sim = Simulation(RunConfig(workload=wl, pool_frac=(0.1, 0.4)[seed % 2]), "pbm",
                         record_trace=False, sample_sharing=False, check_invariants=True)
        res = sim.run()
        violations += len(res.violations)
        tl = sim.policy.timeline
        max_touches = max(max_touches, tl.max_touches)
        in_buckets = sum(len(b) for b in tl.buckets) + len(tl.not_requested)
        leaks += in_buckets != len(sim.pool.frames)
    ok = violations == 0 and max_touches <= 8 and leaks == 0
    assert report(7, ok, f"10 runs, {violations} violations, max list touches per op {max_touches}, "
                         f"{leaks} membership leaks")


def test_criterion_8_no_duplicate_delivery(report):
    rng = np.random.default_rng(8)
    bad = 0
    cases = 600
    for _ in range(cases):
        n = int(rng.integers(1, 60))
        dels = sorted(set(int(x) for x in rng.integers(0, n, size=int(rng.integers(0, n)))))
        ins = [Insert(int(s), int(c)) for s, c in zip(rng.integers(0, n + 1, size=int(rng.integers(0, 6))),
                                                     rng.integers(1, 4, size=6))]
        delta = DeltaList(n, tuple(Delete(s) for s in dels) + tuple(ins))
        keys = merged_keys(delta)
        vis = delta.visible_count
        if vis == 0:
            continue
        a = int(rng.integers(0, vis))
        b = int(rng.integers(a + 1, vis + 1))
        registered = TupleRange(a, b)
        chunk = int(rng.integers(1, 9))
        sid = delta.rid_range_to_sid_range(registered)
        idxs = list(range(sid.begin // chunk, -(-sid.end // chunk) or 1))
        rng.shuffle(idxs)
        done, got = (), []
        for i in idxs:
            lo, hi = i * chunk, min(n, (i + 1) * chunk)
            cand = delta.chunk_to_rid_range(TupleRange(lo, hi)).intersect(registered)
            oracle = rids_of_sid_range(keys, lo, hi, n) & set(range(a, b))
            if set(range(*cand)) != oracle:
                bad += 1
            pieces, done = trim_delivered(done, cand)
            got.extend(r for p in pieces for r in range(*p))
        bad += sorted(got) != list(range(a, b))
    assert report(8, bad == 0, f"{cases} cases, {bad} failures")


def test_criterion_9_shared_prefix_examples(report):
    def snap(pages):
        return Snapshot(0, 0, len(pages), {0: tuple(pages)})

    first = recompute_shared_prefix([snap(range(6)), snap((0, 1, 2, 3, 6, 7))])[0]
    second = recompute_shared_prefix([snap((0, 1, 2, 3, 6, 7))] * 3)[0]
    third = recompute_shared_prefix([snap(range(6)), snap((0, 1, 2, 3, 6, 7, 8, 9)),
                                     snap((0, 1, 2, 3, 6, 7, 10, 11))])[0]
    ok = first == (0, 1, 2, 3) and second == third == (0, 1, 2, 3, 6, 7)
    assert report(9, ok, f"prefixes {first}, {second}, {third}")


def test_criterion_10_determinism(report, tmp_path):
    outs = []
    for i in range(2):
        path = tmp_path / f"run{i}.csv"
        rc = main(["--policy", "all", "--streams", "4", "--seed", "5", "--pool-frac", "0.3",
                   "--sweep", "queries_per_stream=2", "--csv", str(path)])
        assert rc == 0
        outs.append(path)
    same = filecmp.cmp(outs[0], outs[1], shallow=False) and filecmp.cmp(
        f"{outs[0]}.sharing.csv", f"{outs[1]}.sharing.csv", shallow=False)
    assert report(10, same, "two identical 'all' runs, main and sharing CSV compared byte for byte")
