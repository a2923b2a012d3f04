import random

import pytest
from hypothesis import given, settings, strategies as st

from coresim import golden, inorder, ooo
from coresim.asm import Assembler
from coresim.config import preset
from coresim.memhier import (Cache, CacheConfig, Indexing, Level, MemConfig, MemoryHierarchy,
                             UnalignedLineCrossing)
from coresim.workloads import KernelSpec, generate


def vipt_config(**kw) -> MemConfig:
    m = MemConfig(**kw)
    m.dcache.indexing = Indexing.VIPT_SPECULATIVE
    return m


def test_default_geometry():
    c = CacheConfig()
    assert c.sets == 512 and c.index_bits_above_page == 3
    cache = Cache(CacheConfig(indexing=Indexing.VIPT_SPECULATIVE))
    assert cache.index_predictor.nbits == 3
    assert cache.set_index(0x7FC0) == 0x1FF  # bits [14:6]
    assert cache.set_index(0x8000) == 0
    assert Cache(CacheConfig()).index_predictor is None


def test_geometry_validation():
    with pytest.raises(ValueError):
        CacheConfig(size=3 * 64 * 2)
    with pytest.raises(ValueError):
        CacheConfig(line=48, size=48 * 4)
    with pytest.raises(ValueError):
        CacheConfig(replacement="fifo")


def test_fill_latencies():
    h = MemoryHierarchy()
    assert h.line_fill_latency(Level.LLC_HIT) == 8 + 7 == 15
    assert h.line_fill_latency(Level.MEMORY) == 10 + 7 == 17
    assert h.line_fill_latency(Level.L1_HIT) == 2


def test_response_latency_by_level():
    h = MemoryHierarchy()
    cold = h.access(0x10000, "load", 8, now=100)
    assert cold.level is Level.MEMORY and cold.latency == 17 + 2
    hit = h.access(0x10008, "load", 8, now=200)
    assert hit.level is Level.L1_HIT and hit.latency == 2
    # evict from L1 only: same set, three distinct tags in a 2-way set
    for k in (1, 2):
        h.access(0x10000 + k * 32 * 1024, "load", 8, now=300 + 50 * k)
    llc = h.access(0x10000, "load", 8, now=500)
    assert llc.level is Level.LLC_HIT and llc.latency == 15 + 2
    assert hit.latency < llc.latency < cold.latency
    ifetch = h.access(0x1000, "ifetch", 4, now=600)
    assert h.access(0x1004, "ifetch", 4, now=700).latency == 1 and ifetch.latency == 17 + 1


def test_line_crossing_rejected():
    h = MemoryHierarchy()
    with pytest.raises(UnalignedLineCrossing):
        h.access(0x103C, "load", 8)
    with pytest.raises(ValueError):
        h.access(0x1000, "prefetch", 8)


def test_streaming_reads_miss_one_in_eight():
    h = MemoryHierarchy()
    n = 4 * 65536 // 8
    t = 0
    for k in range(n):
        r = h.access(0x100000 + 8 * k, "load", 8, now=t)
        t = r.ready
    st = h.dcache.stats
    assert st.accesses == n and st.hits + st.misses == n
    assert abs(st.miss_rate - 0.125) <= 0.01


def test_warm_working_set_misses_below_one_percent():
    h = MemoryHierarchy()
    addrs = [0x200000 + 8 * k for k in range(48 * 1024 // 8)]
    for a in addrs:
        h.access(a, "load", 8)
    h.dcache.stats = type(h.dcache.stats)()
    for _ in range(2):
        for a in addrs:
            h.access(a, "store" if a % 64 == 0 else "load", 8)
    assert h.dcache.stats.miss_rate < 0.01


def test_vipt_alternation_hand_trace():
    # A has bits [14:12] = 0b000, B = 0b101; predictor starts at 0
    A, B = 0x100040, 0x105040
    h = MemoryHierarchy(vipt_config())
    seq = [A, B] * 10 + [B, B, A]
    retried = [h.access(a, "load", 8, now=1000 * i).retried for i, a in enumerate(seq)]
    # mismatch whenever bits differ from the previous access' bits
    expected = [False] + [seq[i] != seq[i - 1] for i in range(1, len(seq))]
    assert retried == expected
    assert h.dcache.stats.retries == sum(expected) == 20
    assert h.dcache.index_predictor.bits == (A >> 12) & 7


def test_vipt_retry_penalty_added():
    h = MemoryHierarchy(vipt_config())
    h.access(0x100000, "load", 8, now=0)
    h.access(0x101000, "load", 8, now=100)
    h.access(0x100000, "load", 8, now=200)
    r = h.access(0x100008, "load", 8, now=300)
    assert not r.retried and r.latency == 2
    r = h.access(0x101008, "load", 8, now=400)
    assert r.retried and r.latency == 2 + 2


def test_pipt_never_retries():
    h = MemoryHierarchy()
    rng = random.Random(1)
    for i in range(5000):
        r = h.access(rng.randrange(1 << 22) & ~7, rng.choice(["load", "store"]), 8, now=i * 3)
        assert not r.retried
    assert h.dcache.stats.retries == 0


@given(ops=st.lists(st.tuples(st.integers(0, (1 << 20) - 1), st.booleans()), min_size=1, max_size=400),
       vipt=st.booleans(), mshrs=st.sampled_from([1, 2, 8]))
@settings(max_examples=60, deadline=None)
def test_statistics_invariants(ops, vipt, mshrs):
    cfg = vipt_config(dcache_mshrs=mshrs) if vipt else MemConfig(dcache_mshrs=mshrs)
    h = MemoryHierarchy(cfg)
    now = 0
    for addr, write in ops:
        r = h.access(addr & ~7, "store" if write else "load", 8, now=now)
        assert r.ready >= now and r.latency >= 1
        now += 1
    for cache in (h.dcache, h.llc):
        s = cache.stats
        assert s.hits + s.misses == s.accesses
        assert s.retries <= s.accesses
        for row in cache.tags:
            assert len(row) == len(set(row)) <= cache.ways
    if not vipt:
        assert h.dcache.stats.retries == 0
    # inclusive counting: every memory read is an LLC miss
    assert h.mem_reads == h.llc.stats.misses


def test_plru_victim_is_not_most_recent():
    c = Cache(CacheConfig(size=8 * 64, ways=8, replacement="plru"))
    for k in range(8):
        c.lookup(k * 64)
    for k in range(200):
        used = (k * 37 % 8) * 64
        c.lookup(used)
        way = c.tags[0].index(used >> 6)
        assert c._plru_victim(0) != way


def test_dirty_eviction_writes_back():
    c = Cache(CacheConfig(size=2 * 64, ways=2))  # one set, two ways
    c.lookup(0x0, write=True)
    c.lookup(0x40)
    hit, victim = c.lookup(0x80)
    assert not hit and victim == 0x0 and c.stats.writebacks == 1
    hit, victim = c.lookup(0xC0)  # evicts clean 0x40
    assert victim is None and c.stats.evictions == 2 and c.stats.writebacks == 1


def _vipt_program(pairs):
    a = Assembler()
    a("li a0, 0x100040")
    a("li a1, 0x105040")
    a("li t0, 1")
    for _ in range(pairs):
        a("ld t1, 0(a0)")
        a("sd t0, 8(a1)")
        a("addi t0, t0, 1")
    a.halt()
    return a.program()


@pytest.mark.parametrize("core", ["cva6", "cva6s+"])
def test_vipt_adversarial_through_core_model(core):
    program = _vipt_program(32)
    state, recs = golden.run(program)
    cfg = preset(core)
    assert cfg.mem.dcache.indexing is Indexing.VIPT_SPECULATIVE
    m = inorder.simulate(cfg, recs, memory=program.memory_image())
    # every data access alternates between the two pages: first is free, each later one mismatches
    accesses = sum(r.mem_vaddr >= 0 for r in recs)
    assert m.vipt_retries == accesses - 1 == 63
    assert m.memory_digest == state.mem.digest()


def test_pipt_core_model_zero_retries():
    program = _vipt_program(32)
    state, recs = golden.run(program)
    m = ooo.simulate(preset("c910"), recs, memory=program.memory_image())
    assert m.vipt_retries == 0 and m.memory_digest == state.mem.digest()
    cfg = preset("cva6")
    cfg.mem.dcache.indexing = Indexing.PIPT
    m = inorder.simulate(cfg, recs, memory=program.memory_image())
    assert m.vipt_retries == 0 and m.memory_digest == state.mem.digest()


@pytest.mark.parametrize("kind,params", [("sgcopy", {"size": 8192}), ("matmul_int", {"n": 8}),
                                         ("fp_nbody_like", {"bodies": 8, "steps": 2})])
@pytest.mark.parametrize("core", ["cva6", "cva6s+", "c910"])
def test_cached_timing_is_functionally_transparent(kind, params, core):
    program = generate(KernelSpec(kind, params, 2))
    state, recs = golden.run(program)
    sim = ooo.simulate if core == "c910" else inorder.simulate
    m = sim(preset(core), recs, memory=program.memory_image())
    assert m.memory_digest == state.mem.digest()


def test_snapshot_after_streaming_example():
    h = MemoryHierarchy()
    for k in range(16):
        h.access(0x100000 + 8 * k, "load", 8, now=100 * k)
    snap = h.snapshot_stats()
    assert snap["dcache"] == {"accesses": 16, "hits": 14, "misses": 2, "evictions": 0, "writebacks": 0,
                              "retries": 0, "miss_rate": 0.125}
    assert snap["llc"]["accesses"] == 2 and snap["memory"]["reads"] == 2
