"""L1 instruction/data caches, a shared last-level cache and ideal main memory.

Caches track tags only; data values always come from the functional model.
Timing is request-based: ``MemoryHierarchy.access`` takes the cycle a request
is issued and returns when its data is available, accounting for the
outstanding-miss table and the 64-bit fill bus.
"""
from __future__ import annotations

import enum
from bisect import bisect_right
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

PAGE_OFFSET_BITS = 12


class UnalignedLineCrossing(ValueError):
    pass


class Indexing(enum.Enum):
    PIPT = "pipt"
    VIPT_SPECULATIVE = "vipt"


class Level(enum.IntEnum):
    L1_HIT = 0
    LLC_HIT = 1
    MEMORY = 2


def _log2(n: int, what: str) -> int:
    if n <= 0 or n & (n - 1):
        raise ValueError(f"{what} must be a power of two, got {n}")
    return n.bit_length() - 1


@dataclass
class CacheConfig:
    size: int = 65536
    ways: int = 2
    line: int = 64
    indexing: Indexing = Indexing.PIPT
    hit_latency: int = 1
    replacement: str = "lru"

    def __post_init__(self):
        if isinstance(self.indexing, str):
            self.indexing = Indexing(self.indexing)
        if self.size % (self.ways * self.line):
            raise ValueError("cache size must be a multiple of ways * line")
        _log2(self.line, "line size")
        _log2(self.sets, "number of sets")
        if self.replacement not in ("lru", "plru"):
            raise ValueError(f"unknown replacement policy {self.replacement!r}")

    @property
    def sets(self) -> int:
        return self.size // (self.ways * self.line)

    @property
    def index_bits_above_page(self) -> int:
        """Set-index bits that lie above the 4 KiB page offset."""
        top = _log2(self.sets, "sets") + _log2(self.line, "line")
        return max(0, top - PAGE_OFFSET_BITS)


@dataclass
class CacheStats:
    accesses: int = 0
    hits: int = 0
    misses: int = 0
    evictions: int = 0
    writebacks: int = 0
    retries: int = 0

    @property
    def miss_rate(self) -> float:
        return self.misses / self.accesses if self.accesses else 0.0


class IndexPredictor:
    """Remembers the translated index bits of the last successful access."""

    def __init__(self, nbits: int):
        self.nbits = nbits
        self.mask = (1 << nbits) - 1
        self.bits = 0

    def check(self, paddr: int) -> bool:
        """True when the speculated bits match; always leaves the corrected bits."""
        actual = (paddr >> PAGE_OFFSET_BITS) & self.mask
        ok = actual == self.bits
        self.bits = actual
        return ok


class Cache:
    def __init__(self, cfg: CacheConfig, name: str = "cache"):
        self.cfg = cfg
        self.name = name
        self.line_bits = _log2(cfg.line, "line")
        self.nsets = cfg.sets
        self.set_mask = self.nsets - 1
        self.ways = cfg.ways
        # per set: tags, most recently used first (LRU) or by way slot (PLRU)
        self.tags: list[list[int]] = [[] for _ in range(self.nsets)]
        self.dirty: set[int] = set()
        self.plru = [0] * self.nsets
        self.stats = CacheStats()
        spec_bits = cfg.index_bits_above_page
        self.index_predictor = (IndexPredictor(spec_bits)
                                if cfg.indexing is Indexing.VIPT_SPECULATIVE and spec_bits else None)

    def set_index(self, addr: int) -> int:
        return (addr >> self.line_bits) & self.set_mask

    def line_addr(self, addr: int) -> int:
        return addr >> self.line_bits

    def contains(self, addr: int) -> bool:
        la = addr >> self.line_bits
        return la in self.tags[la & self.set_mask]

    def speculate(self, vaddr: int) -> bool:
        """Run the VIPT index speculation; returns True when the access must retry."""
        if self.index_predictor is None:
            return False
        # identity translation: physical == virtual
        if self.index_predictor.check(vaddr):
            return False
        self.stats.retries += 1
        return True

    def _plru_touch(self, s, way):
        bits = self.plru[s]
        node = 0
        lo, hi = 0, self.ways
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if way < mid:
                bits |= 1 << node  # point right, away from the used half
                node = 2 * node + 1
                hi = mid
            else:
                bits &= ~(1 << node)
                node = 2 * node + 2
                lo = mid
        self.plru[s] = bits

    def _plru_victim(self, s):
        bits = self.plru[s]
        node = 0
        lo, hi = 0, self.ways
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if bits >> node & 1:
                node = 2 * node + 2
                lo = mid
            else:
                node = 2 * node + 1
                hi = mid
        return lo

    def lookup(self, addr: int, write: bool = False) -> tuple[bool, int | None]:
        """Access one line (write-back, write-allocate).

        Returns ``(hit, victim)`` where ``victim`` is the byte address of a
        dirty line evicted by the allocation, if any.
        """
        la = addr >> self.line_bits
        s = la & self.set_mask
        row = self.tags[s]
        st = self.stats
        st.accesses += 1
        victim = None
        hit = la in row
        if hit:
            st.hits += 1
            if self.cfg.replacement == "lru":
                if row[0] != la:
                    row.remove(la)
                    row.insert(0, la)
            else:
                self._plru_touch(s, row.index(la))
        else:
            st.misses += 1
            if self.cfg.replacement == "lru":
                if len(row) >= self.ways:
                    old = row.pop()
                    victim = self._evict(old)
                row.insert(0, la)
            else:
                if len(row) < self.ways:
                    row.append(la)
                    w = len(row) - 1
                else:
                    w = self._plru_victim(s)
                    victim = self._evict(row[w])
                    row[w] = la
                self._plru_touch(s, w)
        if write:
            self.dirty.add(la)
        return hit, victim

    def _evict(self, la):
        self.stats.evictions += 1
        if la in self.dirty:
            self.dirty.discard(la)
            self.stats.writebacks += 1
            return la << self.line_bits
        return None

    def install_writeback(self, addr: int) -> int | None:
        """Absorb a dirty line written back from an upper level."""
        la = addr >> self.line_bits
        s = la & self.set_mask
        row = self.tags[s]
        victim = None
        if la not in row:
            if self.cfg.replacement == "lru":
                if len(row) >= self.ways:
                    victim = self._evict(row.pop())
                row.insert(0, la)
            else:
                if len(row) < self.ways:
                    row.append(la)
                    w = len(row) - 1
                else:
                    w = self._plru_victim(s)
                    victim = self._evict(row[w])
                    row[w] = la
                self._plru_touch(s, w)
        self.dirty.add(la)
        return victim


class MemResponse(NamedTuple):
    latency: int
    level: Level
    retried: bool
    ready: int


@dataclass
class MemConfig:
    icache: CacheConfig = field(default_factory=lambda: CacheConfig(hit_latency=1))
    dcache: CacheConfig = field(default_factory=lambda: CacheConfig(hit_latency=2))
    llc: CacheConfig = field(default_factory=lambda: CacheConfig(size=512 * 1024, ways=8, hit_latency=8,
                                                                  replacement="plru"))
    store_hit_latency: int = 1
    llc_latency: int = 8
    mem_latency: int = 10
    bus_bytes: int = 8
    vipt_retry_penalty: int = 2
    dcache_mshrs: int = 1
    icache_mshrs: int = 1

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("icache", "dcache", "llc"):
            d[k]["indexing"] = getattr(self, k).indexing.value
        return d


class _Timeline:
    """Busy intervals of one resource (the fill bus or an MSHR).

    Requests reach the hierarchy in program order but with out-of-order
    timestamps, so a request may take an idle gap left before later ones.
    """

    HORIZON = 4096

    def __init__(self):
        self.starts: list[int] = []
        self.ends: list[int] = []
        self.latest = 0

    def fit(self, earliest: int, length: int) -> tuple[int, int]:
        """Earliest start of a free window of ``length`` cycles, and its insertion slot."""
        starts, ends = self.starts, self.ends
        k = bisect_right(ends, earliest)
        t = earliest
        while k < len(starts) and starts[k] < t + length:
            t = max(t, ends[k])
            k += 1
        return t, k

    def book(self, start: int, end: int, k: int | None = None):
        if k is None:
            k = bisect_right(self.starts, start)
        self.starts.insert(k, start)
        self.ends.insert(k, end)
        if start > self.latest:
            self.latest = start
            if len(self.ends) > 256 and self.ends[0] < start - self.HORIZON:
                cut = bisect_right(self.ends, start - self.HORIZON)
                del self.starts[:cut], self.ends[:cut]

    def reserve(self, earliest: int, length: int) -> int:
        t, k = self.fit(earliest, length)
        self.book(t, t + length, k)
        return t


class _BeatBus:
    """Fill bus booked one beat at a time, so beats of different lines may interleave.

    ``nxt`` maps each busy cycle to a later candidate (union-find with path
    compression), giving the first free cycle at or after any point.
    """

    HORIZON = 1 << 16

    def __init__(self):
        self.nxt: dict[int, int] = {}
        self.floor = 0
        self.latest = 0

    def _free_from(self, t: int) -> int:
        nxt = self.nxt
        root = t
        while root in nxt:
            root = nxt[root]
        while t != root:
            nxt[t], t = root, nxt[t]
        return root

    def reserve(self, earliest: int, beats: int) -> int:
        """Book ``beats`` bus cycles at or after ``earliest``; returns the last one."""
        t = max(earliest, self.floor)
        for _ in range(beats):
            t = self._free_from(t)
            self.nxt[t] = t + 1
            t += 1
        last = t - 1
        if last > self.latest + self.HORIZON:
            # forget history far behind the newest booking
            self.latest = last
            self.floor = last - self.HORIZON
            self.nxt = {k: v for k, v in self.nxt.items() if k >= self.floor}
        return last


class _Mshrs:
    def __init__(self, n):
        self.slots = [_Timeline() for _ in range(n)]
        self.inflight: dict[int, tuple[int, Level]] = {}

    def slot_start(self, now: int, length: int) -> tuple[int, int]:
        """Slot and start cycle of the earliest window that can hold a fill of ``length``."""
        best = min((tl.fit(now, length)[0], i) for i, tl in enumerate(self.slots))
        return best[1], best[0]


class MemoryHierarchy:
    """L1I + L1D in front of one LLC and ideal main memory."""

    def __init__(self, cfg: MemConfig | None = None):
        self.cfg = cfg or MemConfig()
        c = self.cfg
        self.icache = Cache(c.icache, "icache")
        self.dcache = Cache(c.dcache, "dcache")
        self.llc = Cache(c.llc, "llc")
        self.beats = c.llc.line // c.bus_bytes if c.llc.line >= c.bus_bytes else 1
        self.bus = _BeatBus()
        self.mem_reads = 0
        self.mem_writes = 0
        self.bus_busy_cycles = 0
        self._mshr = {"icache": _Mshrs(c.icache_mshrs), "dcache": _Mshrs(c.dcache_mshrs)}

    def line_fill_latency(self, level: Level) -> int:
        """Uncontended cycles to bring a line into L1 from ``level``."""
        c = self.cfg
        if level is Level.L1_HIT:
            return c.dcache.hit_latency
        base = c.llc_latency if level is Level.LLC_HIT else c.mem_latency
        return base + (c.dcache.line // c.bus_bytes - 1)

    def _bus(self, earliest: int) -> int:
        """Reserve the fill bus for one line; returns the cycle the last beat lands."""
        self.bus_busy_cycles += self.beats
        return self.bus.reserve(earliest, self.beats)

    def _writeback(self, addr: int, now: int):
        victim = self.llc.install_writeback(addr)
        self._bus(now)
        if victim is not None:
            self.mem_writes += 1

    def access(self, vaddr: int, kind: str, size: int = 8, now: int = 0) -> MemResponse:
        """One ifetch/load/store request issued at cycle ``now``."""
        c = self.cfg
        cache = self.icache if kind == "ifetch" else self.dcache
        line = cache.cfg.line
        if (vaddr % line) + size > line:
            raise UnalignedLineCrossing(f"{kind} of {size} bytes at 0x{vaddr:x} crosses a {line}-byte line")
        if kind == "ifetch":
            hit_lat = c.icache.hit_latency
        elif kind == "load":
            hit_lat = c.dcache.hit_latency
        elif kind == "store":
            hit_lat = c.store_hit_latency
        else:
            raise ValueError(f"unknown access kind {kind!r}")

        retried = cache.speculate(vaddr)
        t = now + (c.vipt_retry_penalty if retried else 0)
        mshr = self._mshr[cache.name]
        la = vaddr // line
        hit, victim = cache.lookup(vaddr, kind == "store")
        if victim is not None:
            self._writeback(victim, t)
        pending = mshr.inflight.get(la)
        if pending is not None and pending[0] > t:
            # secondary miss: the line is still being filled
            ready = max(t + hit_lat, pending[0])
            return MemResponse(ready - now, pending[1], retried, ready)
        if hit:
            return MemResponse(t + hit_lat - now, Level.L1_HIT, retried, t + hit_lat)

        llc_hit, llc_victim = self.llc.lookup(vaddr, False)
        if llc_victim is not None:
            self.mem_writes += 1
        if llc_hit:
            level, base = Level.LLC_HIT, c.llc_latency
        else:
            level, base = Level.MEMORY, c.mem_latency
            self.mem_reads += 1
        slot, start = mshr.slot_start(t, base + self.beats)
        filled = self._bus(start + base)
        ready = filled + hit_lat
        mshr.slots[slot].book(start, filled + 1)
        mshr.inflight[la] = (ready, level)
        if len(mshr.inflight) > 64:
            for k in [k for k, v in mshr.inflight.items() if v[0] <= t]:
                del mshr.inflight[k]
        return MemResponse(ready - now, level, retried, ready)

    def snapshot_stats(self) -> dict:
        out = {}
        for cache in (self.icache, self.dcache, self.llc):
            d = asdict(cache.stats)
            d["miss_rate"] = cache.stats.miss_rate
            out[cache.name] = d
        out["memory"] = {"reads": self.mem_reads, "writes": self.mem_writes}
        out["bus_busy_cycles"] = self.bus_busy_cycles
        return out
