"""Branch prediction structures: BHTs, BTBs, return-address stack, loop buffer.

All direction predictors use 2-bit saturating counters where values 2 and 3
predict taken. Tables are indexed by ``pc >> 2`` (BHT) or ``pc >> 1`` (BTB).
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple


class EmptyStream(ValueError):
    pass


class BranchTraceError(ValueError):
    pass


def _pow2(n: int, what: str) -> int:
    if n <= 0 or n & (n - 1):
        raise ValueError(f"{what} must be a power of two, got {n}")
    return n


def _digest(*arrays) -> str:
    h = hashlib.sha1()
    for a in arrays:
        h.update(repr(a).encode())
    return h.hexdigest()


class BimodalBht:
    def __init__(self, entries: int = 128, init: int = 1):
        self.entries = _pow2(entries, "BHT entries")
        self.mask = entries - 1
        self.counters = [init] * entries

    def index(self, pc: int) -> int:
        return (pc >> 2) & self.mask

    def predict(self, pc: int) -> bool:
        return self.counters[(pc >> 2) & self.mask] >= 2

    def update(self, pc: int, taken: bool):
        i = (pc >> 2) & self.mask
        c = self.counters[i]
        if taken:
            if c < 3:
                self.counters[i] = c + 1
        elif c > 0:
            self.counters[i] = c - 1

    def state_digest(self) -> str:
        return _digest(self.counters)


class TwoLevelBht:
    """Per-entry private history selecting one of 2**history_bits counters."""

    def __init__(self, entries: int = 128, history_bits: int = 3, init: int = 1):
        self.entries = _pow2(entries, "BHT entries")
        self.mask = entries - 1
        self.history_bits = history_bits
        self.hmask = (1 << history_bits) - 1
        self.history = [0] * entries
        self.patterns = [[init] * (1 << history_bits) for _ in range(entries)]

    def predict(self, pc: int) -> bool:
        i = (pc >> 2) & self.mask
        return self.patterns[i][self.history[i]] >= 2

    def update(self, pc: int, taken: bool):
        i = (pc >> 2) & self.mask
        h = self.history[i]
        row = self.patterns[i]
        c = row[h]
        if taken:
            if c < 3:
                row[h] = c + 1
        elif c > 0:
            row[h] = c - 1
        self.history[i] = ((h << 1) | taken) & self.hmask

    def state_digest(self) -> str:
        return _digest(self.history, self.patterns)


class HybridBht:
    """Tournament of a gshare-style global predictor and a local two-level one."""

    def __init__(self, global_bits: int = 12, local_entries: int = 1024, local_history: int = 8,
                 chooser_entries: int = 1024):
        self.global_bits = global_bits
        self.gmask = (1 << global_bits) - 1
        self.ghr = 0
        self.gpht = [1] * (1 << global_bits)
        self.local = TwoLevelBht(local_entries, local_history)
        self.chooser = [2] * _pow2(chooser_entries, "chooser entries")
        self.cmask = chooser_entries - 1

    def _gidx(self, pc):
        return ((pc >> 2) ^ self.ghr) & self.gmask

    def predict(self, pc: int) -> bool:
        if self.chooser[(pc >> 2) & self.cmask] >= 2:
            return self.gpht[self._gidx(pc)] >= 2
        return self.local.predict(pc)

    def update(self, pc: int, taken: bool):
        gi = self._gidx(pc)
        g_ok = (self.gpht[gi] >= 2) == taken
        l_ok = self.local.predict(pc) == taken
        ci = (pc >> 2) & self.cmask
        if g_ok != l_ok:
            c = self.chooser[ci]
            self.chooser[ci] = min(3, c + 1) if g_ok else max(0, c - 1)
        c = self.gpht[gi]
        self.gpht[gi] = min(3, c + 1) if taken else max(0, c - 1)
        self.local.update(pc, taken)
        self.ghr = ((self.ghr << 1) | taken) & self.gmask

    def state_digest(self) -> str:
        return _digest(self.ghr, self.gpht, self.chooser, self.local.state_digest())


class Btb:
    """Set-associative branch target buffer; ``ways == entries`` is fully associative."""

    def __init__(self, entries: int = 32, ways: int = 1, replacement: str = "lru"):
        if entries % ways:
            raise ValueError("BTB entries must be a multiple of ways")
        self.entries = entries
        self.ways = ways
        self.sets = _pow2(entries // ways, "BTB sets")
        if replacement not in ("lru", "rr"):
            raise ValueError(f"unknown BTB replacement {replacement!r}")
        self.replacement = replacement
        # per set: list of [tag, target], most recently used first for LRU
        self.table: list[list[list[int]]] = [[] for _ in range(self.sets)]
        self.rr = [0] * self.sets

    def _loc(self, pc):
        key = pc >> 1
        return key & (self.sets - 1), key

    def lookup(self, pc: int) -> int | None:
        s, tag = self._loc(pc)
        for e in self.table[s]:
            if e[0] == tag:
                return e[1]
        return None

    def update(self, pc: int, target: int):
        s, tag = self._loc(pc)
        row = self.table[s]
        for k, e in enumerate(row):
            if e[0] == tag:
                e[1] = target
                if self.replacement == "lru" and k:
                    row.insert(0, row.pop(k))
                return
        if len(row) < self.ways:
            if self.replacement == "lru":
                row.insert(0, [tag, target])
            else:
                row.append([tag, target])
        elif self.replacement == "lru":
            row.pop()
            row.insert(0, [tag, target])
        else:
            row[self.rr[s]] = [tag, target]
            self.rr[s] = (self.rr[s] + 1) % self.ways

    @property
    def occupancy(self) -> int:
        return sum(len(r) for r in self.table)

    def state_digest(self) -> str:
        return _digest(self.table, self.rr)


class Ras:
    """Circular return-address stack; overflow overwrites the oldest entry."""

    def __init__(self, depth: int = 2):
        if depth < 1:
            raise ValueError("RAS depth must be >= 1")
        self.depth = depth
        self.buf = [0] * depth
        self.top = depth - 1
        self.count = 0

    def push(self, addr: int):
        self.top = (self.top + 1) % self.depth
        self.buf[self.top] = addr
        self.count = min(self.count + 1, self.depth)

    def peek(self) -> int | None:
        return self.buf[self.top] if self.count else None

    def pop(self) -> int | None:
        if not self.count:
            return None
        v = self.buf[self.top]
        self.top = (self.top - 1) % self.depth
        self.count -= 1
        return v

    def state_digest(self) -> str:
        return _digest(self.buf, self.top, self.count)


class LoopBuffer:
    """Fetch-side loop capture.

    A loop is captured when the same backward taken branch closes two
    consecutive iterations of at most ``entries`` instructions. While active,
    instructions inside the captured body are supplied without I-cache access.
    """

    def __init__(self, entries: int = 16):
        self.entries = entries
        self.loop: tuple[int, int] | None = None  # (target, branch pc)
        self.active = False
        self.since_last = 0
        self.supplied = 0

    def observe(self, pc: int, next_pc: int, taken: bool, is_control: bool) -> bool:
        """Feed one fetched instruction; returns True if it came from the buffer."""
        hit = self.active and self.loop is not None and self.loop[0] <= pc <= self.loop[1]
        if self.active and not hit:
            self.active = False
        self.since_last += 1
        if is_control:
            if taken and next_pc < pc:
                body = (next_pc, pc)
                if body == self.loop and self.since_last <= self.entries:
                    self.active = True
                else:
                    self.loop = body
                    self.active = False
                self.since_last = 0
            elif self.active and pc == self.loop[1]:
                self.active = False  # loop exit
        if hit:
            self.supplied += 1
        return hit


class Prediction(NamedTuple):
    taken: bool
    target: int | None
    source: str


class Resolution(NamedTuple):
    mispredicted: bool
    bubbles: int
    source: str


@dataclass
class BranchStats:
    control: int = 0
    branches: int = 0
    mispredicts: int = 0
    branch_mispredicts: int = 0
    returns: int = 0
    return_mispredicts: int = 0
    btb_misses: int = 0

    @property
    def rate(self) -> float:
        return self.mispredicts / self.control if self.control else 0.0


class PredictorSuite:
    """Front-end prediction state of one core.

    ``l0_btb`` is optional: when present, a hit there costs no bubble while a
    hit only in the main BTB costs ``l1_bubble`` fetch cycles.
    """

    def __init__(self, bht, btb: Btb, ras: Ras, l0_btb: Btb | None = None,
                 loop_buffer: LoopBuffer | None = None, l1_bubble: int = 1):
        self.bht = bht
        self.btb = btb
        self.ras = ras
        self.l0 = l0_btb
        self.loop_buffer = loop_buffer
        self.l1_bubble = l1_bubble
        self.stats = BranchStats()

    def _btb_target(self, pc):
        if self.l0 is not None:
            t = self.l0.lookup(pc)
            if t is not None:
                return t, "l0_btb"
        t = self.btb.lookup(pc)
        return t, ("btb" if t is not None else "none")

    def predict(self, pc: int, instr=None) -> Prediction:
        """Pure lookup. ``instr`` (when known) selects RAS vs BHT handling."""
        if instr is not None and instr.is_return:
            t = self.ras.peek()
            if t is not None:
                return Prediction(True, t, "ras")
            t, src = self._btb_target(pc)
            return Prediction(True, t, src)
        if instr is not None and instr.is_jump:
            t, src = self._btb_target(pc)
            return Prediction(True, t, src)
        taken = self.bht.predict(pc)
        if not taken:
            return Prediction(False, None, "bht")
        t, src = self._btb_target(pc)
        return Prediction(True, t, src)

    def resolve(self, rec) -> Resolution:
        """Predict ``rec`` (a control-transfer RetireRecord), then train on its outcome."""
        ins = rec.instr
        pc = rec.pc
        st = self.stats
        st.control += 1
        if ins.is_return:
            pred_t = self.ras.pop()
            src = "ras"
            if pred_t is None:
                pred_t, src = self._btb_target(pc)
            wrong = pred_t != rec.next_pc
            st.returns += 1
            st.return_mispredicts += wrong
        else:
            pred = self.predict(pc, ins)
            src = pred.source
            if ins.is_branch:
                st.branches += 1
                if pred.taken != rec.taken:
                    wrong = True
                    st.branch_mispredicts += 1
                else:
                    wrong = rec.taken and pred.target != rec.next_pc
            else:
                wrong = pred.target != rec.next_pc
            if rec.taken and pred.target is None:
                st.btb_misses += 1
            if ins.is_branch:
                self.bht.update(pc, rec.taken)
        if ins.is_call:
            self.ras.push(pc + ins.width)
        if rec.taken and not ins.is_return:
            self.btb.update(pc, rec.next_pc)
            if self.l0 is not None:
                self.l0.update(pc, rec.next_pc)
        st.mispredicts += wrong
        bubbles = self.l1_bubble if (not wrong and rec.taken and src == "btb" and self.l0 is not None) else 0
        return Resolution(wrong, bubbles, src)

    def state_digest(self) -> str:
        parts = [self.bht.state_digest(), self.btb.state_digest(), self.ras.state_digest()]
        if self.l0 is not None:
            parts.append(self.l0.state_digest())
        return _digest(parts)


def mispredict_rate(stream: Iterable[tuple[int, bool]], predictor, warmup: int = 0) -> float:
    """Direction mispredict rate of ``predictor`` over ``(pc, taken)`` pairs.

    The first ``warmup`` branches train the predictor but are not counted.
    """
    n = wrong = 0
    seen = 0
    for pc, taken in stream:
        p = predictor.predict(pc)
        predictor.update(pc, taken)
        seen += 1
        if seen > warmup:
            n += 1
            wrong += p != taken
    if n == 0:
        raise EmptyStream("no branches to evaluate")
    return wrong / n


def parse_branch_trace(text: str) -> list[tuple[int, bool, int]]:
    """Parse ``<pc-hex> <T|N> <target-hex>`` lines (``#`` starts a comment)."""
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3 or parts[1] not in ("T", "N"):
            raise BranchTraceError(f"line {lineno}: expected '<pc> <T|N> <target>', got {line!r}")
        try:
            out.append((int(parts[0], 16), parts[1] == "T", int(parts[2], 16)))
        except ValueError:
            raise BranchTraceError(f"line {lineno}: bad hex field") from None
    return out


def load_branch_trace(path: str | Path) -> list[tuple[int, bool, int]]:
    return parse_branch_trace(Path(path).read_text())


def evaluate_branch_trace(trace, bht, btb: Btb | None = None) -> dict:
    """Standalone direction (+ optional target) evaluation over a branch trace."""
    n = dir_wrong = tgt_wrong = 0
    for pc, taken, target in trace:
        p = bht.predict(pc)
        n += 1
        dir_wrong += p != taken
        if btb is not None and taken:
            if p and btb.lookup(pc) != target:
                tgt_wrong += 1
            btb.update(pc, target)
        bht.update(pc, taken)
    if n == 0:
        raise EmptyStream("empty branch trace")
    return {"branches": n, "direction_mispredicts": dir_wrong, "direction_rate": dir_wrong / n,
            "target_mispredicts": tgt_wrong}
