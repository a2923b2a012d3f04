"""Timing model for the 3-wide out-of-order core with a compacting reorder buffer.

Instructions are processed once, in program order. Dispatch is bounded by
the front end, decode width, ROB/LSU/rename capacity; issue by operand
readiness and per-cycle functional-unit calendars (so younger instructions
can slip ahead of stalled older ones); retirement is in order, a whole ROB
entry at a time.

A ROB entry holds up to ``compaction_max`` instructions dispatched in the
same cycle. An entry is closed early by a control transfer or by a
long-latency divide, which is what lets many completed entries pile up
behind a divide and then retire several per cycle.
"""
from __future__ import annotations

import hashlib
import heapq
from typing import Sequence

import numpy as np

from .config import OooConfig
from .golden import Memory, RetireRecord
from .inorder import StreamMismatch, _count, _ifetch, _metrics
from .isa import FuClass
from .memhier import Level, MemoryHierarchy
from .metrics import StallBreakdown
from .predictors import BimodalBht, Btb, HybridBht, LoopBuffer, PredictorSuite, Ras, TwoLevelBht


class RenameError(RuntimeError):
    pass


class RenameState:
    """Register alias table with explicit integer and FP free lists.

    Unified register numbers follow ``Instr.dst``: 0-31 integer, 32-63 FP.
    """

    def __init__(self, phys_int: int, phys_fp: int):
        self.map = list(range(32)) + list(range(32))
        self.free = [list(range(32, phys_int)), list(range(32, phys_fp))]
        self.sizes = (phys_int, phys_fp)
        self.allocated = [set(range(32)), set(range(32))]

    def can_allocate(self, reg: int) -> bool:
        return bool(self.free[reg >= 32])

    def allocate(self, reg: int) -> tuple[int, int]:
        """Map ``reg`` to a fresh physical register; returns ``(new, previous)``."""
        bank = reg >= 32
        if not self.free[bank]:
            raise RenameError(f"no free physical register for r{reg}")
        new = self.free[bank].pop(0)
        old = self.map[reg]
        self.map[reg] = new
        self.allocated[bank].add(new)
        return new, old

    def release(self, bank: int, preg: int):
        if preg not in self.allocated[bank]:
            raise RenameError(f"double release of p{preg}")
        self.allocated[bank].discard(preg)
        self.free[bank].append(preg)

    def free_count(self, bank: int) -> int:
        return len(self.free[bank])


def closes_entry(fu: FuClass, is_control: bool) -> bool:
    """Does an instruction end the ROB entry it joins?"""
    return is_control or fu is FuClass.DIV or fu is FuClass.FP_DIV


def compact(records: Sequence[RetireRecord], cmax: int = 3) -> list[list[RetireRecord]]:
    """Greedily pack consecutive records into ROB entries of at most ``cmax``.

    This is the packing rule alone; the timing model additionally requires
    the members of one entry to dispatch in the same cycle.
    """
    entries: list[list[RetireRecord]] = []
    cur: list[RetireRecord] = []
    for rec in records:
        cur.append(rec)
        if len(cur) == cmax or closes_entry(rec.instr.fu_class, rec.instr.is_control):
            entries.append(cur)
            cur = []
    if cur:
        entries.append(cur)
    return entries


def retire_cycle(head: Sequence[Sequence[bool]], max_entries: int = 3) -> int:
    """Instructions retired in one cycle from ROB entries ``head`` (oldest first).

    Each entry is a list of per-slot completion flags; an entry leaves only
    when every slot is complete, and nothing behind an incomplete entry retires.
    """
    retired = 0
    for entry in head[:max_entries]:
        if not all(entry):
            break
        retired += len(entry)
    return retired


def build_suite(cfg: OooConfig) -> PredictorSuite:
    if cfg.predictor == "hybrid":
        bht = HybridBht(cfg.global_history_bits, cfg.local_entries, cfg.local_history_bits, cfg.chooser_entries)
    elif cfg.predictor == "twolevel":
        bht = TwoLevelBht(cfg.local_entries, cfg.local_history_bits)
    else:
        bht = BimodalBht(cfg.local_entries)
    l0 = Btb(cfg.l0_btb_entries, cfg.l0_btb_entries, "lru") if cfg.l0_btb_entries else None
    lb = LoopBuffer(cfg.loop_buffer_entries) if cfg.loop_buffer_entries else None
    return PredictorSuite(bht, Btb(cfg.btb_entries, cfg.btb_ways, "rr"), Ras(cfg.ras_entries),
                          l0_btb=l0, loop_buffer=lb, l1_bubble=cfg.l1_btb_bubble)


class _Calendar:
    """Per-cycle issue-slot usage of one pool of identical pipelined units."""

    def __init__(self, units: int):
        self.units = units
        self.used: dict[int, int] = {}

    def reserve(self, t: int) -> int:
        used = self.used
        while used.get(t, 0) >= self.units:
            t += 1
        used[t] = used.get(t, 0) + 1
        return t

    def prune(self, before: int):
        for k in [k for k in self.used if k < before]:
            del self.used[k]


_LOADS = frozenset({FuClass.LOAD, FuClass.FP_LOAD})
_STORES = frozenset({FuClass.STORE, FuClass.FP_STORE})


def _occupancy(starts, ends, cycles: int) -> list[int]:
    """Histogram of how many intervals ``[start, end)`` overlap each cycle."""
    delta = np.zeros(cycles + 2, dtype=np.int64)
    np.add.at(delta, np.minimum(np.asarray(starts, dtype=np.int64), cycles + 1), 1)
    np.add.at(delta, np.minimum(np.asarray(ends, dtype=np.int64), cycles + 1), -1)
    occ = np.cumsum(delta)[:cycles]
    return np.bincount(occ).tolist() if cycles else [0]


def simulate(cfg: OooConfig, stream: Sequence[RetireRecord], hier: MemoryHierarchy | None = None, *,
             memory: Memory | None = None, issue_log: bool = False,
             suite: PredictorSuite | None = None):
    """Replay ``stream`` on the out-of-order core described by ``cfg``."""
    hier = hier if hier is not None else MemoryHierarchy(cfg.mem)
    suite = suite if suite is not None else build_suite(cfg)
    lb = suite.loop_buffer
    lat = cfg.fu_latency
    D = cfg.decode_width
    FB = cfg.fetch_bytes_per_cycle
    FD = cfg.frontend_depth
    FQ = cfg.fetch_queue_entries
    ROB = cfg.rob_entries
    CMAX = cfg.compaction_max
    RE = cfg.retire_entries_per_cycle
    LQ, SQ = cfg.load_q, cfg.store_q
    penalty = cfg.mispredict_penalty
    iline = cfg.mem.icache.line
    ihit = cfg.mem.icache.hit_latency
    dhit = cfg.mem.dcache.hit_latency

    n = len(stream)
    disp_at = [0] * n
    done_at = [0] * n
    cause_at = [""] * n
    retire_at = [-1] * n
    prev_map: list = [None] * n  # (bank, physical register) freed when i retires

    ready_at: dict[int, int] = {}  # physical register key -> availability cycle
    miss_regs: set[int] = set()
    rat = RenameState(cfg.phys_int_regs, cfg.phys_fp_regs)
    releases: list[tuple[int, int, int]] = []  # heap of (cycle, bank, preg)

    def key(reg: int) -> int:
        return rat.map[reg] + (1024 if reg >= 32 else 0)

    cal = {"alu": _Calendar(cfg.n_alu), "bru": _Calendar(cfg.n_bru), "mul": _Calendar(cfg.n_mul),
           "fpu": _Calendar(cfg.n_fpu), "lsu": _Calendar(cfg.lsu_ports)}
    div_free = 0
    fdiv_free = 0

    ent_disp: list[int] = []
    ent_retire: list[int] = []
    ent_members: list[list[int]] = []
    st = {"open": False, "closed": False, "finalized": 0, "last_ret": -1, "nret": 0,
          "ret_cycle": -1, "ret_count": 0, "peak": 0, "last_drain": -1, "drain_end": 0}

    load_idx: list[int] = []
    store_idx: list[int] = []
    store_free: list[int] = []
    store_fill: list[int] = []  # when each store's line is in L1 (ownership requested at address time)
    store_addr_ready = 0
    pending_stores: list[tuple[int, int, int, int]] = []  # (addr, bytes, data ready, store number)

    stalls = StallBreakdown()
    events = dict.fromkeys(("fetch", "decode", "alu_op", "mul_op", "div_op", "fp_op", "rob_write", "rename"), 0)
    log = [] if issue_log else None
    seq_hash = hashlib.sha1()
    mem_bytes = 0

    def finalize():
        k = st["finalized"]
        members = ent_members[k]
        r = max(done_at[j] for j in members)
        if r < st["last_ret"]:
            r = st["last_ret"]
        if r == st["last_ret"] and st["nret"] >= RE:
            r += 1
        if r != st["last_ret"]:
            st["last_ret"] = r
            st["nret"] = 1
        else:
            st["nret"] += 1
        ent_retire.append(r)
        if r != st["ret_cycle"]:
            st["ret_cycle"] = r
            st["ret_count"] = 0
        st["ret_count"] += len(members)
        st["peak"] = max(st["peak"], st["ret_count"])
        for j in members:
            retire_at[j] = r
            if prev_map[j] is not None:
                heapq.heappush(releases, (r, *prev_map[j]))
            rec = stream[j]
            if rec.instr.fu_class in _STORES:
                # one store per cycle writes L1, in order, once its line is present
                sk = len(store_free)
                ds = max(r + 1, st["last_drain"] + 1, store_fill[sk] - 1)
                st["last_drain"] = ds
                st["drain_end"] = max(st["drain_end"], ds + 1)
                store_free.append(ds + 1)
                if memory is not None:
                    memory.write(rec.mem_vaddr, rec.mem_bytes, rec.store_data)
        st["finalized"] = k + 1
        if st["finalized"] == len(ent_members):
            st["open"] = False

    def settle(j: int):
        """Finalize entries until instruction ``j``'s retirement cycle is known."""
        while retire_at[j] < 0:
            finalize()

    fcyc = -1
    fblock = -1
    group_open = False
    lb_count = 0
    last_iline = -1
    redirect = 0
    redirect_cause = "fetch_starve"
    last_disp = -1
    ndisp = 0
    expect_seq = stream[0].seq if n else 0

    for i, rec in enumerate(stream):
        if rec.seq != expect_seq:
            raise StreamMismatch(f"record {i} has seq {rec.seq}, expected {expect_seq}")
        expect_seq += 1
        ins = rec.instr
        fu = ins.fu_class
        pc = rec.pc
        is_ctl = ins.is_control

        # ---- fetch
        from_lb = lb.observe(pc, rec.next_pc, rec.taken, is_ctl) if lb is not None else False
        if from_lb:
            cand = fcyc if (group_open and 0 < lb_count < D) else fcyc + 1
        elif group_open and lb_count == 0 and pc // FB == fblock and pc % FB + ins.width <= FB:
            cand = fcyc
        else:
            cand = fcyc + 1
        fcause = "fetch_starve"
        if cand < redirect:
            cand = redirect
            fcause = redirect_cause
        if i >= FQ and cand < disp_at[i - FQ]:
            cand = disp_at[i - FQ]
        new_group = cand != fcyc or not group_open
        if new_group:
            fcyc = cand
            fblock = pc // FB
            group_open = True
            lb_count = 0
        if from_lb:
            lb_count += 1
        else:
            if lb_count:
                # leaving the loop buffer starts a fresh I-cache group
                fcyc += 1
                fblock = pc // FB
                lb_count = 0
                new_group = True
            line = pc // iline
            if new_group or line != last_iline:
                resp = _ifetch(hier, pc, ins.width, iline, fcyc)
                events["fetch"] += 1
                last_iline = line
                if resp.latency > ihit:
                    fcyc += resp.latency - ihit
                    fcause = "cache_miss"
            if is_ctl and rec.taken:
                group_open = False
        ready = fcyc + FD

        # ---- dispatch bounds
        d = ready
        cause = fcause
        if d < last_disp:
            d = last_disp
        if d == last_disp and ndisp >= D:
            d += 1
        if fu in _LOADS:
            k = len(load_idx)
            if k >= LQ:
                j = load_idx[k - LQ]
                settle(j)
                if retire_at[j] + 1 > d:
                    d = retire_at[j] + 1
                    cause = "lsu_full"
        elif fu in _STORES:
            k = len(store_idx)
            if k >= SQ:
                settle(store_idx[k - SQ])
                if store_free[k - SQ] > d:
                    d = store_free[k - SQ]
                    cause = "lsu_full"
        dst = ins.dst
        if dst >= 0:
            bank = int(dst >= 32)
            while True:
                while releases and releases[0][0] < d:
                    _, b, p = heapq.heappop(releases)
                    rat.release(b, p)
                if rat.can_allocate(dst):
                    break
                pending = [r[0] for r in releases if r[1] == bank]
                if not pending:
                    if st["finalized"] >= len(ent_members):
                        raise RenameError("free list exhausted with nothing in flight")
                    finalize()
                    continue
                d = min(pending) + 1
                cause = "rename_stall"

        join = (st["open"] and not st["closed"] and ent_disp[-1] == d and len(ent_members[-1]) < CMAX)
        if not join:
            st["open"] = False
            k = len(ent_members)
            if k >= ROB:
                blocker = ent_members[k - ROB]
                settle(blocker[-1])
                b = ent_retire[k - ROB] + 1
                if b > d:
                    d = b
                    slow = max(blocker, key=done_at.__getitem__)
                    cause = cause_at[slow] or "scoreboard_full"
            ent_disp.append(d)
            ent_members.append([])
            st["open"] = True
            st["closed"] = False
            events["rob_write"] += 1
        ent_members[-1].append(i)
        if closes_entry(fu, is_ctl):
            st["closed"] = True

        if d != last_disp:
            gap = d - last_disp - 1
            if gap > 0:
                stalls.add(cause, gap)
            stalls.busy += 1
            last_disp = d
            ndisp = 1
        else:
            ndisp += 1
        disp_at[i] = d

        # ---- rename sources, then the destination
        src_ready = d + 1
        icause = ""
        for s in ins.srcs:
            ks = key(s)
            a = ready_at.get(ks, 0)
            if a > src_ready:
                src_ready = a
                icause = "cache_miss" if ks in miss_regs else "raw_dependency"
        base_ready = d + 1
        if fu in _STORES and ins.rs1:
            base_ready = max(base_ready, ready_at.get(key(ins.rs1), 0))
        if dst >= 0:
            new, old = rat.allocate(dst)
            prev_map[i] = (int(dst >= 32), old)
            events["rename"] += 1

        # ---- issue and execute
        if fu in _STORES:
            # the address half issues once the base register is ready
            t = cal["lsu"].reserve(base_ready)
            store_addr_ready = max(store_addr_ready, t)
            done = max(t, src_ready) + 1
            store_fill.append(hier.access(rec.mem_vaddr, "store", rec.mem_bytes, now=t).ready)
            mem_bytes += rec.mem_bytes
            pending_stores.append((rec.mem_vaddr, rec.mem_bytes, done, len(store_idx)))
            if len(pending_stores) > SQ + 8:
                del pending_stores[0]
            store_idx.append(i)
        elif fu in _LOADS:
            if store_addr_ready > src_ready:
                src_ready = store_addr_ready
                icause = "raw_dependency"
            t = cal["lsu"].reserve(src_ready)
            addr, nb = rec.mem_vaddr, rec.mem_bytes
            mem_bytes += nb
            done = None
            t_mem = t
            for sa, sb, sready, sk in reversed(pending_stores):
                if sa < addr + nb and addr < sa + sb:
                    if sk < len(store_free) and store_free[sk] <= t:
                        break
                    if sa == addr and sb >= nb:
                        done = max(t + dhit, sready + 1)
                    else:
                        settle(store_idx[sk])
                        t_mem = max(t, store_free[sk])
                    break
            if done is None:
                resp = hier.access(addr, "load", nb, now=t_mem)
                done = resp.ready
                if resp.level is not Level.L1_HIT:
                    icause = "cache_miss"
            load_idx.append(i)
        elif fu is FuClass.DIV:
            t = max(src_ready, div_free)
            done = t + lat[fu]
            div_free = done
        elif fu is FuClass.FP_DIV:
            t = cal["fpu"].reserve(max(src_ready, fdiv_free))
            done = t + lat[fu]
            fdiv_free = done
        else:
            pool = ("mul" if fu is FuClass.MUL else "bru" if fu is FuClass.BRU
                    else "fpu" if fu.is_fpu else "alu")
            t = cal[pool].reserve(src_ready)
            done = t + lat[fu]
        if t > src_ready and not icause:
            icause = "structural_fu"
        done_at[i] = done
        cause_at[i] = icause
        if dst >= 0:
            kd = key(dst)
            ready_at[kd] = done
            if icause == "cache_miss" and fu in _LOADS:
                miss_regs.add(kd)
            else:
                miss_regs.discard(kd)
        if log is not None:
            log.append((t, rec.seq, fu.value))
        seq_hash.update(rec.seq.to_bytes(8, "little"))

        # ---- control flow
        if is_ctl:
            res = suite.resolve(rec)
            if res.mispredicted:
                redirect = done + penalty - FD
                redirect_cause = "mispredict_redirect"
                group_open = False
            elif res.bubbles and not from_lb:
                redirect = fcyc + 1 + res.bubbles
                redirect_cause = "fetch_starve"
        _count(events, fu)

        if i & 4095 == 4095:
            for c in cal.values():
                c.prune(d)

    while st["finalized"] < len(ent_members):
        finalize()

    cycles = max(st["last_ret"] + 1, st["drain_end"]) if n else 0
    if n:
        stalls.drain += cycles - (last_disp + 1)
    rob_occ = _occupancy(ent_disp, [r + 1 for r in ent_retire], cycles)
    inflight = _occupancy(disp_at, [r + 1 for r in retire_at], cycles)
    lq_occ = _occupancy([disp_at[j] for j in load_idx], [retire_at[j] + 1 for j in load_idx], cycles)
    sq_occ = _occupancy([disp_at[j] for j in store_idx], store_free, cycles)
    groups = [tuple(stream[j].seq for j in m) for m in ent_members] if issue_log else None
    return _metrics(cfg.name, cycles, n, suite, hier, stalls, st["peak"], mem_bytes, events,
                    seq_hash.hexdigest(), memory, log, {},
                    rob_occupancy=rob_occ, inflight_occupancy=inflight, lsu_occupancy={"load": lq_occ, "store": sq_occ},
                    rob_groups=groups)
