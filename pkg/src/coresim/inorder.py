"""Timing model for the 6-stage in-order cores (scalar and dual-issue).

The model replays a golden retirement stream in program order and assigns
each instruction a fetch, issue, completion and commit cycle. Every bound on
the issue cycle (fetch, operands, WAW, scoreboard, LSU queues, unpipelined
units, pairing rules) is tracked with the cause that produced it, so idle
issue cycles can be attributed in the stall breakdown.
"""
from __future__ import annotations

import hashlib
from typing import NamedTuple, Sequence

from .config import InOrderConfig
from .golden import Memory, RetireRecord
from .isa import FuClass, Instr
from .memhier import Level, MemoryHierarchy
from .metrics import RunMetrics, StallBreakdown
from .predictors import BimodalBht, Btb, PredictorSuite, Ras, TwoLevelBht


class StreamMismatch(RuntimeError):
    pass


class IssueDecision(NamedTuple):
    legal: bool
    reason: str | None


_UNIT = {
    FuClass.ALU: "alu", FuClass.MUL: "mul", FuClass.DIV: "div", FuClass.BRU: "bru",
    FuClass.LOAD: "load", FuClass.FP_LOAD: "load", FuClass.STORE: "store", FuClass.FP_STORE: "store",
    FuClass.FP_ALU: "fpu", FuClass.FP_MUL: "fpu", FuClass.FP_DIV: "fpu",
    FuClass.CSR: "csr", FuClass.SYSTEM: "csr",
}
_FP_CLASSES = frozenset({FuClass.FP_ALU, FuClass.FP_MUL, FuClass.FP_DIV, FuClass.FP_LOAD, FuClass.FP_STORE})
_LOADS = frozenset({FuClass.LOAD, FuClass.FP_LOAD})
_STORES = frozenset({FuClass.STORE, FuClass.FP_STORE})


def build_suite(cfg: InOrderConfig) -> PredictorSuite:
    if cfg.predictor == "twolevel":
        bht = TwoLevelBht(cfg.bht_entries, cfg.bht_history)
    else:
        bht = BimodalBht(cfg.bht_entries)
    return PredictorSuite(bht, Btb(cfg.btb_entries, 1), Ras(cfg.ras_entries))


def issue_pair_legal(first: Instr, second: Instr, cfg: InOrderConfig,
                     fpu_writeback_conflict: bool = False) -> IssueDecision:
    """Can ``second`` issue in the same cycle as ``first``, the older instruction?

    ``fpu_writeback_conflict`` says whether an FPU result is due on the shared
    writeback port in the cycle a second-ALU op would write back.
    """
    if cfg.issue_width < 2:
        return IssueDecision(False, "issue_width")
    f1, f2 = first.fu_class, second.fu_class
    if first.dst >= 0 and first.dst in second.srcs:
        if not (cfg.alu_forwarding_enabled and f1 is FuClass.ALU and f2 is FuClass.ALU):
            return IssueDecision(False, "raw_dependency")
    if first.dst >= 0 and first.dst == second.dst and not cfg.renaming_enabled:
        return IssueDecision(False, "waw_dependency")
    if (f1 is FuClass.FP_STORE and f2.is_fpu) or (f2 is FuClass.FP_STORE and f1.is_fpu):
        return IssueDecision(False, "fp_store_fpu_conflict")
    if not cfg.fpu_dual_issue_enabled and (f1 in _FP_CLASSES or f2 in _FP_CLASSES):
        return IssueDecision(False, "fpu_single_issue")
    u1, u2 = _UNIT[f1], _UNIT[f2]
    if u1 == "csr" or u2 == "csr":
        return IssueDecision(False, "structural_fu")
    if u1 == u2 and not (u1 == "alu" and cfg.n_alu >= 2):
        return IssueDecision(False, "structural_fu")
    if (u1 == "alu" and u2 == "alu" and cfg.alu_shares_fpu_wb and fpu_writeback_conflict):
        return IssueDecision(False, "structural_wb_port")
    return IssueDecision(True, None)


def apply_branch(rec: RetireRecord, suite: PredictorSuite, mispredict_penalty: int) -> int:
    """Consult then train the predictors on one control transfer; returns the penalty."""
    res = suite.resolve(rec)
    return mispredict_penalty if res.mispredicted else res.bubbles


def _ifetch(hier, pc, width, line, now):
    off = pc % line
    if off + width <= line:
        return hier.access(pc, "ifetch", width, now=now)
    first = hier.access(pc, "ifetch", line - off, now=now)
    second = hier.access(pc - off + line, "ifetch", width - (line - off), now=now)
    return second if second.ready > first.ready else first


def simulate(cfg: InOrderConfig, stream: Sequence[RetireRecord], hier: MemoryHierarchy | None = None, *,
             memory: Memory | None = None, issue_log: bool = False,
             suite: PredictorSuite | None = None) -> RunMetrics:
    """Replay ``stream`` on the in-order core described by ``cfg``.

    ``memory``, when given, receives every store as it drains from the store
    queue, so its digest can be compared with the functional model's.
    """
    hier = hier if hier is not None else MemoryHierarchy(cfg.mem)
    suite = suite if suite is not None else build_suite(cfg)
    lat = cfg.fu_latency
    W = cfg.issue_width
    FB = cfg.fetch_bytes_per_cycle
    FD = cfg.frontend_depth
    IB = cfg.instr_buffer_entries
    SB = cfg.scoreboard_entries
    CW = cfg.commit_width
    LQ, SQ = cfg.load_q, cfg.store_q
    penalty = cfg.mispredict_penalty
    iline = cfg.mem.icache.line
    ihit = cfg.mem.icache.hit_latency
    dhit = cfg.mem.dcache.hit_latency
    renaming = cfg.renaming_enabled
    fwd = cfg.alu_forwarding_enabled and W > 1
    alu_lat = lat[FuClass.ALU]
    ALU = FuClass.ALU

    n = len(stream)
    issue_at = [0] * n
    commit_at = [0] * n
    avail = [0] * 64
    prod = [-1] * 64
    prod_fu: list = [None] * 64
    prod_miss = [False] * 64
    load_done: list[int] = []
    store_done: list[int] = []
    pending_stores: list[tuple[int, int, int]] = []  # (addr, bytes, drained_at)
    fpu_wb: set[int] = set()
    stalls = StallBreakdown()
    blocks: dict[str, int] = {}
    log = [] if issue_log else None
    events = dict.fromkeys(("fetch", "decode", "alu_op", "mul_op", "div_op", "fp_op", "rob_write", "rename"), 0)
    seq_hash = hashlib.sha1()

    fcyc = -1
    fblock = -1
    group_open = False
    last_iline = -1
    redirect = 0
    redirect_cause = "fetch_starve"
    last_issue = -1
    slots = 0
    prev_ins = None
    last_commit = -1
    ncommit = 0
    peak = 0
    drain_free = 0
    div_free = 0
    fdiv_free = 0
    mem_bytes = 0
    expect_seq = stream[0].seq if n else 0

    for i, rec in enumerate(stream):
        if rec.seq != expect_seq:
            raise StreamMismatch(f"record {i} has seq {rec.seq}, expected {expect_seq}")
        expect_seq += 1
        ins = rec.instr
        fu = ins.fu_class
        pc = rec.pc

        # ---- fetch
        if group_open and pc // FB == fblock and pc % FB + ins.width <= FB:
            cand = fcyc
        else:
            cand = fcyc + 1
        fcause = "fetch_starve"
        if cand < redirect:
            cand = redirect
            fcause = redirect_cause
        if i >= IB and cand < issue_at[i - IB]:
            cand = issue_at[i - IB]
            fcause = "fetch_starve"
        new_group = cand != fcyc or not group_open
        if new_group:
            fcyc = cand
            fblock = pc // FB
            group_open = True
        line = pc // iline
        if new_group or line != last_iline:
            resp = _ifetch(hier, pc, ins.width, iline, fcyc)
            events["fetch"] += 1
            last_iline = line
            if resp.latency > ihit:
                # the miss holds this and every later fetch group
                fcyc += resp.latency - ihit
                fcause = "cache_miss"
        ready = fcyc + FD
        if ins.is_control and rec.taken:
            group_open = False

        # ---- issue bounds
        t = ready
        cause = fcause
        if last_issue > t:
            t = last_issue
        for s in ins.srcs:
            a = avail[s]
            if fwd and fu is ALU and prod[s] == i - 1 and prod_fu[s] is ALU and a == last_issue + alu_lat:
                a = last_issue
            if a > t:
                t = a
                cause = "cache_miss" if prod_miss[s] else "raw_dependency"
        d = ins.dst
        if d >= 0 and not renaming and avail[d] > t:
            t = avail[d]
            cause = "waw_dependency"
        if i >= SB and commit_at[i - SB] + 1 > t:
            t = commit_at[i - SB] + 1
            cause = "scoreboard_full"
        if fu in _LOADS:
            k = len(load_done)
            if k >= LQ and load_done[k - LQ] > t:
                t = load_done[k - LQ]
                cause = "lsu_full"
        elif fu in _STORES:
            k = len(store_done)
            if k >= SQ and store_done[k - SQ] > t:
                t = store_done[k - SQ]
                cause = "lsu_full"
        elif fu is FuClass.DIV and div_free > t:
            t = div_free
            cause = "structural_fu"
        elif fu is FuClass.FP_DIV and fdiv_free > t:
            t = fdiv_free
            cause = "structural_fu"

        # ---- pairing with the previous instruction
        if t == last_issue:
            if slots >= W:
                t += 1
                blocks["issue_width"] = blocks.get("issue_width", 0) + 1
            else:
                dec = issue_pair_legal(prev_ins, ins, cfg, (t + alu_lat) in fpu_wb)
                if not dec.legal:
                    t += 1
                    blocks[dec.reason] = blocks.get(dec.reason, 0) + 1

        if t != last_issue:
            gap = t - last_issue - 1
            if gap > 0:
                stalls.add(cause, gap)
            stalls.busy += 1
            last_issue = t
            slots = 1
        else:
            slots += 1
        issue_at[i] = t
        prev_ins = ins
        if log is not None:
            log.append((t, rec.seq, fu.value))

        # ---- execute
        miss = False
        if fu in _LOADS:
            addr, nb = rec.mem_vaddr, rec.mem_bytes
            mem_bytes += nb
            done = None
            t_mem = t
            for sa, sb, sdone in reversed(pending_stores):
                if sdone > t and sa < addr + nb and addr < sa + sb:
                    if sa == addr and sb >= nb:
                        done = t + dhit
                    else:
                        t_mem = sdone
                    break
            if done is None:
                resp = hier.access(addr, "load", nb, now=t_mem)
                done = resp.ready
                miss = resp.level is not Level.L1_HIT
            load_done.append(done)
        elif fu in _STORES:
            done = t + 1
            mem_bytes += rec.mem_bytes
        else:
            done = t + lat[fu]
            if fu is FuClass.DIV:
                div_free = done
            elif fu is FuClass.FP_DIV:
                fdiv_free = done
        if fu.is_fpu:
            fpu_wb.add(done)
            if len(fpu_wb) > 256:
                fpu_wb = {c for c in fpu_wb if c > t}
        if d >= 0:
            avail[d] = done
            prod[d] = i
            prod_fu[d] = fu
            prod_miss[d] = miss
            if renaming:
                events["rename"] += 1

        # ---- commit (in order, commit_width per cycle)
        c = done if done > last_commit else last_commit
        if c == last_commit and ncommit >= CW:
            c += 1
        if c != last_commit:
            last_commit = c
            ncommit = 1
        else:
            ncommit += 1
        if ncommit > peak:
            peak = ncommit
        commit_at[i] = c
        seq_hash.update(rec.seq.to_bytes(8, "little"))

        if fu in _STORES:
            ds = c + 1 if c + 1 > drain_free else drain_free
            resp = hier.access(rec.mem_vaddr, "store", rec.mem_bytes, now=ds)
            drain_free = resp.ready
            store_done.append(resp.ready)
            pending_stores.append((rec.mem_vaddr, rec.mem_bytes, resp.ready))
            if len(pending_stores) > SQ + 4:
                del pending_stores[0]
            if memory is not None:
                memory.write(rec.mem_vaddr, rec.mem_bytes, rec.store_data)

        # ---- control flow
        if ins.is_control:
            res = suite.resolve(rec)
            if res.mispredicted:
                redirect = t + 1 + penalty - FD
                redirect_cause = "mispredict_redirect"
                group_open = False
            elif res.bubbles:
                redirect = fcyc + 1 + res.bubbles
                redirect_cause = "fetch_starve"

        _count(events, fu)
        events["rob_write"] += 1

    cycles = max(last_commit + 1, drain_free) if n else 0
    if n:
        stalls.drain += cycles - (last_issue + 1)
    return _metrics(cfg.name, cycles, n, suite, hier, stalls, peak, mem_bytes, events,
                    seq_hash.hexdigest(), memory, log, blocks)


def _count(events, fu):
    events["decode"] += 1
    if fu is FuClass.ALU or fu is FuClass.BRU:
        events["alu_op"] += 1
    elif fu is FuClass.MUL:
        events["mul_op"] += 1
    elif fu is FuClass.DIV:
        events["div_op"] += 1
    elif fu.is_fpu:
        events["fp_op"] += 1


def _metrics(name, cycles, n, suite, hier, stalls, peak, mem_bytes, events, seq_digest, memory, log,
             blocks, **extra) -> RunMetrics:
    st = suite.stats
    caches = hier.snapshot_stats()
    ev = dict(events)
    ev["l1_access"] = caches["icache"]["accesses"] + caches["dcache"]["accesses"]
    ev["llc_access"] = caches["llc"]["accesses"]
    ev["mem_access"] = caches["memory"]["reads"] + caches["memory"]["writes"]
    branch = {"count": st.control, "conditional": st.branches, "mispredicts": st.mispredicts,
              "conditional_mispredicts": st.branch_mispredicts, "return_mispredicts": st.return_mispredicts,
              "btb_misses": st.btb_misses, "rate": st.rate}
    caches["issue_blocks"] = dict(sorted(blocks.items()))
    return RunMetrics(
        core=name, cycles=cycles, retired=n, branch=branch, caches=caches, stalls=stalls,
        peak_retire_per_cycle=peak, mem_bytes=mem_bytes, events=ev,
        vipt_retries=caches["dcache"]["retries"] + caches["icache"]["retries"],
        seq_digest=seq_digest, memory_digest=memory.digest() if memory is not None else "",
        issue_log=log, **extra)
