"""Functional RV64 model that executes a program and emits its retirement stream.

Timing models never execute instructions themselves; they replay the
``RetireRecord`` stream produced here.
"""
from __future__ import annotations

import hashlib
import math
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

from .isa import FuClass, IllegalInstruction, Instr, IsaError, IsaSubset, Op, RV64IMCD, decode

MASK64 = (1 << 64) - 1
PAGE_BYTES = 4096
DEFAULT_STACK_TOP = 0x3FFF_F000


class GoldenError(Exception):
    """Base class for functional-model failures; carries the partial stream."""

    records: list = []
    state: "ArchState | None" = None


class MisalignedAccess(GoldenError):
    def __init__(self, vaddr: int, pc: int):
        self.vaddr = vaddr
        self.pc = pc
        super().__init__(f"misaligned access to 0x{vaddr:x} at pc=0x{pc:x}")


class ProgramIllegalInstruction(GoldenError, IllegalInstruction):
    def __init__(self, pc: int, raw: int, why: str = ""):
        self.pc = pc
        self.raw = raw
        Exception.__init__(self, f"illegal instruction 0x{raw:08x} at pc=0x{pc:x}" + (f": {why}" if why else ""))


class InstructionBudgetExceeded(GoldenError):
    def __init__(self, budget: int):
        self.budget = budget
        super().__init__(f"program did not halt within {budget} instructions")


class ProgramError(ValueError):
    pass


def u64(v: int) -> int:
    return v & MASK64


def s64(v: int) -> int:
    v &= MASK64
    return v - (1 << 64) if v >> 63 else v


def s32(v: int) -> int:
    v &= 0xFFFFFFFF
    return v - (1 << 32) if v >> 31 else v


class Memory:
    """Sparse little-endian byte memory backed by 4 KiB pages."""

    def __init__(self):
        self.pages: dict[int, bytearray] = {}

    def _page(self, pno: int) -> bytearray:
        p = self.pages.get(pno)
        if p is None:
            p = self.pages[pno] = bytearray(PAGE_BYTES)
        return p

    def read(self, addr: int, n: int) -> int:
        off = addr & (PAGE_BYTES - 1)
        if off + n <= PAGE_BYTES:
            p = self.pages.get(addr >> 12)
            if p is None:
                return 0
            return int.from_bytes(p[off:off + n], "little")
        return int.from_bytes(self.read_bytes(addr, n), "little")

    def write(self, addr: int, n: int, value: int):
        off = addr & (PAGE_BYTES - 1)
        data = (value & ((1 << (8 * n)) - 1)).to_bytes(n, "little")
        if off + n <= PAGE_BYTES:
            self._page(addr >> 12)[off:off + n] = data
        else:
            self.write_bytes(addr, data)

    def read_bytes(self, addr: int, n: int) -> bytes:
        return bytes(self.read(addr + i, 1) for i in range(n))

    def write_bytes(self, addr: int, data: bytes):
        i = 0
        while i < len(data):
            off = (addr + i) & (PAGE_BYTES - 1)
            chunk = min(len(data) - i, PAGE_BYTES - off)
            self._page((addr + i) >> 12)[off:off + chunk] = data[i:i + chunk]
            i += chunk

    def copy(self) -> "Memory":
        m = Memory()
        m.pages = {k: bytearray(v) for k, v in self.pages.items()}
        return m

    def digest(self) -> str:
        h = hashlib.sha256()
        for pno in sorted(self.pages):
            page = self.pages[pno]
            if any(page):
                h.update(pno.to_bytes(8, "little"))
                h.update(page)
        return h.hexdigest()


@dataclass
class Program:
    base: int
    code: bytes
    entry: int | None = None
    data: list[tuple[int, bytes]] = field(default_factory=list)
    name: str = ""
    # host-side expected results, filled in by kernel generators
    expected: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.entry is None:
            self.entry = self.base
        if not self.base <= self.entry < self.base + len(self.code):
            raise ProgramError(f"entry 0x{self.entry:x} outside code segment")
        segs = sorted([(self.base, len(self.code))] + [(a, len(b)) for a, b in self.data])
        for (a0, n0), (a1, _) in zip(segs, segs[1:]):
            if a0 + n0 > a1:
                raise ProgramError(f"segments overlap at 0x{a1:x}")

    def memory_image(self) -> Memory:
        m = Memory()
        m.write_bytes(self.base, self.code)
        for addr, blob in self.data:
            m.write_bytes(addr, blob)
        return m


def parse_flat(text: str) -> Program:
    """Parse the flat-binary text format: ``base=<hex> entry=<hex>`` then hex bytes."""
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ProgramError("empty program file")
    hdr = dict(kv.split("=", 1) for kv in lines[0].split())
    try:
        base = int(hdr["base"], 16)
        entry = int(hdr.get("entry", hdr["base"]), 16)
    except (KeyError, ValueError) as e:
        raise ProgramError(f"bad header line {lines[0]!r}") from e
    hexstr = "".join("".join(ln.split()) for ln in lines[1:])
    try:
        code = bytes.fromhex(hexstr)
    except ValueError as e:
        raise ProgramError("bad hex byte stream") from e
    return Program(base, code, entry)


def load_flat(path: str | Path) -> Program:
    return parse_flat(Path(path).read_text())


def dump_flat(program: Program) -> str:
    out = [f"base={program.base:x} entry={program.entry:x}"]
    code = program.code
    for i in range(0, len(code), 16):
        out.append(" ".join(f"{b:02x}" for b in code[i:i + 16]))
    return "\n".join(out) + "\n"


@dataclass(slots=True)
class RetireRecord:
    seq: int
    pc: int
    next_pc: int
    instr: Instr
    taken: bool = False
    mem_vaddr: int = -1
    mem_bytes: int = 0
    store_data: int | None = None

    @property
    def is_branch(self) -> bool:
        return self.instr.is_branch

    @property
    def is_jump(self) -> bool:
        return self.instr.is_jump

    @property
    def is_call(self) -> bool:
        return self.instr.is_call

    @property
    def is_return(self) -> bool:
        return self.instr.is_return

    @property
    def is_store(self) -> bool:
        return self.instr.fu_class in (FuClass.STORE, FuClass.FP_STORE)

    @property
    def store_data_digest(self) -> int | None:
        if self.store_data is None:
            return None
        return zlib.crc32(self.store_data.to_bytes(8, "little")) & 0xFFFF


class ArchState:
    def __init__(self, program: Program | None = None, subset: IsaSubset = RV64IMCD,
                 stack_top: int = DEFAULT_STACK_TOP):
        self.x = [0] * 32
        self.f = [0.0] * 32
        self.mem = program.memory_image() if program else Memory()
        self.pc = program.entry if program else 0
        self.retired = 0
        self.halted = False
        self.subset = subset
        self.x[2] = stack_top
        self._decoded: dict[int, Instr] = {}

    def fetch(self, pc: int) -> Instr:
        ins = self._decoded.get(pc)
        if ins is None:
            if pc & 1:
                raise MisalignedAccess(pc, pc)
            raw = self.mem.read(pc, 2)
            if raw & 3 == 3:
                raw = self.mem.read(pc, 4)
            try:
                ins = decode(raw, self.subset)
            except IsaError as e:
                raise ProgramIllegalInstruction(pc, raw, str(e)) from e
            self._decoded[pc] = ins
        return ins


def _f2b(v: float) -> int:
    return struct.unpack("<Q", struct.pack("<d", v))[0]


def _b2f(v: int) -> float:
    return struct.unpack("<d", struct.pack("<Q", v & MASK64))[0]


def _fcvt_l(v: float) -> int:
    if math.isnan(v):
        return (1 << 63) - 1
    if math.isinf(v):
        return (1 << 63) - 1 if v > 0 else -(1 << 63)
    r = round(v)  # ties to even
    return max(-(1 << 63), min((1 << 63) - 1, r))


def _div(a, b):
    if b == 0:
        return -1
    if a == -(1 << 63) and b == -1:
        return a
    q = abs(a) // abs(b)
    return q if (a < 0) == (b < 0) else -q


def _rem(a, b):
    if b == 0:
        return a
    if a == -(1 << 63) and b == -1:
        return 0
    return a - b * _div(a, b)


def _div32(a, b):
    a, b = s32(a), s32(b)
    if b == 0:
        return -1
    if a == -(1 << 31) and b == -1:
        return a
    q = abs(a) // abs(b)
    return s32(q if (a < 0) == (b < 0) else -q)


def _rem32(a, b):
    a, b = s32(a), s32(b)
    if b == 0:
        return a
    if a == -(1 << 31) and b == -1:
        return 0
    return s32(a - b * _div32(a, b))


# register-register/immediate integer operations: fn(a, b) on signed 64-bit
_INT_OPS = {
    Op.ADD: lambda a, b: a + b, Op.ADDI: lambda a, b: a + b,
    Op.SUB: lambda a, b: a - b,
    Op.XOR: lambda a, b: a ^ b, Op.XORI: lambda a, b: a ^ b,
    Op.OR: lambda a, b: a | b, Op.ORI: lambda a, b: a | b,
    Op.AND: lambda a, b: a & b, Op.ANDI: lambda a, b: a & b,
    Op.SLT: lambda a, b: int(a < b), Op.SLTI: lambda a, b: int(a < b),
    Op.SLTU: lambda a, b: int(u64(a) < u64(b)), Op.SLTIU: lambda a, b: int(u64(a) < u64(b)),
    Op.SLL: lambda a, b: a << (b & 63), Op.SLLI: lambda a, b: a << (b & 63),
    Op.SRL: lambda a, b: u64(a) >> (b & 63), Op.SRLI: lambda a, b: u64(a) >> (b & 63),
    Op.SRA: lambda a, b: a >> (b & 63), Op.SRAI: lambda a, b: a >> (b & 63),
    Op.ADDW: lambda a, b: s32(a + b), Op.ADDIW: lambda a, b: s32(a + b),
    Op.SUBW: lambda a, b: s32(a - b),
    Op.SLLW: lambda a, b: s32(a << (b & 31)), Op.SLLIW: lambda a, b: s32(a << (b & 31)),
    Op.SRLW: lambda a, b: s32((a & 0xFFFFFFFF) >> (b & 31)), Op.SRLIW: lambda a, b: s32((a & 0xFFFFFFFF) >> (b & 31)),
    Op.SRAW: lambda a, b: s32(s32(a) >> (b & 31)), Op.SRAIW: lambda a, b: s32(s32(a) >> (b & 31)),
    Op.MUL: lambda a, b: a * b,
    Op.MULH: lambda a, b: (a * b) >> 64,
    Op.MULHSU: lambda a, b: (a * u64(b)) >> 64,
    Op.MULHU: lambda a, b: (u64(a) * u64(b)) >> 64,
    Op.DIV: _div,
    Op.DIVU: lambda a, b: u64(a) // u64(b) if u64(b) else MASK64,
    Op.REM: _rem,
    Op.REMU: lambda a, b: u64(a) % u64(b) if u64(b) else a,
    Op.MULW: lambda a, b: s32(a * b),
    Op.DIVW: _div32,
    Op.DIVUW: lambda a, b: s32((a & 0xFFFFFFFF) // (b & 0xFFFFFFFF)) if b & 0xFFFFFFFF else -1,
    Op.REMW: _rem32,
    Op.REMUW: lambda a, b: s32((a & 0xFFFFFFFF) % (b & 0xFFFFFFFF)) if b & 0xFFFFFFFF else s32(a),
}
_IMM_FORM = frozenset({Op.ADDI, Op.XORI, Op.ORI, Op.ANDI, Op.SLTI, Op.SLTIU, Op.SLLI, Op.SRLI, Op.SRAI,
                       Op.ADDIW, Op.SLLIW, Op.SRLIW, Op.SRAIW})
_LOAD_SIGNED = {Op.LB: True, Op.LH: True, Op.LW: True, Op.LD: True, Op.LBU: False, Op.LHU: False, Op.LWU: False}
_BRANCH_COND = {
    Op.BEQ: lambda a, b: a == b,
    Op.BNE: lambda a, b: a != b,
    Op.BLT: lambda a, b: a < b,
    Op.BGE: lambda a, b: a >= b,
    Op.BLTU: lambda a, b: u64(a) < u64(b),
    Op.BGEU: lambda a, b: u64(a) >= u64(b),
}
_FP_BIN = {
    Op.FADD_D: lambda a, b: a + b,
    Op.FSUB_D: lambda a, b: a - b,
    Op.FMUL_D: lambda a, b: a * b,
}


def _fdiv(a, b):
    if b == 0.0:
        if a == 0.0 or math.isnan(a):
            return math.nan
        return math.copysign(math.inf, a) * math.copysign(1.0, b)
    return a / b


def step(state: ArchState) -> RetireRecord:
    """Execute one instruction and return its retirement record."""
    if state.halted:
        raise GoldenError("step() on a halted state")
    pc = state.pc
    ins = state.fetch(pc)
    x = state.x
    op = ins.op
    npc = pc + ins.width
    taken = False
    maddr = -1
    mbytes = 0
    sdata = None

    fn = _INT_OPS.get(op)
    if fn is not None:
        b = ins.imm if op in _IMM_FORM else x[ins.rs2]
        if ins.rd:
            x[ins.rd] = s64(fn(x[ins.rs1], b))
    elif op in _BRANCH_COND:
        if _BRANCH_COND[op](x[ins.rs1], x[ins.rs2]):
            npc = u64(pc + ins.imm)
            taken = True
    elif op in _LOAD_SIGNED:
        maddr = u64(x[ins.rs1] + ins.imm)
        mbytes = ins.mem_bytes
        if maddr % mbytes:
            raise MisalignedAccess(maddr, pc)
        v = state.mem.read(maddr, mbytes)
        if _LOAD_SIGNED[op] and v >> (8 * mbytes - 1):
            v -= 1 << (8 * mbytes)
        if ins.rd:
            x[ins.rd] = v
    elif op in (Op.SB, Op.SH, Op.SW, Op.SD, Op.FSD):
        maddr = u64(x[ins.rs1] + ins.imm)
        mbytes = ins.mem_bytes
        if maddr % mbytes:
            raise MisalignedAccess(maddr, pc)
        sdata = (_f2b(state.f[ins.rs2]) if op is Op.FSD else x[ins.rs2]) & ((1 << (8 * mbytes)) - 1)
        state.mem.write(maddr, mbytes, sdata)
    elif op is Op.JAL or op is Op.JALR:
        target = u64(pc + ins.imm) if op is Op.JAL else u64(x[ins.rs1] + ins.imm) & ~1
        if ins.rd:
            x[ins.rd] = s64(npc)
        npc = target
        taken = True
        if target == pc:
            state.halted = True
    elif op is Op.LUI:
        if ins.rd:
            x[ins.rd] = ins.imm
    elif op is Op.AUIPC:
        if ins.rd:
            x[ins.rd] = s64(pc + ins.imm)
    elif op is Op.FLD:
        maddr = u64(x[ins.rs1] + ins.imm)
        mbytes = 8
        if maddr % 8:
            raise MisalignedAccess(maddr, pc)
        state.f[ins.rd] = _b2f(state.mem.read(maddr, 8))
    elif op in _FP_BIN:
        state.f[ins.rd] = _FP_BIN[op](state.f[ins.rs1], state.f[ins.rs2])
    elif op is Op.FDIV_D:
        state.f[ins.rd] = _fdiv(state.f[ins.rs1], state.f[ins.rs2])
    elif op is Op.FMADD_D:
        f = state.f
        f[ins.rd] = f[ins.rs1] * f[ins.rs2] + f[ins.rs3]
    elif op is Op.FMV_X_D:
        if ins.rd:
            x[ins.rd] = s64(_f2b(state.f[ins.rs1]))
    elif op is Op.FMV_D_X:
        state.f[ins.rd] = _b2f(x[ins.rs1])
    elif op is Op.FCVT_D_L:
        state.f[ins.rd] = float(x[ins.rs1])
    elif op is Op.FCVT_L_D:
        if ins.rd:
            x[ins.rd] = _fcvt_l(state.f[ins.rs1])
    elif op is Op.ECALL:
        if x[17] == 0:
            state.halted = True
    elif op is Op.CSRRS:
        if ins.rd:
            x[ins.rd] = state.retired
    elif op is Op.FENCE:
        pass
    else:
        raise ProgramIllegalInstruction(pc, ins.raw, f"{op.value} not executable")

    state.pc = npc
    rec = RetireRecord(state.retired, pc, npc, ins, taken, maddr, mbytes, sdata)
    state.retired += 1
    return rec


def run(program: Program, max_instrs: int = 10_000_000, subset: IsaSubset = RV64IMCD):
    """Run ``program`` until it halts.

    Returns ``(state, records)``. Raises :class:`GoldenError` subclasses on
    illegal instructions, misaligned accesses or an exhausted budget; the
    exception carries ``.state`` and the partial ``.records``.
    """
    state = ArchState(program, subset)
    records = []
    append = records.append
    try:
        while not state.halted:
            if state.retired >= max_instrs:
                raise InstructionBudgetExceeded(max_instrs)
            append(step(state))
    except GoldenError as e:
        e.records = records
        e.state = state
        raise
    return state, records


def store_replay_digest(records, base: Memory | None = None) -> str:
    """Digest of memory after applying only the stores in ``records``."""
    mem = base.copy() if base is not None else Memory()
    for r in records:
        if r.store_data is not None:
            mem.write(r.mem_vaddr, r.mem_bytes, r.store_data)
    return mem.digest()


__all__ = [
    "ArchState", "GoldenError", "IllegalInstruction", "InstructionBudgetExceeded", "Memory",
    "MisalignedAccess", "Program", "ProgramError", "ProgramIllegalInstruction", "RetireRecord",
    "dump_flat", "load_flat", "parse_flat", "run", "step", "store_replay_digest",
]
