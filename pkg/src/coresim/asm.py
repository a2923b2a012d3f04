"""A small two-pass text assembler over the supported instruction subset.

Used by the kernel generators and the tests::

    a = Assembler(base=0x1000)
    a("li a0, 10")
    a.label("loop")
    a("addi a0, a0, -1")
    a("bnez a0, loop")
    a.halt()
    prog = a.program()
"""
from __future__ import annotations

import re

from .golden import Program
from .isa import OPS, Op, OperandOutOfRange, UnsupportedMnemonic, encode, sext

ABI = {
    "zero": 0, "ra": 1, "sp": 2, "gp": 3, "tp": 4, "t0": 5, "t1": 6, "t2": 7,
    "s0": 8, "fp": 8, "s1": 9, "a0": 10, "a1": 11, "a2": 12, "a3": 13, "a4": 14,
    "a5": 15, "a6": 16, "a7": 17, "s2": 18, "s3": 19, "s4": 20, "s5": 21, "s6": 22,
    "s7": 23, "s8": 24, "s9": 25, "s10": 26, "s11": 27, "t3": 28, "t4": 29, "t5": 30, "t6": 31,
}
_FABI = {f"ft{i}": i for i in range(8)}
_FABI.update({"fs0": 8, "fs1": 9})
_FABI.update({f"fa{i}": 10 + i for i in range(8)})
_FABI.update({f"fs{i}": 16 + i for i in range(2, 12)})
_FABI.update({f"ft{i}": 20 + i for i in range(8, 12)})

_MEMREF = re.compile(r"^(-?\w+)?\((\w+)\)$")


class AsmError(ValueError):
    pass


def xreg(name: str | int) -> int:
    if isinstance(name, int):
        return name
    name = name.strip()
    if name in ABI:
        return ABI[name]
    if re.fullmatch(r"x\d+", name) and int(name[1:]) < 32:
        return int(name[1:])
    raise AsmError(f"bad integer register {name!r}")


def freg(name: str | int) -> int:
    if isinstance(name, int):
        return name
    name = name.strip()
    if name in _FABI:
        return _FABI[name]
    if re.fullmatch(r"f\d+", name) and int(name[1:]) < 32:
        return int(name[1:])
    raise AsmError(f"bad FP register {name!r}")


def _li_seq(rd: int, v: int) -> list[tuple]:
    """Instruction tuples materialising the 64-bit constant ``v`` in ``rd``."""
    v = sext(v, 64)
    if -2048 <= v < 2048:
        return [("addi", rd, 0, 0, v)]
    if -(1 << 31) <= v < (1 << 31):
        hi = (v + 0x800) >> 12
        lo = v - (hi << 12)
        seq = [("lui", rd, 0, 0, sext(hi << 12, 32))]
        if lo:
            seq.append(("addiw", rd, rd, 0, lo))
        return seq
    lo = sext(v & 0xFFF, 12)
    hi = (v - lo) >> 12
    shift = 12
    while hi and hi % 2 == 0 and not -(1 << 31) <= hi < (1 << 31):
        hi >>= 1
        shift += 1
    seq = _li_seq(rd, hi) + [("slli", rd, rd, 0, shift)]
    if lo:
        seq.append(("addi", rd, rd, 0, lo))
    return seq


class Assembler:
    def __init__(self, base: int = 0x1000):
        self.base = base
        self.items: list = []  # (addr, kind, payload)
        self.labels: dict[str, int] = {}
        self.data: list[tuple[int, bytes]] = []
        self.pc = base

    # -- layout ---------------------------------------------------------------
    def label(self, name: str):
        if name in self.labels:
            raise AsmError(f"duplicate label {name!r}")
        self.labels[name] = self.pc

    def align(self, n: int):
        while self.pc % n:
            self._put(("c.addi", 0, 0, 0, 0), 2)

    def _put(self, item, width):
        self.items.append((self.pc, item))
        self.pc += width

    def add_data(self, addr: int, blob: bytes):
        self.data.append((addr, bytes(blob)))

    # -- emission -------------------------------------------------------------
    def __call__(self, line: str):
        line = line.split("#", 1)[0].strip()
        if not line:
            return
        if line.endswith(":"):
            self.label(line[:-1].strip())
            return
        parts = line.split(None, 1)
        m = parts[0].lower()
        args = [a.strip() for a in parts[1].split(",")] if len(parts) > 1 else []
        self._emit(m, args)

    def halt(self):
        self("li a7, 0")
        self("ecall")

    def _emit(self, m: str, a: list[str]):
        # pseudo-instructions first
        if m == "nop":
            return self._put(("addi", 0, 0, 0, 0), 4)
        if m == "li":
            for t in _li_seq(xreg(a[0]), int(a[1], 0)):
                self._put(t, 4)
            return
        if m == "la":
            return self._put(("la", xreg(a[0]), a[1]), 8)
        if m == "mv":
            return self._put(("addi", xreg(a[0]), xreg(a[1]), 0, 0), 4)
        if m == "not":
            return self._put(("xori", xreg(a[0]), xreg(a[1]), 0, -1), 4)
        if m == "neg":
            return self._put(("sub", xreg(a[0]), 0, xreg(a[1]), 0), 4)
        if m == "j":
            return self._put(("jal", 0, 0, 0, a[0]), 4)
        if m == "jal" and len(a) == 1:
            return self._put(("jal", 1, 0, 0, a[0]), 4)
        if m == "call":
            return self._put(("jal", 1, 0, 0, a[0]), 4)
        if m == "ret":
            return self._put(("jalr", 0, 1, 0, 0), 4)
        if m == "jr":
            return self._put(("jalr", 0, xreg(a[0]), 0, 0), 4)
        if m in ("beqz", "bnez", "bltz", "bgez"):
            real = {"beqz": "beq", "bnez": "bne", "bltz": "blt", "bgez": "bge"}[m]
            return self._put((real, 0, xreg(a[0]), 0, a[1]), 4)
        if m in ("bgt", "ble", "bgtu", "bleu"):
            real = {"bgt": "blt", "ble": "bge", "bgtu": "bltu", "bleu": "bgeu"}[m]
            return self._put((real, 0, xreg(a[1]), xreg(a[0]), a[2]), 4)
        if m == "rdcycle":
            return self._put(("csrrs", xreg(a[0]), 0, 0, 0xC00), 4)
        if m == "rdinstret":
            return self._put(("csrrs", xreg(a[0]), 0, 0, 0xC02), 4)
        if m.startswith("c."):
            return self._put(self._parse_c(m, a), 2)
        try:
            op = Op(m)
        except ValueError:
            raise UnsupportedMnemonic(m) from None
        self._put(self._parse(op, a), 4)

    def _parse(self, op: Op, a: list[str]):
        info = OPS[op]
        fmt = info.fmt
        reg = {"x": xreg, "f": freg, None: None}
        m = op.value
        if fmt in ("R", "FR"):
            return (m, reg[info.rd](a[0]), reg[info.rs1](a[1]), reg[info.rs2](a[2]), 0)
        if fmt == "FR1":
            return (m, reg[info.rd](a[0]), reg[info.rs1](a[1]), 0, 0)
        if fmt == "R4":
            return (m, freg(a[0]), freg(a[1]), freg(a[2]), 0, freg(a[3]))
        if fmt in ("SH5", "SH6"):
            return (m, xreg(a[0]), xreg(a[1]), 0, int(a[2], 0))
        if fmt == "I":
            if info.fu.is_mem or op is Op.JALR and _MEMREF.match(a[-1]):
                off, base = self._memref(a[1])
                return (m, reg[info.rd](a[0]), base, 0, off)
            return (m, xreg(a[0]), xreg(a[1]), 0, int(a[2], 0))
        if fmt == "S":
            off, base = self._memref(a[1])
            return (m, 0, base, reg[info.rs2](a[0]), off)
        if fmt == "B":
            return (m, 0, xreg(a[0]), xreg(a[1]), a[2])
        if fmt == "U":
            return (m, xreg(a[0]), 0, 0, int(a[1], 0) << 12)
        if fmt == "J":
            return (m, xreg(a[0]), 0, 0, a[1])
        if fmt in ("FENCE", "SYS"):
            return (m, 0, 0, 0, 0)
        if fmt == "CSR":
            return (m, xreg(a[0]), xreg(a[2]), 0, int(a[1], 0))
        raise AsmError(f"cannot parse {m}")  # pragma: no cover

    def _memref(self, s: str):
        mm = _MEMREF.match(s.replace(" ", ""))
        if not mm:
            raise AsmError(f"bad memory operand {s!r}")
        return int(mm.group(1) or "0", 0), xreg(mm.group(2))

    def _parse_c(self, m: str, a: list[str]):
        if m in ("c.li", "c.addi"):
            return (m, xreg(a[0]), 0, 0, int(a[1], 0))
        if m in ("c.mv", "c.add"):
            return (m, xreg(a[0]), 0, xreg(a[1]), 0)
        if m in ("c.jr", "c.jalr"):
            return (m, 0, xreg(a[0]), 0, 0)
        if m in ("c.lw", "c.ld"):
            off, base = self._memref(a[1])
            return (m, xreg(a[0]), base, 0, off)
        if m in ("c.sw", "c.sd"):
            off, base = self._memref(a[1])
            return (m, 0, base, xreg(a[0]), off)
        if m in ("c.beqz", "c.bnez"):
            return (m, 0, xreg(a[0]), 0, a[1])
        if m == "c.j":
            return (m, 0, 0, 0, a[0])
        raise UnsupportedMnemonic(m)

    # -- second pass ----------------------------------------------------------
    def _target(self, imm, pc):
        if isinstance(imm, str):
            if imm in self.labels:
                return self.labels[imm] - pc
            try:
                return int(imm, 0)
            except ValueError:
                raise AsmError(f"undefined label {imm!r}") from None
        return imm

    def words(self) -> list[tuple[int, int, int]]:
        """(address, raw, width) for every emitted instruction."""
        out = []
        for pc, item in self.items:
            if item[0] == "la":
                _, rd, sym = item
                addr = self.labels[sym] if sym in self.labels else int(sym, 0)
                if not 0 <= addr < (1 << 31) - 0x800:
                    raise OperandOutOfRange(f"la target 0x{addr:x} beyond 31-bit range")
                hi = (addr + 0x800) >> 12
                lo = addr - (hi << 12)
                out.append((pc, encode("lui", rd=rd, imm=sext(hi << 12, 32)), 4))
                out.append((pc + 4, encode("addi", rd=rd, rs1=rd, imm=lo), 4))
                continue
            m, rd, rs1, rs2, imm, *rest = item
            imm = self._target(imm, pc)
            raw = encode(m, rd=rd, rs1=rs1, rs2=rs2, imm=imm, rs3=rest[0] if rest else 0)
            out.append((pc, raw, 2 if m.startswith("c.") else 4))
        return out

    def code(self) -> bytes:
        buf = bytearray(self.pc - self.base)
        for pc, raw, width in self.words():
            buf[pc - self.base:pc - self.base + width] = raw.to_bytes(width, "little")
        return bytes(buf)

    def program(self, name: str = "", entry: int | None = None, expected: dict | None = None) -> Program:
        if entry is None:
            entry = self.labels.get("_start", self.base)
        return Program(self.base, self.code(), entry, list(self.data), name, dict(expected or {}))
