"""RV64 instruction subset: decoding, encoding and functional-unit classification.

Supported: RV64I, M, the compressed forms used by the built-in assembler,
and a minimal slice of D (loads/stores, add/sub/mul/div/fmadd, moves and
i64<->f64 conversions).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field


class IsaError(Exception):
    pass


class UnsupportedEncoding(IsaError):
    def __init__(self, raw: int, why: str = ""):
        self.raw = raw
        super().__init__(f"unsupported encoding 0x{raw:08x}" + (f" ({why})" if why else ""))


class IllegalInstruction(IsaError):
    def __init__(self, raw: int = 0, pc: int | None = None):
        self.raw = raw
        self.pc = pc
        where = f" at pc=0x{pc:x}" if pc is not None else ""
        super().__init__(f"illegal instruction 0x{raw:08x}{where}")


class OperandOutOfRange(IsaError, ValueError):
    pass


class UnsupportedMnemonic(IsaError, KeyError):
    def __str__(self):
        return f"unsupported mnemonic {self.args[0]!r}"


class FuClass(enum.Enum):
    ALU = "alu"
    MUL = "mul"
    DIV = "div"
    BRU = "bru"
    LOAD = "load"
    STORE = "store"
    FP_ALU = "fp_alu"
    FP_MUL = "fp_mul"
    FP_DIV = "fp_div"
    FP_LOAD = "fp_load"
    FP_STORE = "fp_store"
    CSR = "csr"
    SYSTEM = "system"

    @property
    def is_fpu(self) -> bool:
        return self in (FuClass.FP_ALU, FuClass.FP_MUL, FuClass.FP_DIV)

    @property
    def is_mem(self) -> bool:
        return self in _MEM_CLASSES


_MEM_CLASSES = frozenset({FuClass.LOAD, FuClass.STORE, FuClass.FP_LOAD, FuClass.FP_STORE})


@dataclass(frozen=True)
class IsaSubset:
    i: bool = True
    m: bool = True
    c: bool = True
    d: bool = True

    def __post_init__(self):
        if (self.d or self.c or self.m) and not self.i:
            raise ValueError("M, C and D extensions require the base I set")


RV64IMCD = IsaSubset()
RV64I = IsaSubset(m=False, c=False, d=False)


class Op(enum.Enum):
    """Mnemonic kinds. The value is the assembler mnemonic."""

    LUI = "lui"
    AUIPC = "auipc"
    JAL = "jal"
    JALR = "jalr"
    BEQ = "beq"
    BNE = "bne"
    BLT = "blt"
    BGE = "bge"
    BLTU = "bltu"
    BGEU = "bgeu"
    LB = "lb"
    LH = "lh"
    LW = "lw"
    LD = "ld"
    LBU = "lbu"
    LHU = "lhu"
    LWU = "lwu"
    SB = "sb"
    SH = "sh"
    SW = "sw"
    SD = "sd"
    ADDI = "addi"
    SLTI = "slti"
    SLTIU = "sltiu"
    XORI = "xori"
    ORI = "ori"
    ANDI = "andi"
    SLLI = "slli"
    SRLI = "srli"
    SRAI = "srai"
    ADD = "add"
    SUB = "sub"
    SLL = "sll"
    SLT = "slt"
    SLTU = "sltu"
    XOR = "xor"
    SRL = "srl"
    SRA = "sra"
    OR = "or"
    AND = "and"
    ADDIW = "addiw"
    SLLIW = "slliw"
    SRLIW = "srliw"
    SRAIW = "sraiw"
    ADDW = "addw"
    SUBW = "subw"
    SLLW = "sllw"
    SRLW = "srlw"
    SRAW = "sraw"
    FENCE = "fence"
    ECALL = "ecall"
    EBREAK = "ebreak"
    CSRRS = "csrrs"
    MUL = "mul"
    MULH = "mulh"
    MULHSU = "mulhsu"
    MULHU = "mulhu"
    DIV = "div"
    DIVU = "divu"
    REM = "rem"
    REMU = "remu"
    MULW = "mulw"
    DIVW = "divw"
    DIVUW = "divuw"
    REMW = "remw"
    REMUW = "remuw"
    FLD = "fld"
    FSD = "fsd"
    FADD_D = "fadd.d"
    FSUB_D = "fsub.d"
    FMUL_D = "fmul.d"
    FDIV_D = "fdiv.d"
    FMADD_D = "fmadd.d"
    FMV_X_D = "fmv.x.d"
    FMV_D_X = "fmv.d.x"
    FCVT_D_L = "fcvt.d.l"
    FCVT_L_D = "fcvt.l.d"


@dataclass(frozen=True)
class OpInfo:
    fmt: str
    opcode: int
    funct3: int | None
    funct7: int | None
    fu: FuClass
    # register file of each operand: "x", "f" or None when unused
    rd: str | None
    rs1: str | None
    rs2: str | None = None
    rs3: str | None = None
    ext: str = "i"
    mem_bytes: int = 0


_A = FuClass.ALU


def _tbl():
    t = {}

    def add(op, *a, **kw):
        t[op] = OpInfo(*a, **kw)

    add(Op.LUI, "U", 0x37, None, None, _A, "x", None)
    add(Op.AUIPC, "U", 0x17, None, None, _A, "x", None)
    add(Op.JAL, "J", 0x6F, None, None, FuClass.BRU, "x", None)
    add(Op.JALR, "I", 0x67, 0, None, FuClass.BRU, "x", "x")
    for op, f3 in ((Op.BEQ, 0), (Op.BNE, 1), (Op.BLT, 4), (Op.BGE, 5), (Op.BLTU, 6), (Op.BGEU, 7)):
        add(op, "B", 0x63, f3, None, FuClass.BRU, None, "x", "x")
    for op, f3, n in ((Op.LB, 0, 1), (Op.LH, 1, 2), (Op.LW, 2, 4), (Op.LD, 3, 8),
                      (Op.LBU, 4, 1), (Op.LHU, 5, 2), (Op.LWU, 6, 4)):
        add(op, "I", 0x03, f3, None, FuClass.LOAD, "x", "x", mem_bytes=n)
    for op, f3, n in ((Op.SB, 0, 1), (Op.SH, 1, 2), (Op.SW, 2, 4), (Op.SD, 3, 8)):
        add(op, "S", 0x23, f3, None, FuClass.STORE, None, "x", "x", mem_bytes=n)
    for op, f3 in ((Op.ADDI, 0), (Op.SLTI, 2), (Op.SLTIU, 3), (Op.XORI, 4), (Op.ORI, 6), (Op.ANDI, 7)):
        add(op, "I", 0x13, f3, None, _A, "x", "x")
    add(Op.SLLI, "SH6", 0x13, 1, 0x00, _A, "x", "x")
    add(Op.SRLI, "SH6", 0x13, 5, 0x00, _A, "x", "x")
    add(Op.SRAI, "SH6", 0x13, 5, 0x20, _A, "x", "x")
    for op, f3, f7 in ((Op.ADD, 0, 0), (Op.SUB, 0, 0x20), (Op.SLL, 1, 0), (Op.SLT, 2, 0),
                       (Op.SLTU, 3, 0), (Op.XOR, 4, 0), (Op.SRL, 5, 0), (Op.SRA, 5, 0x20),
                       (Op.OR, 6, 0), (Op.AND, 7, 0)):
        add(op, "R", 0x33, f3, f7, _A, "x", "x", "x")
    add(Op.ADDIW, "I", 0x1B, 0, None, _A, "x", "x")
    add(Op.SLLIW, "SH5", 0x1B, 1, 0x00, _A, "x", "x")
    add(Op.SRLIW, "SH5", 0x1B, 5, 0x00, _A, "x", "x")
    add(Op.SRAIW, "SH5", 0x1B, 5, 0x20, _A, "x", "x")
    for op, f3, f7 in ((Op.ADDW, 0, 0), (Op.SUBW, 0, 0x20), (Op.SLLW, 1, 0),
                       (Op.SRLW, 5, 0), (Op.SRAW, 5, 0x20)):
        add(op, "R", 0x3B, f3, f7, _A, "x", "x", "x")
    add(Op.FENCE, "FENCE", 0x0F, 0, None, _A, None, None)
    add(Op.ECALL, "SYS", 0x73, 0, None, FuClass.SYSTEM, None, None)
    add(Op.EBREAK, "SYS", 0x73, 0, None, FuClass.SYSTEM, None, None)
    add(Op.CSRRS, "CSR", 0x73, 2, None, FuClass.CSR, "x", "x")
    for op, f3, fu in ((Op.MUL, 0, FuClass.MUL), (Op.MULH, 1, FuClass.MUL), (Op.MULHSU, 2, FuClass.MUL),
                       (Op.MULHU, 3, FuClass.MUL), (Op.DIV, 4, FuClass.DIV), (Op.DIVU, 5, FuClass.DIV),
                       (Op.REM, 6, FuClass.DIV), (Op.REMU, 7, FuClass.DIV)):
        add(op, "R", 0x33, f3, 0x01, fu, "x", "x", "x", ext="m")
    for op, f3, fu in ((Op.MULW, 0, FuClass.MUL), (Op.DIVW, 4, FuClass.DIV), (Op.DIVUW, 5, FuClass.DIV),
                       (Op.REMW, 6, FuClass.DIV), (Op.REMUW, 7, FuClass.DIV)):
        add(op, "R", 0x3B, f3, 0x01, fu, "x", "x", "x", ext="m")
    add(Op.FLD, "I", 0x07, 3, None, FuClass.FP_LOAD, "f", "x", ext="d", mem_bytes=8)
    add(Op.FSD, "S", 0x27, 3, None, FuClass.FP_STORE, None, "x", "f", ext="d", mem_bytes=8)
    add(Op.FADD_D, "FR", 0x53, None, 0x01, FuClass.FP_ALU, "f", "f", "f", ext="d")
    add(Op.FSUB_D, "FR", 0x53, None, 0x05, FuClass.FP_ALU, "f", "f", "f", ext="d")
    add(Op.FMUL_D, "FR", 0x53, None, 0x09, FuClass.FP_MUL, "f", "f", "f", ext="d")
    add(Op.FDIV_D, "FR", 0x53, None, 0x0D, FuClass.FP_DIV, "f", "f", "f", ext="d")
    add(Op.FMADD_D, "R4", 0x43, None, None, FuClass.FP_MUL, "f", "f", "f", "f", ext="d")
    add(Op.FMV_X_D, "FR1", 0x53, 0, 0x71, FuClass.FP_ALU, "x", "f", ext="d")
    add(Op.FMV_D_X, "FR1", 0x53, 0, 0x79, FuClass.FP_ALU, "f", "x", ext="d")
    add(Op.FCVT_D_L, "FR1", 0x53, None, 0x69, FuClass.FP_ALU, "f", "x", ext="d")
    add(Op.FCVT_L_D, "FR1", 0x53, None, 0x61, FuClass.FP_ALU, "x", "f", ext="d")
    return t


OPS: dict[Op, OpInfo] = _tbl()

_BRANCHES = frozenset({Op.BEQ, Op.BNE, Op.BLT, Op.BGE, Op.BLTU, Op.BGEU})
_LINK = (1, 5)

CSR_CYCLE = 0xC00
CSR_TIME = 0xC01
CSR_INSTRET = 0xC02
_CSRS = (CSR_CYCLE, CSR_TIME, CSR_INSTRET)

# rs2 field value selecting the 64-bit integer format in fcvt
_FCVT_L = 2
_RM_DYN = 0b111


@dataclass(frozen=True, slots=True)
class Instr:
    raw: int
    op: Op
    rd: int = 0
    rs1: int = 0
    rs2: int = 0
    rs3: int = 0
    imm: int = 0
    fu_class: FuClass = FuClass.ALU
    is_compressed: bool = False
    width: int = 4
    # unified register ids (x0..x31 -> 0..31, f0..f31 -> 32..63); -1 when absent
    dst: int = field(default=-1, compare=False)
    srcs: tuple = field(default=(), compare=False)

    def __post_init__(self):
        for r in (self.rd, self.rs1, self.rs2, self.rs3):
            if not 0 <= r <= 31:
                raise OperandOutOfRange(f"register index {r} out of range")
        info = OPS[self.op]
        dst = -1
        if info.rd == "x" and self.rd != 0:
            dst = self.rd
        elif info.rd == "f":
            dst = 32 + self.rd
        srcs = []
        for kind, r in ((info.rs1, self.rs1), (info.rs2, self.rs2), (info.rs3, self.rs3)):
            if kind == "x" and r != 0:
                srcs.append(r)
            elif kind == "f":
                srcs.append(32 + r)
        object.__setattr__(self, "dst", dst)
        object.__setattr__(self, "srcs", tuple(srcs))

    @property
    def mnemonic(self) -> str:
        return self.op.value

    @property
    def mem_bytes(self) -> int:
        return OPS[self.op].mem_bytes

    @property
    def is_branch(self) -> bool:
        return self.op in _BRANCHES

    @property
    def is_jump(self) -> bool:
        return self.op is Op.JAL or self.op is Op.JALR

    @property
    def is_control(self) -> bool:
        return self.fu_class is FuClass.BRU

    @property
    def is_call(self) -> bool:
        return self.is_jump and self.rd in _LINK

    @property
    def is_return(self) -> bool:
        return self.op is Op.JALR and self.rd == 0 and self.rs1 in _LINK

    def __str__(self):
        info = OPS[self.op]
        regs = []
        if info.rd:
            regs.append(f"{info.rd}{self.rd}")
        for kind, r in ((info.rs1, self.rs1), (info.rs2, self.rs2), (info.rs3, self.rs3)):
            if kind:
                regs.append(f"{kind}{r}")
        tail = f" imm={self.imm}" if info.fmt not in ("R", "FR", "FR1", "R4") else ""
        c = "c." if self.is_compressed else ""
        return f"{c}{self.mnemonic} {', '.join(regs)}{tail}"


def classify(instr: Instr) -> FuClass:
    return OPS[instr.op].fu


# -- bit helpers --------------------------------------------------------------

def sext(value: int, bits: int) -> int:
    value &= (1 << bits) - 1
    return value - (1 << bits) if value >> (bits - 1) else value


def _bits(x: int, hi: int, lo: int) -> int:
    return (x >> lo) & ((1 << (hi - lo + 1)) - 1)


def _imm_i(w):
    return sext(w >> 20, 12)


def _imm_s(w):
    return sext((_bits(w, 31, 25) << 5) | _bits(w, 11, 7), 12)


def _imm_b(w):
    v = (_bits(w, 31, 31) << 12) | (_bits(w, 7, 7) << 11) | (_bits(w, 30, 25) << 5) | (_bits(w, 11, 8) << 1)
    return sext(v, 13)


def _imm_u(w):
    return sext(w & 0xFFFFF000, 32)


def _imm_j(w):
    v = (_bits(w, 31, 31) << 20) | (_bits(w, 19, 12) << 12) | (_bits(w, 20, 20) << 11) | (_bits(w, 30, 21) << 1)
    return sext(v, 21)


# -- decoding ------------------------------------------------------------------

def _build_decode_keys():
    keys = {}
    for op, info in OPS.items():
        if info.fmt in ("R", "SH5"):
            keys[(info.opcode, info.funct3, info.funct7)] = op
        elif info.fmt == "SH6":
            keys[(info.opcode, info.funct3, info.funct7 >> 1)] = op
        elif info.fmt in ("FR", "FR1"):
            keys[(info.opcode, info.funct7)] = op
        elif info.fmt in ("I", "S", "B", "FENCE", "CSR"):
            keys[(info.opcode, info.funct3)] = op
    return keys


_DKEYS = _build_decode_keys()


def _make(raw, op, subset, rd=0, rs1=0, rs2=0, rs3=0, imm=0, compressed=False):
    info = OPS[op]
    if not getattr(subset, info.ext):
        raise UnsupportedEncoding(raw, f"{op.value} needs extension {info.ext.upper()}")
    return Instr(raw, op, rd, rs1, rs2, rs3, imm, info.fu, compressed, 2 if compressed else 4)


def decode(raw: int, subset: IsaSubset = RV64IMCD) -> Instr:
    """Decode one instruction word.

    Compressed encodings (low two bits != 0b11) are read from the low
    16 bits and expanded to their base-ISA operation, keeping ``width=2``.
    """
    if raw & 0xFFFF == 0:
        raise IllegalInstruction(raw)
    if raw & 3 != 3:
        if not subset.c:
            raise UnsupportedEncoding(raw & 0xFFFF, "compressed instructions disabled")
        return _decode_c(raw & 0xFFFF, subset)
    w = raw & 0xFFFFFFFF
    opc = w & 0x7F
    rd, f3, rs1, rs2, f7 = _bits(w, 11, 7), _bits(w, 14, 12), _bits(w, 19, 15), _bits(w, 24, 20), w >> 25

    if opc in (0x37, 0x17):
        return _make(w, Op.LUI if opc == 0x37 else Op.AUIPC, subset, rd=rd, imm=_imm_u(w))
    if opc == 0x6F:
        return _make(w, Op.JAL, subset, rd=rd, imm=_imm_j(w))
    if opc == 0x73:
        if w == 0x00000073:
            return _make(w, Op.ECALL, subset)
        if w == 0x00100073:
            return _make(w, Op.EBREAK, subset)
        csr = w >> 20
        if f3 == 2 and csr in _CSRS:
            return _make(w, Op.CSRRS, subset, rd=rd, rs1=rs1, imm=csr)
        raise UnsupportedEncoding(w, "system/csr")
    if opc in (0x43, 0x53) and f3 in (5, 6) and not (opc == 0x53 and f7 in (0x71, 0x79)):
        raise UnsupportedEncoding(w, "reserved rounding mode")
    if opc == 0x43:
        if _bits(w, 26, 25) != 1:
            raise UnsupportedEncoding(w, "fmadd format")
        return _make(w, Op.FMADD_D, subset, rd=rd, rs1=rs1, rs2=rs2, rs3=w >> 27)
    if opc == 0x53:
        op = _DKEYS.get((opc, f7))
        if op is None:
            raise UnsupportedEncoding(w)
        info = OPS[op]
        if info.fmt == "FR1":
            want = 0 if op in (Op.FMV_X_D, Op.FMV_D_X) else _FCVT_L
            if rs2 != want or (info.funct3 is not None and f3 != info.funct3):
                raise UnsupportedEncoding(w)
            return _make(w, op, subset, rd=rd, rs1=rs1)
        return _make(w, op, subset, rd=rd, rs1=rs1, rs2=rs2)
    if opc in (0x33, 0x3B):
        op = _DKEYS.get((opc, f3, f7))
        if op is None:
            raise UnsupportedEncoding(w)
        return _make(w, op, subset, rd=rd, rs1=rs1, rs2=rs2)
    if opc == 0x13 and f3 in (1, 5):
        op = _DKEYS.get((opc, f3, f7 >> 1))
        if op is None:
            raise UnsupportedEncoding(w)
        return _make(w, op, subset, rd=rd, rs1=rs1, imm=_bits(w, 25, 20))
    if opc == 0x1B and f3 in (1, 5):
        op = _DKEYS.get((opc, f3, f7))
        if op is None:
            raise UnsupportedEncoding(w)
        return _make(w, op, subset, rd=rd, rs1=rs1, imm=rs2)
    op = _DKEYS.get((opc, f3))
    if op is None:
        raise UnsupportedEncoding(w)
    fmt = OPS[op].fmt
    if fmt == "I":
        return _make(w, op, subset, rd=rd, rs1=rs1, imm=_imm_i(w))
    if fmt == "S":
        return _make(w, op, subset, rs1=rs1, rs2=rs2, imm=_imm_s(w))
    if fmt == "B":
        return _make(w, op, subset, rs1=rs1, rs2=rs2, imm=_imm_b(w))
    if fmt == "FENCE":
        return _make(w, op, subset)
    raise UnsupportedEncoding(w)


def _decode_c(h: int, subset: IsaSubset) -> Instr:
    quad = h & 3
    f3 = h >> 13
    rdp = 8 + _bits(h, 4, 2)
    rs1p = 8 + _bits(h, 9, 7)

    def mk(op, **kw):
        return _make(h, op, subset, compressed=True, **kw)

    if quad == 0:
        if f3 in (2, 6):  # c.lw / c.sw
            off = (_bits(h, 12, 10) << 3) | (_bits(h, 6, 6) << 2) | (_bits(h, 5, 5) << 6)
            if f3 == 2:
                return mk(Op.LW, rd=rdp, rs1=rs1p, imm=off)
            return mk(Op.SW, rs1=rs1p, rs2=rdp, imm=off)
        if f3 in (3, 7):  # c.ld / c.sd
            off = (_bits(h, 12, 10) << 3) | (_bits(h, 6, 5) << 6)
            if f3 == 3:
                return mk(Op.LD, rd=rdp, rs1=rs1p, imm=off)
            return mk(Op.SD, rs1=rs1p, rs2=rdp, imm=off)
    elif quad == 1:
        rd = _bits(h, 11, 7)
        imm6 = sext((_bits(h, 12, 12) << 5) | _bits(h, 6, 2), 6)
        if f3 == 0:
            return mk(Op.ADDI, rd=rd, rs1=rd, imm=imm6)
        if f3 == 2 and rd != 0:
            return mk(Op.ADDI, rd=rd, rs1=0, imm=imm6)
        if f3 == 5:
            v = ((_bits(h, 12, 12) << 11) | (_bits(h, 11, 11) << 4) | (_bits(h, 10, 9) << 8)
                 | (_bits(h, 8, 8) << 10) | (_bits(h, 7, 7) << 6) | (_bits(h, 6, 6) << 7)
                 | (_bits(h, 5, 3) << 1) | (_bits(h, 2, 2) << 5))
            return mk(Op.JAL, rd=0, imm=sext(v, 12))
        if f3 in (6, 7):
            v = ((_bits(h, 12, 12) << 8) | (_bits(h, 11, 10) << 3) | (_bits(h, 6, 5) << 6)
                 | (_bits(h, 4, 3) << 1) | (_bits(h, 2, 2) << 5))
            return mk(Op.BEQ if f3 == 6 else Op.BNE, rs1=rs1p, rs2=0, imm=sext(v, 9))
    elif quad == 2 and f3 == 4:
        rd = _bits(h, 11, 7)
        rs2 = _bits(h, 6, 2)
        if not _bits(h, 12, 12):
            if rs2 == 0 and rd != 0:
                return mk(Op.JALR, rd=0, rs1=rd, imm=0)
            if rs2 != 0 and rd != 0:
                return mk(Op.ADD, rd=rd, rs1=0, rs2=rs2)
        else:
            if rs2 == 0 and rd != 0:
                return mk(Op.JALR, rd=1, rs1=rd, imm=0)
            if rs2 != 0 and rd != 0:
                return mk(Op.ADD, rd=rd, rs1=rd, rs2=rs2)
    raise UnsupportedEncoding(h, "compressed")


# -- encoding -----------------------------------------------------------------

_BY_NAME = {op.value: op for op in Op}
COMPRESSED_MNEMONICS = ("c.li", "c.mv", "c.add", "c.addi", "c.lw", "c.ld", "c.sw", "c.sd",
                        "c.beqz", "c.bnez", "c.j", "c.jr", "c.jalr")


def _reg(r, name="register"):
    if not isinstance(r, int) or not 0 <= r <= 31:
        raise OperandOutOfRange(f"{name} {r!r} out of range 0..31")
    return r


def _simm(v, bits, align=1, what="immediate"):
    lo, hi = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
    if not lo <= v <= hi or v % align:
        raise OperandOutOfRange(f"{what} {v} does not fit a {bits}-bit signed field (align {align})")
    return v & ((1 << bits) - 1)


def _uimm(v, bits, align=1, what="immediate"):
    if not 0 <= v < (1 << bits) or v % align:
        raise OperandOutOfRange(f"{what} {v} does not fit a {bits}-bit unsigned field (align {align})")
    return v


def encode(mnemonic: str | Op, rd: int = 0, rs1: int = 0, rs2: int = 0, rs3: int = 0, imm: int = 0) -> int:
    """Assemble one instruction into its raw encoding.

    ``mnemonic`` is either an :class:`Op` or its assembler name; the
    compressed forms in ``COMPRESSED_MNEMONICS`` are also accepted and return
    a 16-bit value. U-type immediates are the full (shifted) value.
    """
    if isinstance(mnemonic, str) and mnemonic.startswith("c."):
        return _encode_c(mnemonic, rd, rs1, rs2, imm)
    op = mnemonic if isinstance(mnemonic, Op) else _BY_NAME.get(mnemonic)
    if op is None:
        raise UnsupportedMnemonic(mnemonic)
    for name, r in (("rd", rd), ("rs1", rs1), ("rs2", rs2), ("rs3", rs3)):
        _reg(r, name)
    info = OPS[op]
    opc, f3, f7 = info.opcode, info.funct3, info.funct7
    fmt = info.fmt
    if fmt == "R":
        return (f7 << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | opc
    if fmt == "I":
        return (_simm(imm, 12) << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | opc
    if fmt == "SH6":
        return (f7 << 25) | (_uimm(imm, 6, what="shamt") << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | opc
    if fmt == "SH5":
        return (f7 << 25) | (_uimm(imm, 5, what="shamt") << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | opc
    if fmt == "S":
        v = _simm(imm, 12)
        return ((v >> 5) << 25) | (rs2 << 20) | (rs1 << 15) | (f3 << 12) | ((v & 0x1F) << 7) | opc
    if fmt == "B":
        v = _simm(imm, 13, 2, "branch offset")
        return ((((v >> 12) & 1) << 31) | (((v >> 5) & 0x3F) << 25) | (rs2 << 20) | (rs1 << 15)
                | (f3 << 12) | (((v >> 1) & 0xF) << 8) | (((v >> 11) & 1) << 7) | opc)
    if fmt == "U":
        if imm % 4096 or not -(1 << 31) <= imm < (1 << 31):
            raise OperandOutOfRange(f"U-type immediate {imm:#x} must be a 4 KiB multiple in signed 32-bit range")
        return (imm & 0xFFFFF000) | (rd << 7) | opc
    if fmt == "J":
        v = _simm(imm, 21, 2, "jump offset")
        return ((((v >> 20) & 1) << 31) | (((v >> 1) & 0x3FF) << 21) | (((v >> 11) & 1) << 20)
                | (((v >> 12) & 0xFF) << 12) | (rd << 7) | opc)
    if fmt == "FENCE":
        return 0x0FF0000F
    if fmt == "SYS":
        return 0x00000073 if op is Op.ECALL else 0x00100073
    if fmt == "CSR":
        if imm not in _CSRS:
            raise OperandOutOfRange(f"csr {imm:#x} not supported")
        return (imm << 20) | (rs1 << 15) | (f3 << 12) | (rd << 7) | opc
    if fmt == "FR":
        return (f7 << 25) | (rs2 << 20) | (rs1 << 15) | (_RM_DYN << 12) | (rd << 7) | opc
    if fmt == "FR1":
        sel = 0 if op in (Op.FMV_X_D, Op.FMV_D_X) else _FCVT_L
        fn3 = 0 if f3 == 0 else _RM_DYN
        return (f7 << 25) | (sel << 20) | (rs1 << 15) | (fn3 << 12) | (rd << 7) | opc
    if fmt == "R4":
        return (rs3 << 27) | (1 << 25) | (rs2 << 20) | (rs1 << 15) | (_RM_DYN << 12) | (rd << 7) | opc
    raise UnsupportedMnemonic(mnemonic)  # pragma: no cover


def _creg(r, name):
    if not 8 <= r <= 15:
        raise OperandOutOfRange(f"{name} x{r} not addressable by compressed encoding (x8..x15)")
    return r - 8


def _nz(r, name):
    _reg(r, name)
    if r == 0:
        raise OperandOutOfRange(f"{name} must be nonzero")
    return r


def _encode_c(m: str, rd: int, rs1: int, rs2: int, imm: int) -> int:
    if m in ("c.li", "c.addi"):
        if m == "c.li":
            _nz(rd, "rd")
        else:
            _reg(rd, "rd")
        v = _simm(imm, 6)
        f3 = 2 if m == "c.li" else 0
        return (f3 << 13) | (((v >> 5) & 1) << 12) | (rd << 7) | ((v & 0x1F) << 2) | 1
    if m in ("c.mv", "c.add"):
        _nz(rd, "rd")
        _nz(rs2, "rs2")
        return (4 << 13) | ((1 if m == "c.add" else 0) << 12) | (rd << 7) | (rs2 << 2) | 2
    if m in ("c.jr", "c.jalr"):
        _nz(rs1, "rs1")
        return (4 << 13) | ((1 if m == "c.jalr" else 0) << 12) | (rs1 << 7) | 2
    if m in ("c.lw", "c.sw"):
        v = _uimm(imm, 7, 4, "offset")
        r = _creg(rd if m == "c.lw" else rs2, "rd" if m == "c.lw" else "rs2")
        f3 = 2 if m == "c.lw" else 6
        return ((f3 << 13) | (((v >> 3) & 7) << 10) | (_creg(rs1, "rs1") << 7) | (((v >> 2) & 1) << 6)
                | (((v >> 6) & 1) << 5) | (r << 2))
    if m in ("c.ld", "c.sd"):
        v = _uimm(imm, 8, 8, "offset")
        r = _creg(rd if m == "c.ld" else rs2, "rd" if m == "c.ld" else "rs2")
        f3 = 3 if m == "c.ld" else 7
        return (f3 << 13) | (((v >> 3) & 7) << 10) | (_creg(rs1, "rs1") << 7) | (((v >> 6) & 3) << 5) | (r << 2)
    if m in ("c.beqz", "c.bnez"):
        v = _simm(imm, 9, 2, "branch offset")
        f3 = 6 if m == "c.beqz" else 7
        return ((f3 << 13) | (((v >> 8) & 1) << 12) | (((v >> 3) & 3) << 10) | (_creg(rs1, "rs1") << 7)
                | (((v >> 6) & 3) << 5) | (((v >> 1) & 3) << 3) | (((v >> 5) & 1) << 2) | 1)
    if m == "c.j":
        v = _simm(imm, 12, 2, "jump offset")
        return ((5 << 13) | (((v >> 11) & 1) << 12) | (((v >> 4) & 1) << 11) | (((v >> 8) & 3) << 9)
                | (((v >> 10) & 1) << 8) | (((v >> 6) & 1) << 7) | (((v >> 7) & 1) << 6)
                | (((v >> 1) & 7) << 3) | (((v >> 5) & 1) << 2) | 1)
    raise UnsupportedMnemonic(m)
