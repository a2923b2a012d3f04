"""Built-in microkernel generators and the retire-trace file format.

Every generator returns a :class:`~coresim.golden.Program` whose ``expected``
dict holds the host-computed results:

``regs``
    integer register number -> expected final value (unsigned 64-bit)
``mem``
    list of ``(address, bytes)`` regions expected in final memory

:func:`check_expected` compares a finished :class:`ArchState` against them.
"""
from __future__ import annotations

import random
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .asm import Assembler, xreg
from .golden import ArchState, Program, RetireRecord
from .isa import IsaError, decode

CODE_BASE = 0x1000
DATA_BASE = 0x10_0000
MASK64 = (1 << 64) - 1


class ParameterOutOfRange(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, line: int, msg: str):
        self.line = line
        super().__init__(f"line {line}: {msg}")


class InconsistentControlFlow(ValueError):
    def __init__(self, seq: int, msg: str):
        self.seq = seq
        super().__init__(f"record {seq}: {msg}")


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 1

    def __hash__(self):
        return hash((self.kind, tuple(sorted(self.params.items())), self.seed))


def _require(cond: bool, msg: str):
    if not cond:
        raise ParameterOutOfRange(msg)


def _u64s(values: Iterable[int]) -> bytes:
    return b"".join(struct.pack("<Q", v & MASK64) for v in values)


def _f64s(values: Iterable[float]) -> bytes:
    return b"".join(struct.pack("<d", v) for v in values)


# ---------------------------------------------------------------------------
# kernels


def matmul_int(n: int = 32, passes: int = 1, seed: int = 1) -> Program:
    """C = A x B over int64 (wrapping), inner product unrolled by four."""
    _require(n % 4 == 0 and 4 <= n <= 60, "matmul_int: n must be a multiple of 4 in [4, 60]")
    _require(1 <= passes <= 16, "matmul_int: passes must be in [1, 16]")
    rng = random.Random(seed)
    A = [rng.randrange(-1000, 1000) for _ in range(n * n)]
    B = [rng.randrange(-1000, 1000) for _ in range(n * n)]
    C = [sum(A[i * n + k] * B[k * n + j] for k in range(n)) & MASK64 for i in range(n) for j in range(n)]
    a_addr = DATA_BASE
    b_addr = a_addr + n * n * 8
    c_addr = b_addr + n * n * 8
    row = n * 8
    a = Assembler(CODE_BASE)
    a(f"li s1, {a_addr}")
    a(f"li s2, {b_addr}")
    a(f"li s3, {c_addr}")
    a(f"li s4, {n}")
    a(f"li s11, {passes}")
    a("pass:")
    a("mv a2, s3")
    a("mv a3, s1")
    a("li s5, 0")
    a("iloop:")
    a("li s6, 0")
    a("mv a4, s2")
    a("jloop:")
    a("mv a0, a3")
    a("mv a1, a4")
    a("li s0, 0")
    a(f"li t6, {n // 4}")
    a("kloop:")
    # row loads grouped ahead of column loads
    a("ld t0, 0(a0)")
    a("ld t2, 8(a0)")
    a("ld t4, 16(a0)")
    a("ld a5, 24(a0)")
    a("ld t1, 0(a1)")
    a(f"ld t3, {row}(a1)")
    a("mul t0, t0, t1")
    a(f"ld t5, {2 * row}(a1)")
    a("mul t2, t2, t3")
    a(f"ld a6, {3 * row}(a1)")
    a("mul t4, t4, t5")
    a("add s0, s0, t0")
    a("mul a5, a5, a6")
    a("add s0, s0, t2")
    a("addi a0, a0, 32")
    a(f"addi a1, a1, {4 * row}")
    a("add s0, s0, t4")
    a("addi t6, t6, -1")
    a("add s0, s0, a5")
    a("bnez t6, kloop")
    a("sd s0, 0(a2)")
    a("addi a2, a2, 8")
    a("addi a4, a4, 8")
    a("addi s6, s6, 1")
    a("blt s6, s4, jloop")
    a(f"addi a3, a3, {row}")
    a("addi s5, s5, 1")
    a("blt s5, s4, iloop")
    a("addi s11, s11, -1")
    a("bnez s11, pass")
    a.halt()
    a.add_data(a_addr, _u64s(A))
    a.add_data(b_addr, _u64s(B))
    return a.program(f"matmul_int_n{n}", expected={"mem": [(c_addr, _u64s(C))], "regs": {}})


def seqcopy(size: int = 256 * 1024, seed: int = 1) -> Program:
    """dst[i] = src[i] over ``size`` bytes, eight doublewords per iteration."""
    _require(size % 64 == 0 and 64 <= size <= 4 << 20, "seqcopy: size must be a multiple of 64 in [64, 4 MiB]")
    rng = random.Random(seed)
    words = [rng.getrandbits(64) for _ in range(size // 8)]
    src = DATA_BASE
    dst = src + size + 4096
    a = Assembler(CODE_BASE)
    a(f"li a0, {src}")
    a(f"li a1, {dst}")
    a(f"li t6, {size // 64}")
    a("loop:")
    regs = ["t0", "t1", "t2", "t3", "t4", "t5", "a2", "a3"]
    # pointer bumps are hoisted into the shadow of the first accesses
    for k, r in enumerate(regs):
        a(f"ld {r}, {8 * k - (64 if k >= 2 else 0)}(a0)")
        if k == 1:
            a("addi a0, a0, 64")
            a("addi t6, t6, -1")
    for k, r in enumerate(regs):
        a(f"sd {r}, {8 * k - (64 if k >= 2 else 0)}(a1)")
        if k == 1:
            a("addi a1, a1, 64")
    a("bnez t6, loop")
    a.halt()
    blob = _u64s(words)
    a.add_data(src, blob)
    p = a.program(f"seqcopy_{size}", expected={"mem": [(dst, blob)], "regs": {}})
    p.expected["src"] = src
    p.expected["dst"] = dst
    return p


def sgcopy(size: int = 256 * 1024, seed: int = 1, identity: bool = False) -> Program:
    """dst[idx[i]] = src[idx[i]] through a seeded permutation index array."""
    _require(size % 32 == 0 and 32 <= size <= 4 << 20, "sgcopy: size must be a multiple of 32 in [32, 4 MiB]")
    rng = random.Random(seed)
    n = size // 8
    words = [rng.getrandbits(64) for _ in range(n)]
    perm = list(range(n))
    if not identity:
        rng.shuffle(perm)
    src = DATA_BASE
    dst = src + size + 4096
    idx = dst + size + 4096
    a = Assembler(CODE_BASE)
    a(f"li s1, {src}")
    a(f"li s2, {dst}")
    a(f"li a0, {idx}")
    a(f"li t6, {n // 4}")
    a("loop:")
    offs = ["t0", "t1", "t2", "t3"]
    vals = ["a2", "a3", "a4", "a5"]
    dsts = ["a6", "a7", "s3", "s4"]
    for k, r in enumerate(offs):
        a(f"ld {r}, {8 * k}(a0)")
    for o, d in zip(offs, dsts):
        a(f"add {d}, {o}, s2")
        a(f"add {o}, {o}, s1")
    for o, v in zip(offs, vals):
        a(f"ld {v}, 0({o})")
    for v, d in zip(vals, dsts):
        a(f"sd {v}, 0({d})")
    a("addi a0, a0, 32")
    a("addi t6, t6, -1")
    a("bnez t6, loop")
    a.halt()
    blob = _u64s(words)
    a.add_data(src, blob)
    a.add_data(idx, _u64s(8 * p for p in perm))
    p = a.program(f"sgcopy_{size}", expected={"mem": [(dst, blob)], "regs": {}})
    p.expected["src"] = src
    p.expected["dst"] = dst
    return p


_PATTERNS = ["TN", "TTN", "TNN", "TTTN", "TNNN", "TTNN"]


def _pattern_rate(p: str) -> float:
    return p.count("T") / len(p)


def branchy(n_branches: int = 100_000, taken_rate: float = 0.5, seed: int = 1, sites: int = 8,
            random_sites: int = 2) -> Program:
    """A ladder of data-dependent branches driven by an outcome table in memory.

    Periodic sites repeat a short pattern (period 2 to 4); the random sites
    draw outcomes so that the total taken count hits ``taken_rate`` exactly
    (up to rounding). Only the ladder branches count, not the loop branch.
    """
    _require(1000 <= n_branches <= 2_000_000, "branchy: n_branches must be in [1000, 2e6]")
    _require(0.2 <= taken_rate <= 0.8, "branchy: taken_rate must be in [0.2, 0.8]")
    _require(2 <= sites <= 16 and 1 <= random_sites < sites, "branchy: bad site counts")
    _require(n_branches % sites == 0, "branchy: n_branches must be a multiple of sites")
    rng = random.Random(seed)
    iters = n_branches // sites
    periodic = sites - random_sites
    # periodic patterns whose average rate tracks the request
    by_rate = sorted(_PATTERNS, key=lambda p: (abs(_pattern_rate(p) - taken_rate), p))
    chosen = [rng.choice(by_rate[:3]) for _ in range(periodic)]
    # the random sites can only absorb an error of up to random_sites taken per iteration
    hi = taken_rate * sites
    lo = hi - random_sites
    for _ in range(4 * periodic):
        total = sum(_pattern_rate(p) for p in chosen)
        if total > hi:
            k = max(range(periodic), key=lambda i: _pattern_rate(chosen[i]))
            lower = [p for p in _PATTERNS if _pattern_rate(p) < _pattern_rate(chosen[k])]
            if not lower:
                break
            chosen[k] = max(lower, key=_pattern_rate)
        elif total < lo:
            k = min(range(periodic), key=lambda i: _pattern_rate(chosen[i]))
            higher = [p for p in _PATTERNS if _pattern_rate(p) > _pattern_rate(chosen[k])]
            if not higher:
                break
            chosen[k] = min(higher, key=_pattern_rate)
        else:
            break
    pats = []
    for p in chosen:
        rot = rng.randrange(len(p))
        pats.append(p[rot:] + p[:rot])
    table = [[0] * sites for _ in range(iters)]
    taken_total = 0
    for s, p in enumerate(pats):
        for i in range(iters):
            t = p[i % len(p)] == "T"
            table[i][s] = int(t)
            taken_total += t
    target = round(taken_rate * n_branches)
    slots = iters * random_sites
    need = min(max(target - taken_total, 0), slots)
    bits = [1] * need + [0] * (slots - need)
    rng.shuffle(bits)
    for k, b in enumerate(bits):
        table[k // random_sites][periodic + k % random_sites] = b
    order = list(range(sites))
    rng.shuffle(order)  # interleave periodic and random sites in the ladder
    table = [[row[o] for o in order] for row in table]
    flat = bytes(v for row in table for v in row)
    s0 = sum(s + 1 for row in table for s, v in enumerate(row) if not v) & MASK64

    addr = DATA_BASE
    a = Assembler(CODE_BASE)
    a(f"li a0, {addr}")
    a(f"li t6, {iters}")
    a("li s0, 0")
    a("loop:")
    for s in range(sites):
        a(f"lbu t0, {s}(a0)")
        a(f"bnez t0, skip{s}")
        a(f"addi s0, s0, {s + 1}")
        a(f"skip{s}:")
    a(f"addi a0, a0, {sites}")
    a("addi t6, t6, -1")
    a("bnez t6, loop")
    a.halt()
    a.add_data(addr, flat)
    p = a.program(f"branchy_{n_branches}", expected={"regs": {8: s0}, "mem": []})
    p.expected["site_pcs"] = [a.labels[f"skip{s}"] - 8 for s in range(sites)]
    p.expected["outcomes"] = flat
    p.expected["taken_rate"] = sum(flat) / len(flat)
    return p


def _nbody_oracle(xs, ys, vxs, vys, steps, dt, eps):
    n = len(xs)
    xs, ys, vxs, vys = list(xs), list(ys), list(vxs), list(vys)
    for _ in range(steps):
        for i in range(n):
            ax = 0.0
            ay = 0.0
            for j in range(n):
                dx = xs[j] - xs[i]
                dy = ys[j] - ys[i]
                d2 = dx * dx + dy * dy
                d2 = d2 + eps
                inv = 1.0 / d2
                ax = ax + dx * inv
                ay = ay + dy * inv
            vxs[i] = vxs[i] + ax * dt
            vys[i] = vys[i] + ay * dt
        for i in range(n):
            xs[i] = xs[i] + vxs[i] * dt
            ys[i] = ys[i] + vys[i] * dt
    return xs, ys, vxs, vys


def fp_nbody_like(bodies: int = 64, steps: int = 16, seed: int = 1) -> Program:
    """2-D all-pairs softened attraction in double precision.

    Each pair costs one divide and no square root.
    """
    _require(2 <= bodies <= 256 and 1 <= steps <= 256, "fp_nbody_like: bodies in [2, 256], steps in [1, 256]")
    rng = random.Random(seed)
    xs = [rng.uniform(-1, 1) for _ in range(bodies)]
    ys = [rng.uniform(-1, 1) for _ in range(bodies)]
    vxs = [0.0] * bodies
    vys = [0.0] * bodies
    dt, eps = 0.01, 0.01
    fx, fy, fvx, fvy = _nbody_oracle(xs, ys, vxs, vys, steps, dt, eps)
    X = DATA_BASE
    Y = X + 8 * bodies
    VX = Y + 8 * bodies
    VY = VX + 8 * bodies
    K = VY + 8 * bodies  # constants: dt, eps, 1.0, 0.0
    a = Assembler(CODE_BASE)
    a(f"li s1, {X}")
    a(f"li s2, {Y}")
    a(f"li s3, {VX}")
    a(f"li s4, {VY}")
    a(f"li t0, {K}")
    a("fld fs0, 0(t0)")   # dt
    a("fld fs1, 8(t0)")   # eps
    a("fld fs2, 16(t0)")  # 1.0
    a("fld fs3, 24(t0)")  # 0.0
    a(f"li s5, {steps}")
    a(f"li s6, {8 * bodies}")
    a("step:")
    a("li a0, 0")
    a("iloop:")
    a("add t1, s1, a0")
    a("add t2, s2, a0")
    a("fld fa0, 0(t1)")  # xi
    a("fld fa1, 0(t2)")  # yi
    a("fmv.d.x fa2, zero")  # ax
    a("fmv.d.x fa3, zero")  # ay
    a("li a1, 0")
    a("jloop:")
    a("add t3, s1, a1")
    a("add t4, s2, a1")
    a("fld ft0, 0(t3)")
    a("fld ft1, 0(t4)")
    a("fsub.d ft0, ft0, fa0")
    a("fsub.d ft1, ft1, fa1")
    a("fmul.d ft2, ft0, ft0")
    a("fmul.d ft3, ft1, ft1")
    a("fadd.d ft2, ft2, ft3")
    a("fadd.d ft2, ft2, fs1")
    a("fdiv.d ft4, fs2, ft2")
    a("fmul.d ft0, ft0, ft4")
    a("fmul.d ft1, ft1, ft4")
    a("fadd.d fa2, fa2, ft0")
    a("fadd.d fa3, fa3, ft1")
    a("addi a1, a1, 8")
    a("blt a1, s6, jloop")
    a("add t1, s3, a0")
    a("add t2, s4, a0")
    a("fld ft5, 0(t1)")
    a("fld ft6, 0(t2)")
    a("fmul.d fa2, fa2, fs0")
    a("fmul.d fa3, fa3, fs0")
    a("fadd.d ft5, ft5, fa2")
    a("fadd.d ft6, ft6, fa3")
    a("fsd ft5, 0(t1)")
    a("fsd ft6, 0(t2)")
    a("addi a0, a0, 8")
    a("blt a0, s6, iloop")
    a("li a0, 0")
    a("uloop:")
    a("add t1, s1, a0")
    a("add t2, s2, a0")
    a("add t3, s3, a0")
    a("add t4, s4, a0")
    a("fld ft0, 0(t1)")
    a("fld ft1, 0(t2)")
    a("fld ft2, 0(t3)")
    a("fld ft3, 0(t4)")
    a("fmul.d ft2, ft2, fs0")
    a("fmul.d ft3, ft3, fs0")
    a("fadd.d ft0, ft0, ft2")
    a("fadd.d ft1, ft1, ft3")
    a("fsd ft0, 0(t1)")
    a("fsd ft1, 0(t2)")
    a("addi a0, a0, 8")
    a("blt a0, s6, uloop")
    a("addi s5, s5, -1")
    a("bnez s5, step")
    a.halt()
    a.add_data(X, _f64s(xs))
    a.add_data(Y, _f64s(ys))
    a.add_data(VX, _f64s(vxs))
    a.add_data(VY, _f64s(vys))
    a.add_data(K, _f64s([dt, eps, 1.0, 0.0]))
    return a.program(f"fp_nbody_like_{bodies}x{steps}", expected={
        "regs": {}, "mem": [(X, _f64s(fx)), (Y, _f64s(fy)), (VX, _f64s(fvx)), (VY, _f64s(fvy))]})


def dependency_chain(length: int = 10_000, op: str = "add", seed: int = 1) -> Program:
    """One serial chain of ``op`` (add or mul) instructions, 64 per loop iteration."""
    _require(op in ("add", "mul"), "dependency_chain: op must be add or mul")
    _require(length % 64 == 0 and 64 <= length <= 10_000_000, "dependency_chain: length must be a multiple of 64")
    rng = random.Random(seed)
    k = rng.randrange(3, 1000) | 1
    a = Assembler(CODE_BASE)
    a("li a0, 1")
    a(f"li a1, {k}")
    a(f"li t6, {length // 64}")
    a("loop:")
    for _ in range(64):
        a(f"{op} a0, a0, a1")
    a("addi t6, t6, -1")
    a("bnez t6, loop")
    a.halt()
    v = 1
    for _ in range(length):
        v = (v + k) if op == "add" else (v * k)
        v &= MASK64
    return a.program(f"dependency_chain_{op}_{length}", expected={"regs": {10: v}, "mem": []})


_FREE = ["a0", "a1", "a2", "a3", "a4", "a5", "a6", "s6", "s2", "s3", "s4", "s5"]


def independent_alu(count: int = 10_000, body: int = 100, seed: int = 1) -> Program:
    """``count`` mutually independent ALU ops, ``body`` per loop iteration."""
    _require(8 <= body <= 512 and count % body == 0 and count >= body,
             "independent_alu: count must be a positive multiple of body, body in [8, 512]")
    a = Assembler(CODE_BASE)
    a(f"li t6, {count // body}")
    a("loop:")
    last = {}
    for k in range(body):
        r = _FREE[k % len(_FREE)]
        imm = (k * 7 + seed) % 2000 - 1000
        a(f"addi {r}, zero, {imm}")
        last[r] = imm & MASK64
    a("addi t6, t6, -1")
    a("bnez t6, loop")
    a.halt()
    return a.program(f"independent_alu_{count}", expected={"regs": {xreg(r): v for r, v in last.items()}, "mem": []})


def waw_dense(iterations: int = 500, seed: int = 1) -> Program:
    """Long-latency writes immediately overwritten by short ones (output dependences)."""
    _require(1 <= iterations <= 1_000_000, "waw_dense: iterations must be in [1, 1e6]")
    k = random.Random(seed).randrange(3, 100)
    a = Assembler(CODE_BASE)
    a(f"li a1, {k}")
    a("li a2, 3")
    a(f"li t6, {iterations}")
    a("loop:")
    for r in ("t0", "t1", "t2", "t3", "t4", "t5", "a3", "a4"):
        a(f"mul {r}, a1, a2")
        a(f"addi {r}, a1, 1")
    a("addi t6, t6, -1")
    a("bnez t6, loop")
    a.halt()
    return a.program("waw_dense", expected={"regs": {5: k + 1, 14: k + 1}, "mem": []})


def dependent_pair(iterations: int = 500, seed: int = 1) -> Program:
    """Producer/consumer ALU pairs; each pair also consumes the previous pair's result.

    Without same-cycle ALU forwarding a dual-issue core can only issue one
    instruction per cycle here; with it, each pair issues together.
    """
    _require(1 <= iterations <= 1_000_000, "dependent_pair: iterations must be in [1, 1e6]")
    k = random.Random(seed).randrange(1, 100)
    a = Assembler(CODE_BASE)
    a(f"li t6, {iterations}")
    a(f"li a1, {k}")
    a("li t1, 0")
    a("loop:")
    prev = "t1"
    v = 0
    for p, c in [("t0", "t2"), ("t3", "t4"), ("t5", "a2"), ("a3", "t1")]:
        a(f"addi {p}, {prev}, 1")
        a(f"add {c}, {p}, a1")
        prev = c
    a("addi t6, t6, -1")
    a("bnez t6, loop")
    a.halt()
    final = (4 * (1 + k) * iterations) & MASK64
    return a.program("dependent_pair", expected={"regs": {6: final}, "mem": []})


KERNELS = {
    "matmul_int": matmul_int,
    "seqcopy": seqcopy,
    "sgcopy": sgcopy,
    "branchy": branchy,
    "fp_nbody_like": fp_nbody_like,
    "dependency_chain": dependency_chain,
    "independent_alu": independent_alu,
    "waw_dense": waw_dense,
    "dependent_pair": dependent_pair,
}

COPY_KERNELS = frozenset({"seqcopy", "sgcopy"})


def generate(spec: KernelSpec) -> Program:
    fn = KERNELS.get(spec.kind)
    if fn is None:
        raise ParameterOutOfRange(f"unknown kernel {spec.kind!r} (known: {', '.join(KERNELS)})")
    try:
        return fn(seed=spec.seed, **spec.params)
    except TypeError as e:
        raise ParameterOutOfRange(f"{spec.kind}: {e}") from None


_SETUP_SLACK = 64  # constant materialization before the loops, plus the halt


def instruction_budget(spec: KernelSpec) -> int:
    """Upper bound on the dynamic instruction count of ``generate(spec)``.

    Loop trip counts are exact; the slack covers straight-line setup code.
    Validates parameters by generating the program first.
    """
    p = generate(spec)  # raises on bad parameters
    kw = dict(spec.params)
    kind = spec.kind
    if kind == "matmul_int":
        n, passes = kw.get("n", 32), kw.get("passes", 1)
        loops = passes * (5 + n * (5 + n * (9 + 5 * n)))
    elif kind == "seqcopy":
        loops = 20 * (kw.get("size", 256 * 1024) // 64)
    elif kind == "sgcopy":
        loops = 23 * (kw.get("size", 256 * 1024) // 32)
    elif kind == "branchy":
        # each not-taken ladder branch falls into one extra add
        outcomes = p.expected["outcomes"]
        loops = (len(outcomes) // kw.get("sites", 8)) * (2 * kw.get("sites", 8) + 3) + outcomes.count(0)
    elif kind == "fp_nbody_like":
        n, steps = kw.get("bodies", 64), kw.get("steps", 16)
        loops = steps * (4 + n * (19 + 17 * n) + 16 * n)
    elif kind == "dependency_chain":
        loops = 66 * (kw.get("length", 10_000) // 64)
    elif kind == "independent_alu":
        body = kw.get("body", 100)
        loops = (kw.get("count", 10_000) // body) * (body + 2)
    elif kind == "waw_dense":
        loops = 18 * kw.get("iterations", 500)
    elif kind == "dependent_pair":
        loops = 10 * kw.get("iterations", 500)
    else:  # pragma: no cover - generate() already rejected it
        raise ParameterOutOfRange(kind)
    return loops + _SETUP_SLACK


def check_expected(program: Program, state: ArchState) -> list[str]:
    """Differences between ``state`` and the generator's expected results."""
    errs = []
    for reg, val in program.expected.get("regs", {}).items():
        got = state.x[reg] & MASK64
        if got != val & MASK64:
            errs.append(f"x{reg} = 0x{got:x}, expected 0x{val & MASK64:x}")
    for addr, blob in program.expected.get("mem", []):
        got = state.mem.read_bytes(addr, len(blob))
        if got != blob:
            off = next(i for i in range(len(blob)) if got[i] != blob[i])
            errs.append(f"memory differs at 0x{addr + off:x}")
    return errs


# ---------------------------------------------------------------------------
# trace files: "seq pc raw next_pc [M vaddr bytes S|L]", hex fields


def dump_trace(records: Iterable[RetireRecord]) -> str:
    lines = ["# seq pc raw next_pc [M vaddr bytes S|L]"]
    for r in records:
        s = f"{r.seq:x} {r.pc:x} {r.instr.raw:x} {r.next_pc:x}"
        if r.mem_vaddr >= 0:
            s += f" M {r.mem_vaddr:x} {r.mem_bytes:x} {'S' if r.is_store else 'L'}"
        lines.append(s)
    return "\n".join(lines) + "\n"


def parse_trace(text: str) -> list[RetireRecord]:
    out: list[RetireRecord] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        f = line.split()
        if len(f) not in (4, 8):
            raise ParseError(lineno, f"expected 4 or 8 fields, got {len(f)}")
        try:
            seq, pc, raw, nxt = (int(v, 16) for v in f[:4])
        except ValueError:
            raise ParseError(lineno, "non-hex field") from None
        try:
            ins = decode(raw)
        except IsaError as e:
            raise ParseError(lineno, f"undecodable instruction 0x{raw:x}: {e}") from None
        vaddr, nbytes = -1, 0
        if len(f) == 8:
            if f[4] != "M" or f[7] not in ("S", "L"):
                raise ParseError(lineno, "memory suffix must be 'M <vaddr> <bytes> S|L'")
            try:
                vaddr, nbytes = int(f[5], 16), int(f[6], 16)
            except ValueError:
                raise ParseError(lineno, "non-hex memory field") from None
            if (f[7] == "S") != (ins.fu_class.value in ("store", "fp_store")):
                raise ParseError(lineno, "memory kind does not match the instruction")
        elif ins.fu_class.is_mem:
            raise ParseError(lineno, "memory instruction without an M suffix")
        seq_ok = not out or seq == out[-1].seq + 1
        if not seq_ok:
            raise InconsistentControlFlow(seq, f"sequence number follows {out[-1].seq}")
        if out and out[-1].next_pc != pc:
            raise InconsistentControlFlow(seq, f"pc 0x{pc:x} but previous next_pc 0x{out[-1].next_pc:x}")
        fall = pc + ins.width
        if not ins.is_control and nxt != fall:
            raise InconsistentControlFlow(seq, "non-control instruction changes control flow")
        taken = ins.is_control and (ins.is_jump or nxt != fall)
        out.append(RetireRecord(seq, pc, nxt, ins, taken, vaddr, nbytes, None))
    return out


def load_trace(path: str | Path) -> list[RetireRecord]:
    return parse_trace(Path(path).read_text())
