import math
import random
import struct
import time

import numpy as np
import pytest

from coresim import golden
from coresim.asm import Assembler
from coresim.golden import (ArchState, InstructionBudgetExceeded, Memory, MisalignedAccess, Program, ProgramError,
                            ProgramIllegalInstruction, dump_flat, parse_flat, step, store_replay_digest)
from coresim.isa import encode
from coresim.workloads import DATA_BASE, KernelSpec, generate

M64 = (1 << 64) - 1
BUF = 0x20000


def assemble(src: str, data: dict | None = None) -> Program:
    a = Assembler()
    for line in src.strip().splitlines():
        a(line)
    a.halt()
    for addr, blob in (data or {}).items():
        a.add_data(addr, blob)
    return a.program()


def run_src(src: str, data: dict | None = None, **kw):
    return golden.run(assemble(src, data), **kw)


def u64(v):
    return v & M64


def words(mem: Memory, addr: int, n: int, signed=True) -> list[int]:
    raw = mem.read_bytes(addr, 8 * n)
    return list(struct.unpack(f"<{n}{'q' if signed else 'Q'}", raw))


def pack(vals, fmt="q"):
    return struct.pack(f"<{len(vals)}{fmt}", *vals)


# ---------------------------------------------------------------------------
# Hand-oracled programs. Each returns (program, check(state, records)).

def fib_program(n):
    src = f"""
        li a0, 0
        li a1, 1
        li t0, {n}
    loop:
        beqz t0, done
        add t1, a0, a1
        mv a0, a1
        mv a1, t1
        addi t0, t0, -1
        j loop
    done:
    """

    def oracle():
        a, b = 0, 1
        for _ in range(n):
            a, b = b, a + b
        return u64(a)

    return assemble(src), lambda s, r: s.x[10] & M64 == oracle()


def counted_loop_program(iters):
    # prologue 2 (li, li), body 3 per iteration, halt 2
    src = f"""
        li t0, {iters}
        li t1, 0
    loop:
        addi t1, t1, 2
        addi t0, t0, -1
        bnez t0, loop
    """
    return assemble(src), lambda s, r: len(r) == 2 + 3 * iters + 2 and s.x[6] == 2 * iters


def factorial_program(n):
    src = f"""
        li a0, 1
        li t0, {n}
    loop:
        mul a0, a0, t0
        addi t0, t0, -1
        bnez t0, loop
    """
    return assemble(src), lambda s, r: s.x[10] & M64 == u64(math.factorial(n))


def gcd_program(x, y):
    src = f"""
        li a0, {x}
        li a1, {y}
    loop:
        beqz a1, done
        remu t0, a0, a1
        mv a0, a1
        mv a1, t0
        j loop
    done:
    """
    return assemble(src), lambda s, r: s.x[10] == math.gcd(x, y)


def byte_copy_program(n, seed):
    rng = random.Random(seed)
    blob = bytes(rng.randrange(256) for _ in range(n))
    src = f"""
        li a0, {BUF}
        li a1, {BUF + 0x1000}
        li t0, {n}
    loop:
        lbu t1, 0(a0)
        sb t1, 0(a1)
        addi a0, a0, 1
        addi a1, a1, 1
        addi t0, t0, -1
        bnez t0, loop
    """
    return assemble(src, {BUF: blob}), lambda s, r: s.mem.read_bytes(BUF + 0x1000, n) == blob


def word_copy_program(n, seed):
    rng = random.Random(seed)
    vals = [rng.getrandbits(63) for _ in range(n)]
    src = f"""
        li a0, {BUF}
        li a1, {BUF + 0x2000}
        li t0, {n}
    loop:
        ld t1, 0(a0)
        sd t1, 0(a1)
        addi a0, a0, 8
        addi a1, a1, 8
        addi t0, t0, -1
        bnez t0, loop
    """
    return assemble(src, {BUF: pack(vals)}), lambda s, r: words(s.mem, BUF + 0x2000, n) == vals


def ladder_program(values):
    """Bucket each value by a ladder of signed compares; histogram in memory."""
    edges = [-100, 0, 10, 1000]
    src = f"""
        li a0, {BUF}
        li a1, {BUF + 0x1000}
        li t0, {len(values)}
        li s1, -100
        li s2, 0
        li s3, 10
        li s4, 1000
    loop:
        ld t1, 0(a0)
        li t2, 0
        blt t1, s1, put
        li t2, 1
        blt t1, s2, put
        li t2, 2
        blt t1, s3, put
        li t2, 3
        blt t1, s4, put
        li t2, 4
    put:
        slli t2, t2, 3
        add t2, t2, a1
        ld t3, 0(t2)
        addi t3, t3, 1
        sd t3, 0(t2)
        addi a0, a0, 8
        addi t0, t0, -1
        bnez t0, loop
    """

    def bucket(v):
        for i, e in enumerate(edges):
            if v < e:
                return i
        return len(edges)

    hist = [0] * 5
    for v in values:
        hist[bucket(v)] += 1
    return assemble(src, {BUF: pack(values)}), lambda s, r: words(s.mem, BUF + 0x1000, 5) == hist


def unsigned_ladder_program(values):
    src = f"""
        li a0, {BUF}
        li t0, {len(values)}
        li s1, 0
        li s2, 0x8000000000000000
    loop:
        ld t1, 0(a0)
        bgeu t1, s2, big
        addi s1, s1, 1
        j next
    big:
        addi s1, s1, 16
    next:
        addi a0, a0, 8
        addi t0, t0, -1
        bnez t0, loop
    """
    want = sum(16 if (v & M64) >= 1 << 63 else 1 for v in values)
    return assemble(src, {BUF: pack(values, "Q")}), lambda s, r: s.x[9] == want


def bubble_sort_program(vals):
    n = len(vals)
    src = f"""
        li s0, {BUF}
        li s1, {n - 1}
    outer:
        beqz s1, done
        mv a0, s0
        mv t0, s1
    inner:
        ld t1, 0(a0)
        ld t2, 8(a0)
        ble t1, t2, noswap
        sd t2, 0(a0)
        sd t1, 8(a0)
    noswap:
        addi a0, a0, 8
        addi t0, t0, -1
        bnez t0, inner
        addi s1, s1, -1
        j outer
    done:
    """
    return assemble(src, {BUF: pack(vals)}), lambda s, r: words(s.mem, BUF, n) == sorted(vals)


def popcount_program(v):
    src = f"""
        li a0, {v}
        li a1, 0
    loop:
        beqz a0, done
        andi t0, a0, 1
        add a1, a1, t0
        srli a0, a0, 1
        j loop
    done:
    """
    return assemble(src), lambda s, r: s.x[11] == bin(v & M64).count("1")


def division_corner_program():
    src = """
        li a0, 7
        li a1, 0
        div s1, a0, a1
        divu s2, a0, a1
        rem s3, a0, a1
        li a2, 0x8000000000000000
        li a3, -1
        div s4, a2, a3
        rem s5, a2, a3
        li a4, -7
        li a5, 2
        div s6, a4, a5
        rem s7, a4, a5
        divw s8, a4, a5
        remuw s9, a4, a5
    """
    want = {9: M64, 18: M64, 19: 7, 20: 1 << 63, 21: 0, 22: u64(-3), 23: u64(-1), 24: u64(-3),
            25: (u64(-7) & 0xFFFFFFFF) % 2}
    return assemble(src), lambda s, r: all(s.x[k] & M64 == v for k, v in want.items())


def mul_high_program(x, y):
    src = f"""
        li a0, {x}
        li a1, {y}
        mul s1, a0, a1
        mulh s2, a0, a1
        mulhu s3, a0, a1
        mulhsu s4, a0, a1
        mulw s5, a0, a1
    """
    ux, uy = u64(x), u64(y)
    sx = x if x < 1 << 63 else x - (1 << 64)
    sy = y if y < 1 << 63 else y - (1 << 64)
    w = (ux * uy) & 0xFFFFFFFF
    want = {9: u64(sx * sy), 18: u64((sx * sy) >> 64), 19: (ux * uy) >> 64, 20: u64((sx * uy) >> 64),
            21: u64(w - (1 << 32) if w >> 31 else w)}
    return assemble(src), lambda s, r: all(s.x[k] & M64 == v for k, v in want.items())


def shift_program(v):
    src = f"""
        li a0, {v}
        slli s1, a0, 13
        srli s2, a0, 7
        srai s3, a0, 7
        sraiw s4, a0, 3
        srliw s5, a0, 3
        slliw s6, a0, 5
        li t0, 67
        sll s7, a0, t0
        sraw s8, a0, t0
    """

    def sx32(x):
        x &= 0xFFFFFFFF
        return u64(x - (1 << 32) if x >> 31 else x)

    sv = v - (1 << 64) if v >> 63 else v
    lo = v & 0xFFFFFFFF
    slo = lo - (1 << 32) if lo >> 31 else lo
    want = {9: u64(v << 13), 18: v >> 7, 19: u64(sv >> 7), 20: sx32(slo >> 3), 21: sx32(lo >> 3),
            22: sx32(lo << 5), 23: u64(v << 3), 24: sx32(slo >> 3)}
    return assemble(src), lambda s, r: all(s.x[k] & M64 == val for k, val in want.items())


def compare_program(a, b):
    src = f"""
        li a0, {a}
        li a1, {b}
        slt s1, a0, a1
        sltu s2, a0, a1
        slti s3, a0, -5
        sltiu s4, a0, 100
        xor s5, a0, a1
        or s6, a0, a1
        and s7, a0, a1
    """
    sa, sb = [x - (1 << 64) if x >> 63 else x for x in (u64(a), u64(b))]
    want = {9: int(sa < sb), 18: int(u64(a) < u64(b)), 19: int(sa < -5), 20: int(u64(a) < 100),
            21: u64(a) ^ u64(b), 22: u64(a) | u64(b), 23: u64(a) & u64(b)}
    return assemble(src), lambda s, r: all(s.x[k] & M64 == v for k, v in want.items())


def sign_extension_program():
    blob = bytes([0x80, 0xFF, 0x34, 0x82, 0x78, 0x56, 0x34, 0xF2])
    src = f"""
        li a0, {BUF}
        lb s1, 0(a0)
        lbu s2, 0(a0)
        lh s3, 2(a0)
        lhu s4, 2(a0)
        lw s5, 4(a0)
        lwu s6, 4(a0)
        ld s7, 0(a0)
    """
    v = int.from_bytes(blob, "little")
    want = {9: u64(-128), 18: 0x80, 19: u64(-0x7DCC), 20: 0x8234, 21: u64(0xF2345678 - (1 << 32)),
            22: 0xF2345678, 23: v}
    return assemble(src, {BUF: blob}), lambda s, r: all(s.x[k] & M64 == val for k, val in want.items())


def fp_dot_program(n, seed):
    rng = random.Random(seed)
    xs = [rng.uniform(-10, 10) for _ in range(n)]
    ys = [rng.uniform(-10, 10) for _ in range(n)]
    src = f"""
        li a0, {BUF}
        li a1, {BUF + 0x1000}
        li t0, {n}
        fmv.d.x fa0, zero
    loop:
        fld ft0, 0(a0)
        fld ft1, 0(a1)
        fmadd.d fa0, ft0, ft1, fa0
        addi a0, a0, 8
        addi a1, a1, 8
        addi t0, t0, -1
        bnez t0, loop
        fmv.x.d a2, fa0
    """
    acc = 0.0
    for x, y in zip(xs, ys):
        acc = x * y + acc
    want = struct.unpack("<Q", struct.pack("<d", acc))[0]
    return (assemble(src, {BUF: pack(xs, "d"), BUF + 0x1000: pack(ys, "d")}),
            lambda s, r: s.x[12] & M64 == want)


def fp_arith_program():
    src = f"""
        li a0, 7
        li a1, -3
        fcvt.d.l fa0, a0
        fcvt.d.l fa1, a1
        fadd.d fa2, fa0, fa1
        fsub.d fa3, fa0, fa1
        fmul.d fa4, fa0, fa1
        fdiv.d fa5, fa0, fa1
        fcvt.l.d s1, fa5
        li a2, {BUF}
        fsd fa4, 0(a2)
        fsd fa5, 8(a2)
    """

    def check(s, r):
        got = struct.unpack("<2d", s.mem.read_bytes(BUF, 16))
        return (s.f[12] == 4.0 and s.f[13] == 10.0 and got == (-21.0, 7 / -3)
                and s.x[9] & M64 == u64(round(7 / -3)))

    return assemble(src), check


def recursion_program(n):
    """sum(1..n) through a recursive call chain that saves ra on the stack."""
    src = f"""
        li a0, {n}
        call sum
        j end
    sum:
        addi sp, sp, -16
        sd ra, 8(sp)
        sd a0, 0(sp)
        beqz a0, base
        addi a0, a0, -1
        call sum
        ld t0, 0(sp)
        add a0, a0, t0
        j out
    base:
        li a0, 0
    out:
        ld ra, 8(sp)
        addi sp, sp, 16
        ret
    end:
    """

    def check(s, r):
        calls = sum(rec.is_call for rec in r)
        rets = sum(rec.is_return for rec in r)
        return s.x[10] == n * (n + 1) // 2 and calls == rets == n + 1 and s.x[2] == golden.DEFAULT_STACK_TOP

    return assemble(src), check


def upper_immediate_program():
    src = """
        lui a0, 0x12345
        auipc a1, 0
        auipc a2, 1
    """
    p = assemble(src)

    def check(s, r):
        return s.x[10] == 0x12345000 and s.x[11] == p.base + 4 and s.x[12] == p.base + 8 + 4096

    return p, check


def compressed_program():
    src = """
        c.li a0, 12
        c.li s0, 3
        c.mv a1, a0
        c.add a1, s0
        c.addi a1, -1
        li s1, 0x20000
        c.sd a1, 8(s1)
        c.ld a2, 8(s1)
        c.beqz s0, skip
        c.addi a2, 5
    skip:
    """
    return assemble(src), lambda s, r: s.x[11] == 14 and s.x[12] == 19 and any(x.instr.width == 2 for x in r)


def strlen_program(text: bytes):
    src = f"""
        li a0, {BUF}
        li a1, 0
    loop:
        lbu t0, 0(a0)
        beqz t0, done
        addi a1, a1, 1
        addi a0, a0, 1
        j loop
    done:
    """
    return assemble(src, {BUF: text + b"\0"}), lambda s, r: s.x[11] == len(text)


def instret_program():
    src = """
        addi t0, zero, 1
        addi t0, t0, 1
        rdinstret a0
        rdcycle a1
    """
    return assemble(src), lambda s, r: s.x[10] == 2 and s.x[11] == 3


def matmul_kernel_program():
    p = generate(KernelSpec("matmul_int", {"n": 8}, 3))
    n = 8
    blobs = dict(p.data)
    A = np.frombuffer(blobs[DATA_BASE], dtype=np.int64).reshape(n, n)
    B = np.frombuffer(blobs[DATA_BASE + n * n * 8], dtype=np.int64).reshape(n, n)
    C = A @ B

    def check(s, r):
        got = np.array(words(s.mem, DATA_BASE + 2 * n * n * 8, n * n), dtype=np.int64).reshape(n, n)
        return np.array_equal(got, C)

    return p, check


def kernel_copy_program(kind):
    p = generate(KernelSpec(kind, {"size": 2048}, 5))
    src, dst = p.expected["src"], p.expected["dst"]
    original = dict(p.data)[src]
    return p, lambda s, r: s.mem.read_bytes(dst, 2048) == original


PROGRAMS = {
    "fib10": lambda: fib_program(10),
    "fib90": lambda: fib_program(90),
    "loop_count_100": lambda: counted_loop_program(100),
    "factorial20": lambda: factorial_program(20),
    "factorial25_wraps": lambda: factorial_program(25),
    "gcd": lambda: gcd_program(1071 * 97, 462 * 97),
    "byte_copy": lambda: byte_copy_program(100, 1),
    "word_copy": lambda: word_copy_program(64, 2),
    "signed_ladder": lambda: ladder_program([random.Random(4).randrange(-2000, 2000) for _ in range(60)]),
    "unsigned_ladder": lambda: unsigned_ladder_program([random.Random(5).getrandbits(64) for _ in range(40)]),
    "bubble_sort": lambda: bubble_sort_program([random.Random(6).randrange(-500, 500) for _ in range(16)]),
    "popcount": lambda: popcount_program(0xF0F0_1234_8000_0001),
    "division_corners": division_corner_program,
    "mul_high": lambda: mul_high_program(0x8765_4321_0FED_CBA9, 0xFFFF_FFFF_0000_1234),
    "mul_high_small": lambda: mul_high_program(123456789, 987654321),
    "shifts": lambda: shift_program(0x9234_5678_9ABC_DEF1),
    "compares": lambda: compare_program(-17, 40),
    "sign_extension": sign_extension_program,
    "fp_dot": lambda: fp_dot_program(20, 7),
    "fp_arith": fp_arith_program,
    "recursion": lambda: recursion_program(12),
    "upper_immediates": upper_immediate_program,
    "compressed": compressed_program,
    "strlen": lambda: strlen_program(b"timing models replay the golden stream"),
    "instret": instret_program,
    "matmul_n8": matmul_kernel_program,
    "seqcopy_2k": lambda: kernel_copy_program("seqcopy"),
    "sgcopy_2k": lambda: kernel_copy_program("sgcopy"),
}


@pytest.mark.parametrize("name", sorted(PROGRAMS))
def test_hand_oracled_program(name):
    program, check = PROGRAMS[name]()
    state, records = golden.run(program)
    assert state.halted
    assert len(records) == state.retired
    assert check(state, records)


def test_oracle_suite_count_and_runtime():
    assert len(PROGRAMS) >= 20
    t0 = time.perf_counter()
    built = [PROGRAMS[k]() for k in PROGRAMS]
    ok = 0
    for program, check in built:
        s, r = golden.run(program)
        ok += bool(check(s, r))
    elapsed = time.perf_counter() - t0
    assert ok == len(PROGRAMS)
    assert elapsed < 1.0, f"oracle suite took {elapsed:.2f}s"


# ---------------------------------------------------------------------------
# step semantics and record invariants

def test_addi_single_step():
    p = Program(0x1000, encode("addi", rd=1, rs1=0, imm=5).to_bytes(4, "little"))
    s = ArchState(p)
    rec = step(s)
    assert s.x[1] == 5 and rec.next_pc == 0x1004 and s.retired == 1 and not rec.taken


def test_taken_branch_backwards():
    code = b"".join(encode(m, **kw).to_bytes(4, "little") for m, kw in [
        ("addi", dict(rd=1, imm=1)), ("addi", dict(rd=2, imm=1)), ("beq", dict(rs1=1, rs2=2, imm=-8))])
    s = ArchState(Program(0x1000, code))
    step(s), step(s)
    rec = step(s)
    assert rec.taken and rec.next_pc == rec.pc - 8 and s.pc == 0x1000


def test_record_invariants_on_kernel(golden_kernel):
    _, _, records = golden_kernel("branchy", n_branches=2000)
    for i, r in enumerate(records):
        assert r.seq == i
        if not r.taken:
            assert r.next_pc == r.pc + r.instr.width
        if i:
            assert records[i - 1].next_pc == r.pc
        if r.is_call:
            assert r.instr.rd in (1, 5)
        if r.is_return:
            assert r.instr.rs1 in (1, 5) and r.instr.rd == 0


def test_illegal_first_word():
    with pytest.raises(ProgramIllegalInstruction) as e:
        golden.run(Program(0x1000, bytes(8)))
    assert e.value.records == []
    assert e.value.state.pc == 0x1000


def test_misaligned_load():
    with pytest.raises(MisalignedAccess):
        run_src("li a0, 0x20001\nld a1, 0(a0)")


def test_budget_exceeded_keeps_partial_stream():
    with pytest.raises(InstructionBudgetExceeded) as e:
        run_src("loop:\naddi t0, t0, 1\nj loop", max_instrs=50)
    assert len(e.value.records) == 50 == e.value.state.retired


def test_jump_to_self_halts():
    state, records = golden.run(Program(0x1000, encode("jal", rd=0, imm=0).to_bytes(4, "little")))
    assert state.halted and len(records) == 1


def test_ecall_nonzero_a7_continues():
    state, records = run_src("li a7, 3\necall\naddi a0, zero, 9")
    assert state.x[10] == 9


def test_step_after_halt_rejected():
    state, _ = run_src("nop")
    with pytest.raises(golden.GoldenError):
        step(state)


def test_program_validation():
    with pytest.raises(ProgramError):
        Program(0x1000, b"\x13\0\0\0", entry=0x2000)
    with pytest.raises(ProgramError):
        Program(0x1000, b"\x13\0\0\0" * 4, data=[(0x1008, b"xx")])


def test_flat_format_round_trip():
    program, check = fib_program(10)
    text = dump_flat(program)
    assert text.startswith(f"base={program.base:x} entry={program.entry:x}")
    loaded = parse_flat("# comment\n" + text)
    assert loaded.code == program.code and loaded.entry == program.entry
    s, r = golden.run(loaded)
    assert s.x[10] == 55


@pytest.mark.parametrize("bad", ["", "entry=10\n13 00", "base=1000\nzz"])
def test_flat_format_errors(bad):
    with pytest.raises(ProgramError):
        parse_flat(bad)


def test_determinism(golden_kernel):
    program = generate(KernelSpec("sgcopy", {"size": 1024}, 9))
    s1, r1 = golden.run(program)
    s2, r2 = golden.run(generate(KernelSpec("sgcopy", {"size": 1024}, 9)))
    assert [(r.pc, r.next_pc, r.mem_vaddr, r.store_data) for r in r1] == \
           [(r.pc, r.next_pc, r.mem_vaddr, r.store_data) for r in r2]
    assert s1.x == s2.x and s1.mem.digest() == s2.mem.digest()


def test_store_replay_reproduces_written_bytes():
    program = generate(KernelSpec("sgcopy", {"size": 2048}, 4))
    state, records = golden.run(program)
    assert store_replay_digest(records, program.memory_image()) == state.mem.digest()
    dst = program.expected["dst"]
    blank = Memory()
    for r in records:
        if r.store_data is not None:
            blank.write(r.mem_vaddr, r.mem_bytes, r.store_data)
    assert blank.read_bytes(dst, 2048) == state.mem.read_bytes(dst, 2048)


def test_x0_immutable_under_random_code():
    rng = random.Random(12)
    ops = ["add", "sub", "xor", "or", "and", "sll", "srl", "sra", "slt", "sltu", "mul", "addw", "subw"]
    imms = ["addi", "xori", "ori", "andi", "slti", "sltiu", "addiw"]
    for trial in range(30):
        words_ = []
        for _ in range(200):
            if rng.random() < 0.5:
                words_.append(encode(rng.choice(ops), rd=rng.randrange(4), rs1=rng.randrange(32),
                                     rs2=rng.randrange(32)))
            else:
                words_.append(encode(rng.choice(imms), rd=rng.randrange(4), rs1=rng.randrange(32),
                                     imm=rng.randrange(-2048, 2048)))
        words_ += [encode("addi", rd=17, imm=0), encode("ecall")]
        state = ArchState(Program(0x1000, b"".join(w.to_bytes(4, "little") for w in words_)))
        while not state.halted:
            before = state.retired
            step(state)
            assert state.x[0] == 0
            assert state.retired == before + 1
