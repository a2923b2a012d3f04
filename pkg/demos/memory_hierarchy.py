"""Cache behavior seen from a single request stream, then through a core."""
from coresim import golden
from coresim.asm import Assembler
from coresim.config import preset
from coresim.memhier import Indexing, MemoryHierarchy
from coresim.runner import simulate

# Streaming 8-byte loads: one miss per 64-byte line.
h = MemoryHierarchy()
t = 0
for k in range(4 * h.cfg.dcache.size // 8):
    t = h.access(0x100000 + 8 * k, "load", 8, now=t).ready
print(f"streaming loads over 4x the L1: miss rate {h.dcache.stats.miss_rate:.4f}, {t} cycles")

# Two addresses that differ in bits [14:12]. The VIPT cache guesses those bits
# from the previous access, so alternating between them retries every time.
a = Assembler()
a("li a0, 0x100040")
a("li a1, 0x105040")
for _ in range(32):
    a("ld t1, 0(a0)")
    a("sd t1, 8(a1)")
a.halt()
program = a.program()
state, recs = golden.run(program)
for indexing in (Indexing.VIPT_SPECULATIVE, Indexing.PIPT):
    cfg = preset("cva6")
    cfg.mem.dcache.indexing = indexing
    m = simulate(cfg, recs, memory=program.memory_image())
    same = m.memory_digest == state.mem.digest()
    print(f"{indexing.value:18s} retries={m.vipt_retries:3d} cycles={m.cycles} memory matches golden: {same}")
