"""Run the integer matrix multiply on all three cores and explain where the cycles go.

    python demos/compare_cores.py [n]
"""
import sys

from coresim.runner import run
from coresim.workloads import KernelSpec

n = int(sys.argv[1]) if len(sys.argv) > 1 else 16
reports = {core: run(core, KernelSpec("matmul_int", {"n": n})) for core in ("cva6", "cva6s+", "c910")}

print(f"matmul_int, n={n}")
base = reports["cva6"]["metrics"]["ipc"]
for core, rep in reports.items():
    m = rep["metrics"]
    print(f"  {core:7s} cycles={m['cycles']:8d} ipc={m['ipc']:.3f} speedup={m['ipc'] / base:.2f}x "
          f"branch-miss={m['branch']['rate']:.3f} dcache-miss={m['caches']['dcache']['miss_rate']:.3f}")

# Every cycle is charged to exactly one reason, so the rows add up to the cycle count.
print("\nwhere the cycles went:")
for core, rep in reports.items():
    stalls = {k: v for k, v in rep["metrics"]["stalls"].items() if v}
    top = sorted(stalls.items(), key=lambda kv: -kv[1])[:4]
    print(f"  {core:7s} " + ", ".join(f"{k}={v}" for k, v in top))
