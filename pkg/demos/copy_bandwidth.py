"""Copy bandwidth per core, normalized to the scalar in-order core, and the load queue's role."""
import dataclasses

from coresim.config import preset
from coresim.runner import prepare, simulate, sweep
from coresim.workloads import KernelSpec

reports = sweep(["cva6", "cva6s+", "c910"], [KernelSpec("seqcopy", {"size": 16384}),
                                             KernelSpec("sgcopy", {"size": 16384})])
for r in reports:
    print(f"{r['kernel']:8s} {r['core']:7s} {r['metrics']['bandwidth']:.3f} B/cycle "
          f"(x{r['norm_bandwidth']:.2f})")

# The out-of-order core hides miss latency only as far as its load queue lets it.
stream = prepare(KernelSpec("seqcopy", {"size": 16384})).stream
print("\nseqcopy on c910 by load queue size")
for q in (1, 2, 4, 8, 16):
    m = simulate(dataclasses.replace(preset("c910"), load_q=q), stream)
    print(f"  load_q={q:2d} cycles={m.cycles}")
