"""Bimodal counters against per-branch history on two kinds of branch behavior."""
from coresim.predictors import BimodalBht, TwoLevelBht, evaluate_branch_trace, mispredict_rate
from coresim.runner import prepare
from coresim.workloads import KernelSpec

# A branch that alternates taken/not-taken defeats a 2-bit counter but is
# trivially learned once three bits of its own history are visible.
alternating = [(0x1000, k % 2 == 0) for k in range(1000)]
print("alternating branch, after 16 warmup branches")
print(f"  bimodal   {mispredict_rate(alternating, BimodalBht(128, init=2), warmup=16):.3f}")
print(f"  two-level {mispredict_rate(alternating, TwoLevelBht(128, 3), warmup=16):.3f}")

# The branchy kernel mixes short periodic patterns with a few random sites.
for rate in (0.3, 0.5, 0.7):
    wl = prepare(KernelSpec("branchy", {"n_branches": 20_000, "taken_rate": rate}, 1))
    trace = [(r.pc, r.taken, r.next_pc) for r in wl.stream if r.is_branch]
    bim = evaluate_branch_trace(trace, BimodalBht(128, init=2))
    two = evaluate_branch_trace(trace, TwoLevelBht(128, 3))
    print(f"branchy taken_rate={rate}: bimodal {bim['direction_rate']:.3f}  two-level {two['direction_rate']:.3f}")
