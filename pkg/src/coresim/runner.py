"""Single runs, sweeps and report formatting.

One golden retirement stream drives every core model, so runs of the same
kernel on different cores are directly comparable.
"""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

from . import inorder, ooo
from .config import CoreConfig, ConfigError, config_to_dict, load_config, preset
from .golden import InstructionBudgetExceeded, Memory, Program, RetireRecord, run as golden_run
from .memhier import MemoryHierarchy
from .metrics import EnergyWeights, RunMetrics, StallBreakdown, estimate_energy
from .workloads import COPY_KERNELS, KernelSpec, check_expected, generate, load_trace

REPORT_SCHEMA = 1
CSV_SCHEMA = 1
REFERENCE_CORE = "cva6"


class SimulationError(RuntimeError):
    pass


def resolve_core(core: str | CoreConfig, config_path: str | Path | None = None) -> CoreConfig:
    """A preset name, a section of ``config_path``, or a ready config object."""
    if not isinstance(core, str):
        return core
    if config_path is not None:
        cfgs = load_config(config_path)
        if core in cfgs:
            return cfgs[core]
    return preset(core)


def warm_hierarchy(hier: MemoryHierarchy, stream: Sequence[RetireRecord]):
    """Touch every line the stream uses, then clear statistics and timing state."""
    line = hier.cfg.dcache.line
    for r in stream:
        hier.icache.lookup(r.pc)
        if r.mem_vaddr >= 0:
            hier.dcache.lookup(r.mem_vaddr, r.is_store)
            hier.llc.lookup(r.mem_vaddr - r.mem_vaddr % line)
    fresh = MemoryHierarchy(hier.cfg)
    for cache in (hier.icache, hier.dcache, hier.llc):
        cache.stats = type(cache.stats)()
        if cache.index_predictor is not None:
            cache.index_predictor.bits = 0
    hier.mem_reads = hier.mem_writes = hier.bus_busy_cycles = 0
    hier._mshr = fresh._mshr
    hier.bus = fresh.bus


def simulate(cfg: CoreConfig, stream: Sequence[RetireRecord], *, memory: Memory | None = None,
             warm: bool = False, issue_log: bool = False) -> RunMetrics:
    hier = MemoryHierarchy(cfg.mem)
    if warm:
        warm_hierarchy(hier, stream)
    sim = ooo.simulate if cfg.kind == "ooo" else inorder.simulate
    return sim(cfg, stream, hier, memory=memory, issue_log=issue_log)


@dataclass
class Workload:
    """A retirement stream plus where it came from."""

    name: str
    stream: list
    program: Program | None = None
    truncated: bool = False
    golden_digest: str = ""
    params: dict = field(default_factory=dict)

    @property
    def is_copy(self) -> bool:
        return self.name in COPY_KERNELS


def prepare(kernel: KernelSpec | None = None, trace: str | Path | None = None,
            max_instrs: int = 10_000_000) -> Workload:
    """Run the golden model (or load a trace) once."""
    if (kernel is None) == (trace is None):
        raise ConfigError("workload", "give exactly one of a kernel or a trace")
    if trace is not None:
        stream = load_trace(trace)
        truncated = len(stream) > max_instrs
        return Workload(Path(trace).stem, stream[:max_instrs], truncated=truncated)
    program = generate(kernel)
    truncated = False
    try:
        state, stream = golden_run(program, max_instrs=max_instrs)
    except InstructionBudgetExceeded as e:
        state, stream, truncated = e.state, e.records, True
    if not truncated:
        errs = check_expected(program, state)
        if errs:
            raise SimulationError(f"{kernel.kind}: golden result mismatch: {errs[0]}")
    return Workload(kernel.kind, stream, program, truncated, state.mem.digest(), dict(kernel.params))


def run_workload(cfg: CoreConfig, wl: Workload, *, warm: bool = False,
                 weights: EnergyWeights | None = None) -> dict:
    memory = wl.program.memory_image() if wl.program is not None else None
    m = simulate(cfg, wl.stream, memory=memory, warm=warm)
    if m.retired != len(wl.stream):
        raise SimulationError(f"{cfg.name} retired {m.retired} of {len(wl.stream)} instructions")
    total, breakdown = estimate_energy(m, weights)
    report = {
        "schema": REPORT_SCHEMA,
        "core": cfg.name,
        "kernel": wl.name,
        "kernel_params": wl.params,
        "truncated": wl.truncated,
        "warm": warm,
        "config": config_to_dict(cfg),
        "metrics": m.to_dict(),
        "energy": {"total": total, "breakdown": breakdown},
    }
    if memory is not None and not wl.truncated:
        report["memory_matches_golden"] = m.memory_digest == wl.golden_digest
    return report


def run(core: str | CoreConfig, kernel: KernelSpec | None = None, trace: str | Path | None = None, *,
        config_path: str | Path | None = None, max_instrs: int = 10_000_000, warm: bool = False) -> dict:
    cfg = resolve_core(core, config_path)
    return run_workload(cfg, prepare(kernel, trace, max_instrs), warm=warm)


def _sweep_one(args):
    cfg, wl, warm = args
    return run_workload(cfg, wl, warm=warm)


def sweep(cores: Sequence[str | CoreConfig], kernels: Sequence[KernelSpec], *,
          config_path: str | Path | None = None, max_instrs: int = 10_000_000, warm: bool = False,
          jobs: int = 1) -> list[dict]:
    """One report per (core, kernel), in input order.

    Copy kernels gain ``norm_bandwidth``: bandwidth relative to the scalar
    reference core (run additionally if it is not in ``cores``).
    """
    if not cores or not kernels:
        raise ConfigError("sweep", "need at least one core and one kernel")
    cfgs = [resolve_core(c, config_path) for c in cores]
    jobs_list = []
    workloads = [prepare(k, None, max_instrs) for k in kernels]
    for wl in workloads:
        for cfg in cfgs:
            jobs_list.append((cfg, wl, warm))
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            reports = list(ex.map(_sweep_one, jobs_list))
    else:
        reports = [_sweep_one(j) for j in jobs_list]
    ncores = len(cfgs)
    for w, wl in enumerate(workloads):
        group = reports[w * ncores:(w + 1) * ncores]
        if not wl.is_copy:
            continue
        ref = next((r for r in group if r["core"] == REFERENCE_CORE), None)
        if ref is None:
            ref = run_workload(preset(REFERENCE_CORE), wl, warm=warm)
        base = ref["metrics"]["bandwidth"]
        for r in group:
            r["norm_bandwidth"] = r["metrics"]["bandwidth"] / base if base else 0.0
    return reports


# ---------------------------------------------------------------------------
# report formats

_STALLS = [f.name for f in fields(StallBreakdown)]
CSV_COLUMNS = (
    ["csv_schema", "core", "kernel", "retired", "cycles", "ipc",
     "branch_count", "branch_mispredicts", "branch_rate",
     "icache_accesses", "icache_miss_rate", "dcache_accesses", "dcache_miss_rate",
     "llc_accesses", "llc_miss_rate", "vipt_retries", "peak_retire_per_cycle",
     "mem_bytes", "bandwidth", "norm_bandwidth", "energy"]
    + [f"stall_{s}" for s in _STALLS]
)


def report_row(report: dict) -> dict:
    m = report["metrics"]
    c = m["caches"]
    row = {
        "csv_schema": CSV_SCHEMA,
        "core": report["core"],
        "kernel": report["kernel"],
        "retired": m["retired"],
        "cycles": m["cycles"],
        "ipc": round(m["ipc"], 6),
        "branch_count": m["branch"]["count"],
        "branch_mispredicts": m["branch"]["mispredicts"],
        "branch_rate": round(m["branch"]["rate"], 6),
        "icache_accesses": c["icache"]["accesses"],
        "icache_miss_rate": round(c["icache"]["miss_rate"], 6),
        "dcache_accesses": c["dcache"]["accesses"],
        "dcache_miss_rate": round(c["dcache"]["miss_rate"], 6),
        "llc_accesses": c["llc"]["accesses"],
        "llc_miss_rate": round(c["llc"]["miss_rate"], 6),
        "vipt_retries": m["vipt_retries"],
        "peak_retire_per_cycle": m["peak_retire_per_cycle"],
        "mem_bytes": m["mem_bytes"],
        "bandwidth": round(m["bandwidth"], 6),
        "norm_bandwidth": round(report["norm_bandwidth"], 6) if "norm_bandwidth" in report else "",
        "energy": round(report["energy"]["total"], 3),
    }
    for s in _STALLS:
        row[f"stall_{s}"] = m["stalls"][s]
    return row


def to_json(reports: dict | list) -> str:
    return json.dumps(reports, sort_keys=True, indent=2) + "\n"


def to_csv(reports: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow(report_row(r))
    return buf.getvalue()


_TABLE_COLUMNS = ["core", "kernel", "retired", "cycles", "ipc", "branch_rate", "dcache_miss_rate",
                  "bandwidth", "norm_bandwidth", "peak_retire_per_cycle"]


def to_table(reports: Sequence[dict]) -> str:
    rows = [report_row(r) for r in reports]
    cells = [[str(r[c]) for c in _TABLE_COLUMNS] for r in rows]
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(_TABLE_COLUMNS)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(_TABLE_COLUMNS, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in cells:
        lines.append("  ".join(v.rjust(w) if i > 1 else v.ljust(w)
                               for i, (v, w) in enumerate(zip(row, widths))))
    return "\n".join(lines) + "\n"


def format_reports(reports: Sequence[dict], fmt: str) -> str:
    if fmt == "json":
        return to_json(list(reports) if len(reports) != 1 else reports[0])
    if fmt == "csv":
        return to_csv(reports)
    if fmt == "table":
        return to_table(reports)
    raise ConfigError("format", f"unknown report format {fmt!r}")
