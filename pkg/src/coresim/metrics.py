"""Run metrics shared by the timing models, plus the activity-based energy estimate."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields


@dataclass
class StallBreakdown:
    """Cycle attribution. ``busy`` counts cycles that issued at least one instruction.

    Every simulated cycle lands in exactly one field, so ``total()`` equals
    the run's cycle count.
    """

    busy: int = 0
    fetch_starve: int = 0
    raw_dependency: int = 0
    waw_dependency: int = 0
    structural_fu: int = 0
    structural_wb_port: int = 0
    scoreboard_full: int = 0
    lsu_full: int = 0
    mispredict_redirect: int = 0
    cache_miss: int = 0
    rename_stall: int = 0
    drain: int = 0

    def add(self, cause: str, n: int):
        setattr(self, cause, getattr(self, cause) + n)

    def total(self) -> int:
        return sum(getattr(self, f.name) for f in fields(self))


EVENT_CLASSES = ("fetch", "decode", "alu_op", "mul_op", "div_op", "fp_op", "l1_access",
                 "llc_access", "mem_access", "rob_write", "rename")


@dataclass
class RunMetrics:
    core: str
    cycles: int
    retired: int
    branch: dict
    caches: dict
    stalls: StallBreakdown
    peak_retire_per_cycle: int
    mem_bytes: int
    events: dict
    vipt_retries: int = 0
    rob_occupancy: list | None = None
    inflight_occupancy: list | None = None
    lsu_occupancy: dict | None = None
    seq_digest: str = ""
    memory_digest: str = ""
    issue_log: list | None = field(default=None, repr=False)
    rob_groups: list | None = field(default=None, repr=False)

    @property
    def ipc(self) -> float:
        return self.retired / self.cycles if self.cycles else 0.0

    @property
    def bandwidth(self) -> float:
        """Bytes moved by loads and stores per cycle."""
        return self.mem_bytes / self.cycles if self.cycles else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("issue_log")
        d.pop("rob_groups")
        d["ipc"] = self.ipc
        d["bandwidth"] = self.bandwidth
        return d


@dataclass
class EnergyWeights:
    """Per-event energy in arbitrary picojoule-like units. Not calibrated."""

    fetch: float = 4.0
    decode: float = 1.5
    alu_op: float = 1.0
    mul_op: float = 6.0
    div_op: float = 20.0
    fp_op: float = 10.0
    l1_access: float = 12.0
    llc_access: float = 60.0
    mem_access: float = 400.0
    rob_write: float = 2.0
    rename: float = 1.5
    leakage_per_cycle: float = 3.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"energy weight {f.name} must be non-negative")

    def scaled(self, k: float) -> "EnergyWeights":
        return EnergyWeights(**{f.name: getattr(self, f.name) * k for f in fields(self)})


def estimate_energy(metrics: RunMetrics, weights: EnergyWeights | None = None) -> tuple[float, dict]:
    """Linear activity model: sum of event counts times weights plus leakage.

    Returns ``(total, breakdown)``; the breakdown has one entry per event
    class plus ``leakage`` and sums to ``total``.
    """
    w = weights or EnergyWeights()
    breakdown = {k: metrics.events.get(k, 0) * getattr(w, k) for k in EVENT_CLASSES}
    breakdown["leakage"] = metrics.cycles * w.leakage_per_cycle
    total = 0.0
    for v in breakdown.values():
        total += v
    return total, breakdown
