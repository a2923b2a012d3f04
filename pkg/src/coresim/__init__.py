"""Execution-driven RISC-V timing simulator.

A functional golden model (:mod:`coresim.golden`) produces the retired
instruction stream; timing models for a scalar in-order core, a dual-issue
in-order core (:mod:`coresim.inorder`) and a 3-wide out-of-order core
(:mod:`coresim.ooo`) replay it against a shared cache hierarchy
(:mod:`coresim.memhier`) and branch predictors (:mod:`coresim.predictors`).
"""
from .config import ConfigError, InOrderConfig, OooConfig, PRESETS, preset
from .golden import Program, RetireRecord, run as run_golden
from .metrics import EnergyWeights, RunMetrics, StallBreakdown, estimate_energy
from .runner import run, simulate, sweep
from .workloads import KernelSpec, generate

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "EnergyWeights", "InOrderConfig", "KernelSpec", "OooConfig", "PRESETS", "Program",
    "RetireRecord", "RunMetrics", "StallBreakdown", "estimate_energy", "generate", "preset", "run",
    "run_golden", "simulate", "sweep",
]
