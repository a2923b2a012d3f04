"""Core configurations, the built-in presets and the config-file loader.

Config files are INI-style. Each section describes one core; it starts from
the preset named by its ``preset`` key (or by the section name itself) and
overrides any field::

    [cva6]
    mispredict_penalty = 6

    [c910-big-rob]
    preset = c910
    rob_entries = 128
    dcache.size = 32768
    lat.div = 12
"""
from __future__ import annotations

import configparser
import copy
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

from .isa import FuClass
from .memhier import CacheConfig, Indexing, MemConfig


class ConfigError(ValueError):
    def __init__(self, key: str, msg: str = ""):
        self.key = key
        super().__init__(f"{key}: {msg}" if msg else key)


def default_latencies() -> dict[FuClass, int]:
    return {
        FuClass.ALU: 1,
        FuClass.BRU: 1,
        FuClass.MUL: 3,
        FuClass.DIV: 20,
        FuClass.FP_ALU: 4,
        FuClass.FP_MUL: 4,
        FuClass.FP_DIV: 16,
        FuClass.CSR: 1,
        FuClass.SYSTEM: 1,
    }


def _inorder_mem() -> MemConfig:
    m = MemConfig()
    m.dcache.indexing = Indexing.VIPT_SPECULATIVE
    return m


def _ooo_mem() -> MemConfig:
    m = MemConfig()
    m.dcache_mshrs = 8
    return m


@dataclass
class InOrderConfig:
    name: str = "cva6"
    issue_width: int = 1
    commit_width: int = 2
    scoreboard_entries: int = 8
    fetch_bytes_per_cycle: int = 4
    instr_buffer_entries: int = 8
    frontend_depth: int = 3
    n_alu: int = 1
    n_mul: int = 1
    n_div: int = 1
    n_bru: int = 1
    n_fpu: int = 1
    load_q: int = 2
    store_q: int = 4
    mispredict_penalty: int = 5
    renaming_enabled: bool = False
    alu_forwarding_enabled: bool = False
    fpu_dual_issue_enabled: bool = False
    alu_shares_fpu_wb: bool = True
    predictor: str = "bimodal"
    bht_entries: int = 128
    bht_history: int = 3
    btb_entries: int = 32
    ras_entries: int = 2
    phys_int_regs: int = 32
    phys_fp_regs: int = 32
    fu_latency: dict = field(default_factory=default_latencies)
    mem: MemConfig = field(default_factory=_inorder_mem)

    kind = "inorder"

    def __post_init__(self):
        if self.issue_width not in (1, 2):
            raise ConfigError("issue_width", "in-order model supports 1 or 2")
        if self.predictor not in ("bimodal", "twolevel"):
            raise ConfigError("predictor", f"unknown in-order predictor {self.predictor!r}")
        for k in ("commit_width", "scoreboard_entries", "instr_buffer_entries", "load_q", "store_q",
                  "fetch_bytes_per_cycle", "n_alu"):
            if getattr(self, k) < 1:
                raise ConfigError(k, "must be >= 1")


@dataclass
class OooConfig:
    name: str = "c910"
    decode_width: int = 3
    retire_entries_per_cycle: int = 3
    pipeline_depth: int = 12
    frontend_depth: int = 5
    fetch_bytes_per_cycle: int = 16
    fetch_queue_entries: int = 16
    mispredict_penalty: int = 11
    rob_entries: int = 64
    compaction_max: int = 3
    phys_int_regs: int = 96
    phys_fp_regs: int = 64
    n_alu: int = 2
    n_fpu: int = 2
    n_mul: int = 1
    n_div: int = 1
    n_bru: int = 1
    lsu_ports: int = 2
    load_q: int = 16
    store_q: int = 12
    predictor: str = "hybrid"
    global_history_bits: int = 12
    local_entries: int = 1024
    local_history_bits: int = 8
    chooser_entries: int = 1024
    l0_btb_entries: int = 16
    btb_entries: int = 4096
    btb_ways: int = 4
    l1_btb_bubble: int = 1
    ras_entries: int = 12
    loop_buffer_entries: int = 16
    fu_latency: dict = field(default_factory=default_latencies)
    mem: MemConfig = field(default_factory=_ooo_mem)

    kind = "ooo"

    def __post_init__(self):
        if self.phys_int_regs <= 32 or self.phys_fp_regs <= 32:
            raise ConfigError("phys_int_regs", "need more physical than architectural registers")
        if self.predictor not in ("hybrid", "bimodal", "twolevel"):
            raise ConfigError("predictor", f"unknown predictor {self.predictor!r}")
        for k in ("decode_width", "retire_entries_per_cycle", "rob_entries", "compaction_max",
                  "lsu_ports", "load_q", "store_q", "n_alu", "n_fpu"):
            if getattr(self, k) < 1:
                raise ConfigError(k, "must be >= 1")


CoreConfig = Union[InOrderConfig, OooConfig]


def _cva6() -> InOrderConfig:
    return InOrderConfig(name="cva6")


def _cva6s() -> InOrderConfig:
    """Upstream dual-issue configuration without the enhancements."""
    return InOrderConfig(name="cva6s", issue_width=2, fetch_bytes_per_cycle=8, n_alu=2)


def _cva6s_plus() -> InOrderConfig:
    return InOrderConfig(name="cva6s+", issue_width=2, fetch_bytes_per_cycle=8, n_alu=2,
                         renaming_enabled=True, alu_forwarding_enabled=True,
                         fpu_dual_issue_enabled=True, predictor="twolevel")


def _c910() -> OooConfig:
    return OooConfig(name="c910")


PRESETS = {
    "cva6": _cva6,
    "cva6s": _cva6s,
    "cva6s+": _cva6s_plus,
    "c910": _c910,
}

# Headline microarchitecture parameters of the three modeled cores.
CORE_TABLE = {
    "cva6": dict(decode_width=1, commit_width=2, pipeline_stages=6, bht_entries=128, btb_entries=32,
                 ras_entries=2, phys_int_regs=32, phys_fp_regs=32, rob_entries=8, n_alu=1, n_mul=1,
                 n_div=1, n_bru=1, n_fpu=1, load_q=2, store_q=4),
    "cva6s+": dict(decode_width=2, commit_width=2, pipeline_stages=6, bht_entries=128, btb_entries=32,
                   ras_entries=2, phys_int_regs=32, phys_fp_regs=32, rob_entries=8, n_alu=2, n_mul=1,
                   n_div=1, n_bru=1, n_fpu=1, load_q=2, store_q=4),
    "c910": dict(decode_width=3, commit_width=3, pipeline_stages=12, bht_entries=32 * 1024,
                 btb_entries=4096, ras_entries=12, phys_int_regs=96, phys_fp_regs=64, rob_entries=64,
                 n_alu=2, n_mul=1, n_div=1, n_bru=1, n_fpu=2, load_q=16, store_q=12),
}


def core_table_view(cfg: CoreConfig) -> dict:
    """The configuration expressed in ``CORE_TABLE`` terms."""
    if isinstance(cfg, InOrderConfig):
        return dict(decode_width=cfg.issue_width, commit_width=cfg.commit_width,
                    pipeline_stages=cfg.frontend_depth + 3, bht_entries=cfg.bht_entries,
                    btb_entries=cfg.btb_entries, ras_entries=cfg.ras_entries,
                    phys_int_regs=cfg.phys_int_regs, phys_fp_regs=cfg.phys_fp_regs,
                    rob_entries=cfg.scoreboard_entries, n_alu=cfg.n_alu, n_mul=cfg.n_mul,
                    n_div=cfg.n_div, n_bru=cfg.n_bru, n_fpu=cfg.n_fpu, load_q=cfg.load_q,
                    store_q=cfg.store_q)
    # the hybrid predictor stands in for the 32K-entry BHT
    return dict(decode_width=cfg.decode_width, commit_width=cfg.retire_entries_per_cycle,
                pipeline_stages=cfg.pipeline_depth, bht_entries=32 * 1024,
                btb_entries=cfg.btb_entries, ras_entries=cfg.ras_entries,
                phys_int_regs=cfg.phys_int_regs, phys_fp_regs=cfg.phys_fp_regs,
                rob_entries=cfg.rob_entries, n_alu=cfg.n_alu, n_mul=cfg.n_mul, n_div=cfg.n_div,
                n_bru=cfg.n_bru, n_fpu=cfg.n_fpu, load_q=cfg.load_q, store_q=cfg.store_q)


def preset(name: str) -> CoreConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(name, f"unknown core preset (known: {', '.join(PRESETS)})") from None


def _coerce(key: str, current, text: str):
    t = text.strip()
    try:
        if isinstance(current, bool):
            if t.lower() in ("1", "true", "yes", "on"):
                return True
            if t.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(t)
        if isinstance(current, int):
            return int(t, 0)
        if isinstance(current, float):
            return float(t)
        if isinstance(current, Indexing):
            return Indexing(t.lower())
        return t
    except ValueError:
        raise ConfigError(key, f"bad value {text!r}") from None


def apply_overrides(cfg: CoreConfig, overrides: dict[str, str]) -> CoreConfig:
    """Return a copy of ``cfg`` with dotted-key string overrides applied."""
    cfg = copy.deepcopy(cfg)
    for key, val in overrides.items():
        parts = key.strip().lower().split(".")
        if parts[0] == "lat" and len(parts) == 2:
            try:
                fu = FuClass(parts[1])
            except ValueError:
                raise ConfigError(key, "unknown functional-unit class") from None
            cfg.fu_latency[fu] = _coerce(key, 1, val)
            continue
        if parts[0] == "preset":
            continue
        target = cfg
        if len(parts) == 2 and parts[0] in ("icache", "dcache", "llc"):
            target = getattr(cfg.mem, parts[0])
        elif len(parts) == 2 and parts[0] == "mem":
            target = cfg.mem
        elif len(parts) != 1:
            raise ConfigError(key, "unknown key")
        fname = parts[-1]
        names = {f.name for f in dataclasses.fields(target)}
        if fname not in names or fname in ("fu_latency", "mem"):
            raise ConfigError(key, "unknown key")
        setattr(target, fname, _coerce(key, getattr(target, fname), val))
    try:
        for sub in (cfg.mem.icache, cfg.mem.dcache, cfg.mem.llc):
            CacheConfig.__post_init__(sub)
        type(cfg).__post_init__(cfg)
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError("cache", str(e)) from None
    return cfg


def load_config_text(text: str) -> dict[str, CoreConfig]:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError("config", str(e)) from None
    out = {}
    for section in cp.sections():
        items = dict(cp.items(section))
        base = items.get("preset", section)
        cfg = apply_overrides(preset(base), items)
        cfg.name = section
        out[section] = cfg
    return out


def load_config(path: str | Path) -> dict[str, CoreConfig]:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(str(path), f"cannot read config file: {e}") from None
    return load_config_text(text)


def config_to_dict(cfg: CoreConfig) -> dict:
    d = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if f.name == "fu_latency":
            v = {k.value: lat for k, lat in sorted(v.items(), key=lambda kv: kv[0].value)}
        elif f.name == "mem":
            v = v.to_dict()
        d[f.name] = v
    d["kind"] = cfg.kind
    return d
