"""Command-line front end: ``python3 -m coresim <verb> ...``.

Exit status: 0 on success, 1 when simulation fails, 2 for bad configuration
or arguments.
"""
from __future__ import annotations

import argparse
import ast
import inspect
import json
import sys
from pathlib import Path

from . import runner
from .config import ConfigError, PRESETS
from .golden import GoldenError, run as golden_run
from .inorder import StreamMismatch
from .predictors import (BimodalBht, BranchTraceError, Btb, EmptyStream, HybridBht, TwoLevelBht, evaluate_branch_trace,
                         load_branch_trace)
from .workloads import (KERNELS, InconsistentControlFlow, KernelSpec, ParameterOutOfRange, ParseError,
                        dump_trace, generate)

EXIT_OK, EXIT_SIM, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def _param(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    try:
        val = ast.literal_eval(v)
    except (ValueError, SyntaxError):
        val = v
    return k.strip(), val


def _kernel_spec(args) -> KernelSpec | None:
    if args.kernel is None:
        return None
    return KernelSpec(args.kernel, dict(args.param or []), args.seed)


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _common(p, fmt_default="json"):
    p.add_argument("--config", help="INI file with per-core sections")
    p.add_argument("--seed", type=int, default=1, help="kernel data seed")
    p.add_argument("--max-instrs", type=int, default=10_000_000, help="golden instruction budget")
    p.add_argument("--param", type=_param, action="append", metavar="KEY=VALUE",
                   help="kernel parameter, e.g. n=16 (repeatable)")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--format", choices=("json", "csv", "table"), default=fmt_default)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="coresim", description="Execution-driven RISC-V core timing models.")
    sub = ap.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="simulate one kernel or trace on one core")
    p.add_argument("--core", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--kernel", choices=sorted(KERNELS))
    src.add_argument("--trace", help="retire trace file")
    p.add_argument("--warm", action="store_true", help="pre-load caches with the stream's footprint")
    _common(p)

    p = sub.add_parser("sweep", help="simulate every (core, kernel) pair")
    p.add_argument("--core", action="append", help="core (repeatable or comma-separated); default all presets")
    p.add_argument("--kernel", action="append", help="kernel (repeatable or comma-separated)")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--warm", action="store_true")
    _common(p, "table")

    p = sub.add_parser("bp-eval", help="evaluate a direction predictor on a branch trace or kernel")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--trace", help="branch trace: '<pc> <T|N> <target>' per line")
    src.add_argument("--kernel", choices=sorted(KERNELS))
    p.add_argument("--predictor", choices=("bimodal", "twolevel", "hybrid"), action="append")
    p.add_argument("--entries", type=int, default=128)
    p.add_argument("--history", type=int, default=3)
    p.add_argument("--btb-entries", type=int, default=32)
    p.add_argument("--core", help=argparse.SUPPRESS)
    _common(p)

    p = sub.add_parser("trace-dump", help="write a kernel's golden retire stream as a trace file")
    p.add_argument("--kernel", required=True, choices=sorted(KERNELS))
    p.add_argument("--trace", help=argparse.SUPPRESS)
    p.add_argument("--core", help=argparse.SUPPRESS)
    _common(p)

    p = sub.add_parser("list-kernels", help="show the kernel catalog")
    p.add_argument("--format", choices=("json", "csv", "table"), default="table")
    p.add_argument("--out")
    p.add_argument("--core", help=argparse.SUPPRESS)
    p.add_argument("--config", help=argparse.SUPPRESS)
    return ap


def _split(values, default):
    if not values:
        return list(default)
    out = []
    for v in values:
        out.extend(x.strip() for x in v.split(",") if x.strip())
    return out


def _cmd_run(args):
    report = runner.run(args.core, _kernel_spec(args), args.trace, config_path=args.config,
                        max_instrs=args.max_instrs, warm=args.warm)
    _emit(runner.format_reports([report], args.format), args.out)


def _cmd_sweep(args):
    cores = _split(args.core, ["cva6", "cva6s+", "c910"])
    kernels = _split(args.kernel, ["matmul_int", "seqcopy", "sgcopy", "branchy", "fp_nbody_like"])
    for k in kernels:
        if k not in KERNELS:
            raise ParameterOutOfRange(f"unknown kernel {k!r}")
    params = dict(args.param or [])
    specs = []
    for k in kernels:
        accepted = inspect.signature(KERNELS[k]).parameters
        specs.append(KernelSpec(k, {p: v for p, v in params.items() if p in accepted}, args.seed))
    reports = runner.sweep(cores, specs, config_path=args.config, max_instrs=args.max_instrs,
                           warm=args.warm, jobs=args.jobs)
    _emit(runner.format_reports(reports, args.format), args.out)


def _make_bht(kind, args):
    if kind == "bimodal":
        return BimodalBht(args.entries)
    if kind == "twolevel":
        return TwoLevelBht(args.entries, args.history)
    return HybridBht()


def _cmd_bp_eval(args):
    if args.trace:
        trace = load_branch_trace(args.trace)
    else:
        _, recs = golden_run(generate(_kernel_spec(args)), max_instrs=args.max_instrs)
        trace = [(r.pc, r.taken, r.next_pc) for r in recs if r.is_branch]
    rows = []
    for kind in args.predictor or ["bimodal", "twolevel"]:
        res = evaluate_branch_trace(trace, _make_bht(kind, args), Btb(args.btb_entries))
        rows.append({"predictor": kind, **res})
    if args.format == "json":
        text = json.dumps(rows, sort_keys=True, indent=2) + "\n"
    else:
        keys = sorted({k for r in rows for k in r}, key=lambda k: (k != "predictor", k))
        sep = "," if args.format == "csv" else "  "
        lines = [sep.join(keys)] + [sep.join(str(r.get(k, "")) for k in keys) for r in rows]
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)


def _cmd_trace_dump(args):
    _, recs = golden_run(generate(_kernel_spec(args)), max_instrs=args.max_instrs)
    _emit(dump_trace(recs), args.out)


def _cmd_list_kernels(args):
    rows = []
    for name, fn in KERNELS.items():
        params = {k: p.default for k, p in inspect.signature(fn).parameters.items() if k != "seed"}
        doc = (inspect.getdoc(fn) or "").splitlines()[0]
        rows.append({"kernel": name, "defaults": params, "description": doc})
    if args.format == "json":
        text = json.dumps(rows, indent=2) + "\n"
    else:
        sep = "," if args.format == "csv" else "  "
        w = max(len(r["kernel"]) for r in rows)
        lines = []
        for r in rows:
            defaults = " ".join(f"{k}={v}" for k, v in r["defaults"].items())
            if args.format == "csv":
                lines.append(sep.join([r["kernel"], f'"{defaults}"', f'"{r["description"]}"']))
            else:
                lines.append(f"{r['kernel'].ljust(w)}  {defaults}\n{' ' * w}  {r['description']}")
        text = "\n".join(lines) + "\n"
    _emit(text, args.out)


_COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "bp-eval": _cmd_bp_eval,
             "trace-dump": _cmd_trace_dump, "list-kernels": _cmd_list_kernels}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _COMMANDS[args.verb](args)
    except (ConfigError, ParameterOutOfRange) as e:
        print(f"coresim: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (GoldenError, StreamMismatch, runner.SimulationError, ParseError, InconsistentControlFlow,
            BranchTraceError, EmptyStream, OSError) as e:
        print(f"coresim: simulation error: {e}", file=sys.stderr)
        return EXIT_SIM
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
