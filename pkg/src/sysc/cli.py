"""``sysc`` command-line driver.

Exit codes: 0 success, 1 mismatch or validation failure, 2 usage or parse
error (including a non-unimodular matrix without a reverse map).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Dict, List, Optional

from . import gallery
from .emitter import emit
from .errors import (BadOverride, DesignSyntaxError, InvalidTransform, MissingReverse,
                     NotUnimodular, SemanticError, SyscError, UnknownKey)
from .explore import explore
from .ir import compile_design, dump, transform_of
from .parser import DesignFile, SpaceTime, parse, replace_matrix, with_params
from .perf import analyze, static_dynamic_crosscheck
from .simulator import check_equivalence, simulate
from .transform import determinant
from .ure import random_inputs

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
USAGE_ERRORS = (DesignSyntaxError, SemanticError, BadOverride, UnknownKey, NotUnimodular,
                MissingReverse)


class _Out:
    def __init__(self, stream=None):
        self.stream = stream or sys.stdout
        flag = os.environ.get("SYSC_COLOR", "").lower()
        if flag in ("0", "no", "never", "off", "false"):
            self.color = False
        elif flag in ("1", "yes", "always", "on", "true"):
            self.color = True
        else:
            self.color = hasattr(self.stream, "isatty") and self.stream.isatty()

    def paint(self, text, ok: bool) -> str:
        if not self.color:
            return text
        return f"\033[{32 if ok else 31}m{text}\033[0m"

    def print(self, text=""):
        print(text, file=self.stream)


def _params(items: List[str]) -> Dict[str, int]:
    out = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep or not name:
            raise BadOverride(f"expected NAME=VALUE, got {item!r}")
        try:
            out[name.strip()] = int(value)
        except ValueError:
            raise BadOverride(f"{name}: expected an integer, got {value!r}") from None
    return out


def _load(args) -> DesignFile:
    overrides = _params(args.param)
    if args.gallery:
        d = gallery.instantiate(args.gallery, overrides)
    else:
        try:
            with open(args.design, encoding="utf-8") as fh:
                d = parse(fh.read())
        except OSError as exc:
            raise BadOverride(f"cannot read {args.design}: {exc.strerror}") from None
        d = with_params(d, overrides) if overrides else d
    if args.matrix:
        try:
            m = json.loads(args.matrix)
            if not all(type(v) is int for row in m for v in row):
                raise ValueError
        except (ValueError, TypeError):
            raise BadOverride(f"--matrix expects a JSON list of integer rows, "
                              f"got {args.matrix!r}") from None
        d = replace_matrix(d, m, reverse=())
    return d


def _stt(d: DesignFile) -> Optional[SpaceTime]:
    return next((x for x in d.schedule if isinstance(x, SpaceTime)), None)


# --------------------------------------------------------------------------
# subcommands

def cmd_check(args, out: _Out) -> int:
    d = _load(args)
    doc = {"design": d.name, "valid": False}
    stt = _stt(d)
    code = EXIT_OK
    if stt is not None:
        params = d.system.bind()
        t = transform_of(stt, params)
        if len(t.matrix) == t.dims and not t.reverse:
            det = determinant(t.matrix)
            doc["determinant"] = det
            if abs(det) != 1:
                doc["error"] = f"NotUnimodular: det = {det} and no reverse supplied"
                code = EXIT_USAGE
    try:
        compiled = compile_design(d)
        report = compiled.nest.systolic.report if compiled.nest.systolic else None
        doc["valid"] = code == EXIT_OK
    except InvalidTransform as exc:
        report = exc.report
        code = code or EXIT_FAIL
    except MissingReverse as exc:
        report = None
        doc.setdefault("error", f"{type(exc).__name__}: {exc}")
        code = EXIT_USAGE
    if report is not None:
        doc["validity"] = report.to_dict()
    if code == EXIT_OK and compiled.nest.systolic is not None:
        doc["pattern"] = compiled.nest.systolic.pattern.value
    if args.json:
        out.print(json.dumps(doc, indent=2, sort_keys=True))
        return code
    out.print(f"design {d.name}")
    if report is not None:
        out.print(report.describe())
    if "error" in doc:
        out.print(out.paint(doc["error"], False))
    out.print(out.paint("ok", True) if code == EXIT_OK else out.paint("invalid", False))
    return code


def cmd_sim(args, out: _Out) -> int:
    d = _load(args)
    reports = [check_equivalence(d, args.trials, args.seed, pattern=args.pattern)]
    if args.dtype in ("f32", "both"):
        reports.append(check_equivalence(d, args.trials, args.seed, pattern=args.pattern,
                                         dtype="f32"))
    if args.dtype == "f32":
        reports = reports[1:]
    if args.trace:
        nest = compile_design(d, pattern=args.pattern).nest
        import numpy as np
        inputs = random_inputs(d.system, nest.env, np.random.default_rng(args.seed))
        _, trace = simulate(nest, inputs, trace=True)
        with open(args.trace, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(trace.dump())
    ok = all(r.ok for r in reports)
    if args.json:
        out.print(json.dumps({"design": d.name, "ok": ok, "reports": [
            {"dtype": r.dtype, "trials": r.trials, "matches": r.matches,
             "max_deviation": r.max_deviation,
             "first_mismatch": None if r.first_mismatch is None else
             [r.first_mismatch[0], list(r.first_mismatch[1])]} for r in reports]},
            indent=2, sort_keys=True))
    else:
        for r in reports:
            out.print(out.paint(str(r), r.ok))
    return EXIT_OK if ok else EXIT_FAIL


def cmd_model(args, out: _Out) -> int:
    d = _load(args)
    report = analyze(d, pattern=args.pattern)
    check = static_dynamic_crosscheck(d, seed=args.seed, pattern=args.pattern) \
        if args.crosscheck else None
    if args.json:
        doc = report.to_dict()
        if check is not None:
            doc["crosscheck"] = {"ok": check.ok, "diagnostic": check.diagnostic,
                                 "static_utilization": str(check.static_utilization),
                                 "dynamic_utilization": None if check.dynamic_utilization is None
                                 else str(check.dynamic_utilization)}
        out.print(json.dumps(doc, indent=2, sort_keys=True))
    else:
        out.print(report.to_text().rstrip("\n"))
        if check is not None:
            text = "crosscheck ok" if check.ok else f"crosscheck FAILED: {check.diagnostic}"
            out.print(out.paint(text, check.ok))
    return EXIT_OK if check is None or check.ok else EXIT_FAIL


def cmd_emit(args, out: _Out) -> int:
    d = _load(args)
    compiled = compile_design(d, pattern=args.pattern)
    if args.ir:
        text = "".join(f"// --- after {s.name}\n{dump(s.nest)}\n" for s in compiled.snapshots)
    else:
        text = emit(compiled.nest).text
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        out.stream.write(text)
    return EXIT_OK


def cmd_explore(args, out: _Out) -> int:
    d = _load(args)
    result = explore(d, bound=args.bound, top=args.top, trials=args.trials, seed=args.seed)
    if args.json:
        out.print(json.dumps(result.to_dict(), indent=2, sort_keys=True))
    else:
        out.print(result.to_text().rstrip("\n"))
    verified = [c for c in result.candidates if c.equivalence is not None]
    return EXIT_OK if verified and all(c.verified for c in verified) else EXIT_FAIL


def cmd_list(args, out: _Out) -> int:
    if args.json:
        out.print(json.dumps({k: gallery.PROVENANCE[k] for k in gallery.KEYS}, indent=2))
        return EXIT_OK
    width = max(map(len, gallery.KEYS))
    for k in gallery.KEYS:
        out.print(f"{k.ljust(width)}  {gallery.PROVENANCE[k]}")
    return EXIT_OK


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sysc", description="Compile, simulate and model "
                                "systolic designs built from uniform recurrences.")
    sub = p.add_subparsers(dest="command", required=True)

    def design_args(sp):
        src = sp.add_mutually_exclusive_group(required=True)
        src.add_argument("design", nargs="?", help="design file (.sysd)")
        src.add_argument("--gallery", "-g", metavar="KEY", help="built-in design")
        sp.add_argument("-p", "--param", action="append", default=[], metavar="NAME=VALUE",
                        help="override a parameter (repeatable)")
        sp.add_argument("--matrix", help="replace the stt matrix, e.g. '[[1,1],[0,1]]'")
        sp.add_argument("--json", action="store_true", help="machine-readable output")

    sp = sub.add_parser("check", help="parse and report transform validity")
    design_args(sp)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("sim", help="simulate and compare against direct evaluation")
    design_args(sp)
    sp.add_argument("--trials", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--pattern", default="auto", choices=["auto", "Code2", "Code3", "Code4"])
    sp.add_argument("--dtype", default="i32", choices=["i32", "f32", "both"])
    sp.add_argument("--trace", metavar="PATH", help="write a lane trace of one run")
    sp.set_defaults(func=cmd_sim)

    sp = sub.add_parser("model", help="print the performance model")
    design_args(sp)
    sp.add_argument("--pattern", default="auto", choices=["auto", "Code2", "Code3", "Code4"])
    sp.add_argument("--crosscheck", action="store_true",
                    help="compare with trace-counted utilization")
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_model)

    sp = sub.add_parser("emit", help="write vectorized pseudocode (.sysc)")
    design_args(sp)
    sp.add_argument("--pattern", default="auto", choices=["auto", "Code2", "Code3", "Code4"])
    sp.add_argument("-o", "--output", metavar="PATH")
    sp.add_argument("--ir", action="store_true", help="dump every IR snapshot instead")
    sp.set_defaults(func=cmd_emit)

    sp = sub.add_parser("explore", help="rank all small unimodular transforms")
    design_args(sp)
    sp.add_argument("--bound", type=int, default=2, help="matrix entries lie in [-B, B]")
    sp.add_argument("--top", type=int, default=None, help="verify only the best K")
    sp.add_argument("--trials", type=int, default=3)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_explore)

    sp = sub.add_parser("list", help="list gallery designs")
    sp.add_argument("--json", action="store_true")
    sp.set_defaults(func=cmd_list)
    return p


def main(argv=None, stdout=None) -> int:
    out = _Out(stdout)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args, out)
    except USAGE_ERRORS as exc:
        print(f"sysc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SyscError as exc:
        print(f"sysc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
