"""Analytical performance model of a lowered design.

All ratios are kept as exact fractions; percentages are rendered at two
significant figures.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Mapping, Optional

import numpy as np

from . import expr as E
from .errors import SemanticError, SyscError, UnloweredNest
from .ir import Compiled, Compute, Define, Emit, Guard, LoopNest, compile_design
from .parser import DesignFile
from .simulator import _simulate_lowered, count_useful_ops
from .ure import random_inputs

# 128 vector registers of 32 bytes each, i.e. 8 scalar lanes per register
HW_SCALAR_REGISTERS = 128 * 8


@dataclass
class PerfReport:
    design: str
    pattern: str
    lanes: int
    steps_per_pass: int
    passes: int
    time_steps: int
    outputs_per_thread: int
    filter_taps: Fraction
    outturn: Fraction
    utilization: Fraction
    register_usage: int
    registers: Dict[str, int]
    staging: int
    warnings: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "design": self.design, "pattern": self.pattern, "lanes": self.lanes,
            "steps_per_pass": self.steps_per_pass, "passes": self.passes,
            "time_steps": self.time_steps, "outputs_per_thread": self.outputs_per_thread,
            "filter_taps": str(self.filter_taps),
            "outturn": str(self.outturn), "outturn_value": float(self.outturn),
            "utilization": str(self.utilization),
            "utilization_percent": percent(self.utilization),
            "register_usage": self.register_usage, "registers": dict(self.registers),
            "staging": self.staging, "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        regs = " + ".join(f"{v}:{n}" for v, n in self.registers.items())
        rows = [
            ("design", self.design),
            ("pattern", self.pattern),
            ("lanes", str(self.lanes)),
            ("time steps", f"{self.time_steps}" + (f" ({self.passes} x {self.steps_per_pass})"
                                                   if self.passes > 1 else "")),
            ("outputs/thread", str(self.outputs_per_thread)),
            ("outturn", f"{sig2(self.outturn)} ({self.outturn})"),
            ("utilization", f"{percent(self.utilization)} ({self.utilization})"),
            ("reg usage", f"{self.register_usage} ({regs} + staging:{self.staging})"),
        ]
        width = max(len(k) for k, _ in rows)
        lines = [f"{k.ljust(width)}  {v}" for k, v in rows]
        lines += [f"warning: {w}" for w in self.warnings]
        return "\n".join(lines) + "\n"


def _round2(x: float) -> float:
    if x == 0:
        return 0.0
    return round(x, 1 - int(math.floor(math.log10(abs(x)))))


def sig2(x) -> str:
    """Two significant figures, without exponent notation."""
    v = _round2(float(x))
    return str(int(v)) if v == int(v) else f"{v:g}"


def percent(x) -> str:
    return sig2(Fraction(x) * 100) + "%"


# --------------------------------------------------------------------------

def _nest_of(obj, overrides=None, pattern="auto") -> LoopNest:
    if isinstance(obj, DesignFile):
        return compile_design(obj, overrides, pattern).nest
    if isinstance(obj, Compiled):
        return obj.nest
    return obj


def _thread_grids(nest: LoopNest):
    """Index environments covering every (pass, t, s) of thread 0."""
    sy = nest.systolic
    serial = [l for l in nest.loops if l.kind == "serial"]
    par = [l for l in nest.loops if l.kind in ("blocks", "threads")]
    t = np.arange(sy.time_lower, sy.time_upper + 1)[:, None]
    s = np.arange(sy.space_lower, sy.space_lower + sy.lanes)[None, :]
    combos = np.stack(np.meshgrid(*[np.arange(l.lower, l.lower + l.extent) for l in serial],
                                  indexing="ij"), -1).reshape(-1, len(serial)) if serial \
        else np.zeros((1, 0), dtype=np.int64)
    for combo in combos:
        env = {l.name: l.lower for l in par}
        env.update({l.name: int(v) for l, v in zip(serial, combo)})
        env[sy.dests[-1]] = t
        env[sy.dests[0]] = s
        for st in nest.body:
            if isinstance(st, Define):
                env[st.name] = E.eval_vec(st.expr, nest.env, env)
        yield env


def _grid(x, shape):
    return np.broadcast_to(np.asarray(x), shape)


def _input_refs(nest: LoopNest):
    def stmts(body):
        for s in body:
            if isinstance(s, Guard):
                yield from stmts(s.body)
            elif isinstance(s, Compute):
                yield s.expr
            elif isinstance(s, Emit):
                yield s.value
    for ex in stmts(nest.body):
        for n in E.walk(ex):
            if isinstance(n, E.InputRef):
                yield n


def analyze(nest, overrides: Mapping[str, int] = None, pattern="auto") -> PerfReport:
    """Static lanes, steps, outputs, utilization and register usage."""
    nest = _nest_of(nest, overrides, pattern)
    sy = nest.systolic
    if sy is None:
        raise UnloweredNest("performance analysis needs a space-time transformed nest")
    emit = next(s for s in nest.body if isinstance(s, Emit))
    shape = (sy.steps, sy.lanes)
    outputs = 0
    passes = 0
    staged: Dict[str, set] = {}
    refs = list(_input_refs(nest))
    for env in _thread_grids(nest):
        passes += 1
        dom = _grid(E.eval_vec(sy.domain, nest.env, env), shape) != 0
        try:
            g = _grid(E.eval_vec(emit.guard, nest.env, env), shape) != 0
        except (TypeError, KeyError):
            raise SemanticError("the output guard must depend on indices only") from None
        outputs += int((dom & g).sum())
        for ref in refs:
            coords = tuple(_grid(E.eval_vec(a, nest.env, env), shape)[dom] for a in ref.args)
            staged.setdefault(ref.name, set()).update(zip(*coords))
    domain = int(np.prod(sy.source_extents))
    useful = domain * passes
    steps = sy.steps * passes
    warnings = []
    if outputs:
        taps = Fraction(useful, outputs)
        util = Fraction(outputs) * taps / (sy.lanes * steps)
    else:
        taps = Fraction(0)
        util = Fraction(0)
        warnings.append("the output guard never holds inside the domain")
    registers = {st.var: st.lanes * st.depth for st in nest.storage}
    staging = sum(len(v) for v in staged.values())
    usage = sum(registers.values()) + staging
    if usage > HW_SCALAR_REGISTERS:
        warnings.append(f"register usage {usage} exceeds the {HW_SCALAR_REGISTERS} scalar "
                        f"registers of 128 x 32-byte vector registers")
    return PerfReport(nest.system.name, sy.pattern.value, sy.lanes, sy.steps, passes, steps,
                      outputs, taps, Fraction(outputs, steps), util, usage, registers,
                      staging, warnings)


@dataclass
class Crosscheck:
    ok: bool
    static_utilization: Fraction
    dynamic_utilization: Optional[Fraction]
    static_steps: int
    dynamic_steps: Optional[int]
    diagnostic: str = ""

    def __bool__(self):
        return self.ok


def static_dynamic_crosscheck(design, overrides: Mapping[str, int] = None, seed: int = 0,
                              pattern="auto") -> Crosscheck:
    """Compare the analytical utilization and step count with a traced run."""
    nest = _nest_of(design, overrides, pattern)
    report = analyze(nest)
    rng = np.random.default_rng(seed)
    inputs = random_inputs(nest.system, nest.env, rng)
    try:
        _, written, trace = _simulate_lowered(nest, [inputs], trace=True)
    except SyscError as exc:
        return Crosscheck(False, report.utilization, None, report.time_steps, None,
                          f"simulation failed: {exc}")
    useful, total = count_useful_ops(trace)
    dyn_util = Fraction(useful, total)
    dyn_steps = trace.steps * report.passes
    problems = []
    if report.outputs_per_thread == 0:
        problems.append("no outputs are produced")
    if not written.all():
        problems.append(f"{int((~written).sum())} output element(s) never written")
    if dyn_util != report.utilization:
        problems.append(f"utilization: static {report.utilization} vs traced {dyn_util}")
    if dyn_steps != report.time_steps:
        problems.append(f"time steps: static {report.time_steps} vs traced {dyn_steps}")
    return Crosscheck(not problems, report.utilization, dyn_util, report.time_steps,
                      dyn_steps, "; ".join(problems))
