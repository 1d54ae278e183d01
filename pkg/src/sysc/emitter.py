"""Vectorized pseudocode (``.sysc``) for lowered loop nests.

The dialect mirrors the Code 2/3/4 skeletons: lane-vector and lane-matrix
declarations per thread, a serial time loop with literal bounds, and an
innermost ``vectorize for`` whose statements act on whole lane rows.
Loops print as ``for <name> in [<lo>, <hi>)``, prefixed with ``parallel``
for blocks/threads and with ``vectorize`` for the space loop; a trailing
``// <kind>`` comment names the loop kind.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Dict, List, Tuple

from . import expr as E
from .errors import UnloweredNest
from .ir import LOOP_KINDS, Commit, Compute, Define, Emit, Guard, LoopNest, Shift
from .transform import CodePattern

INDENT = "  "


@dataclass(frozen=True)
class EmittedProgram:
    text: str
    pattern: str
    storage: Tuple[Tuple[str, str], ...]     # (variable, declaration)
    lanes: int
    time_bounds: Tuple[int, int]             # half-open [lo, hi)
    loops: Tuple[Tuple[str, str, int, int], ...]   # (kind, name, lo, hi) outermost first

    def write(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.text)


def _render(e: E.Expr, storage: Dict[str, int]) -> str:
    """Expression text with register reads spelled as lane accesses."""
    def fn(node):
        if isinstance(node, E.RegRef):
            lane = "s" if node.lane_offset == 0 else \
                f"s {'+' if node.lane_offset > 0 else '-'} {abs(node.lane_offset)}"
            if node.slot < 0:
                return E.Index(f"{node.name}_new({lane})")
            if storage.get(node.name, 1) == 1:
                return E.Index(f"{node.name}({lane})")
            return E.Index(f"{node.name}({lane})[{node.slot}]")
        return None
    return E.to_text(E.map_expr(e, fn))


def _target(var: str, dest: str, storage: Dict[str, int]) -> str:
    if dest == "tmp":
        return f"{var}_new(s)"
    return f"{var}(s)" if storage.get(var, 1) == 1 else f"{var}(s)[0]"


def _statements(body, storage, indent, lowered, headers) -> List[str]:
    lines = []
    for s in body:
        if isinstance(s, Define):
            note = "   // reverse transform" if s.reverse else ""
            lines.append(f"{indent}{s.name} = {E.to_text(s.expr)};{note}")
        elif isinstance(s, Shift):
            lines.append(f"{indent}{s.var}[1:{s.depth}] = {s.var}[0:{s.depth - 1}];   // shift")
        elif isinstance(s, Compute):
            if lowered:
                lines.append(f"{indent}{_target(s.var, s.dest, storage)} = "
                             f"{_render(s.expr, storage)};")
            else:
                lines.append(f"{indent}{s.var}({', '.join(headers[s.var])}) = {E.to_text(s.expr)};")
        elif isinstance(s, Commit):
            lines.append(f"{indent}{_target(s.var, 'reg', storage)} = {s.var}_new(s);   // store")
        elif isinstance(s, Guard):
            lines.append(f"{indent}if ({E.to_text(s.cond)}) {{   // z in the original iteration space")
            lines += _statements(s.body, storage, indent + INDENT, lowered, headers)
            lines.append(f"{indent}}}")
        elif isinstance(s, Emit):
            args = ", ".join(E.to_text(a) for a in s.args)
            cond = E.to_text(s.guard)
            if s.owned is not None:
                cond = f"{E.to_text(s.owned)} && ({cond})"
            value = _render(s.value, storage) if lowered else E.to_text(s.value)
            lines.append(f"{indent}if ({cond}) {s.name}({args}) = {value};")
        else:
            raise TypeError(s)
    return lines


def _loop_line(l, indent) -> str:
    head = {"blocks": "parallel for", "threads": "parallel for",
            "vectorized": "vectorize for"}.get(l.kind, "for")
    tag = "" if l.kind == "serial" else f"   // {l.kind}"
    return f"{indent}{head} {l.name} in [{l.lower}, {l.lower + l.extent}){tag}"


def emit(nest: LoopNest) -> EmittedProgram:
    for l in nest.loops:
        if l.kind not in LOOP_KINDS:
            raise UnloweredNest(f"loop '{l.name}' has unresolved kind {l.kind!r}")
    sys = nest.system
    sy = nest.systolic
    dtype = sys.dtype
    lines = [f"// {sys.name}: vectorized systolic pseudocode"]
    decls: List[Tuple[str, str]] = []
    storage: Dict[str, int] = {}
    if sy is not None:
        t = sy.transform
        space = E.from_affine(dict(zip(sy.sources, t.allocation[0])), 0, list(sy.sources))
        time = E.from_affine(dict(zip(sy.sources, t.schedule)), 0, list(sy.sources))
        rows = ", ".join("[" + ", ".join(map(str, r)) + "]" for r in t.matrix)
        rev = ", ".join(f"{s.name} = {E.to_text(s.expr)}" for s in nest.body
                        if isinstance(s, Define) and s.reverse)
        lines.append(f"// transform ({', '.join(sy.sources)}) -> ({', '.join(sy.dests)}) "
                     f"matrix [{rows}]")
        lines.append(f"//   {sy.dests[0]} = {E.to_text(space)}, {sy.dests[-1]} = {E.to_text(time)}")
        lines.append(f"// reverse: {rev}")
        lines.append("// validity:")
        lines += [f"//{line[1:]}" for line in sy.report.describe().splitlines()]
        lines.append(f"// pattern {sy.pattern.value}, {sy.lanes} lanes, "
                     f"time [{sy.time_lower}, {sy.time_upper + 1})")
        for st in nest.storage:
            storage[st.var] = st.depth
            mem = f"   // {st.memory}" if st.memory else ""
            if st.depth == 1:
                decl = f"vector<{dtype}, {st.lanes}> {st.var};{mem}"
            else:
                decl = f"matrix<{dtype}, {st.lanes}, {st.depth}> {st.var};{mem}"
            decls.append((st.var, decl))
        if sy.pattern is CodePattern.CODE3:
            for st in nest.storage:
                decls.append((st.var + "_new", f"vector<{dtype}, {st.lanes}> {st.var}_new;"))
    else:
        for st in nest.storage:
            mem = f"   // {st.memory}" if st.memory else ""
            decl = f"array<{dtype}> {st.var};{mem}"
            decls.append((st.var, decl))
            lines.append(decl)
    for kind, text in nest.annotations:
        lines.append(f"// {kind} {text}")

    indent = ""
    loops = []
    first_serial = next((i for i, l in enumerate(nest.loops)
                         if l.kind not in ("blocks", "threads")), len(nest.loops))
    for i, l in enumerate(nest.loops):
        if sy is not None and i == first_serial:
            lines += [f"{indent}{d}" for _, d in decls]
        lines.append(_loop_line(l, indent))
        loops.append((l.kind, l.name, l.lower, l.lower + l.extent))
        indent += INDENT
    headers = {eq.var: eq.args for eq in sys.equations}
    lines += _statements(nest.body, storage, indent, sy is not None, headers)
    text = "\n".join(lines) + "\n"
    return EmittedProgram(text, sy.pattern.value if sy else "serial", tuple(decls),
                          sy.lanes if sy else 1,
                          (sy.time_lower, sy.time_upper + 1) if sy else (0, 0), tuple(loops))


_LOOP_RE = re.compile(r"^(?P<indent> *)(?P<head>parallel for|vectorize for|for) (?P<name>\w+) "
                      r"in \[(?P<lo>-?\d+), (?P<hi>-?\d+)\)(?:\s+// (?P<tag>\w+))?\s*$")
_DECL_RE = re.compile(r"^\s*(vector|matrix)<(\w+), (\d+)(?:, (\d+))?> (\w+);")


def reparse_structure(text: str):
    """Recover ((kind, name, lo, hi), ...) and {var: (lanes, depth)} from text."""
    loops = []
    decls = {}
    depth = -1
    for line in text.replace("\r\n", "\n").split("\n"):
        m = _LOOP_RE.match(line)
        if m:
            level = len(m["indent"]) // len(INDENT)
            if level != depth + 1:
                raise ValueError(f"loop {m['name']} is not nested in the previous loop")
            depth = level
            kind = m["tag"] if m["tag"] in LOOP_KINDS else "serial"
            if m["head"] == "vectorize for":
                kind = "vectorized"
            loops.append((kind, m["name"], int(m["lo"]), int(m["hi"])))
            continue
        d = _DECL_RE.match(line)
        if d:
            decls[d[5]] = (int(d[3]), int(d[4] or 1))
    return tuple(loops), decls
