"""Loop-nest IR and the reactive pass pipeline.

A design's schedule is applied one directive at a time to a ``LoopNest``;
every intermediate nest is kept as a snapshot so it can be dumped, emitted
or simulated.  The last pass (constant folding of index arithmetic) is the
only proactive one.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from . import expr as E
from . import transform as T
from .errors import (BadPermutation, BadReverse, MissingReverse, NonDivisibleFactor,
                     NotUnimodular, OuterDependence, PatternInapplicable, SemanticError,
                     ThreadsInsideSerial, UnknownLoop, InvalidTransform)
from .parser import (Blocks, ComputeAt, DesignFile, Reorder, SpaceTime, StoreIn,
                     Threads, Tile)
from .ure import Dependence, UreSystem, infer_dependences, lexicographic_order, read_offset

LOOP_KINDS = ("serial", "blocks", "threads", "time", "vectorized")


@dataclass(frozen=True)
class Loop:
    name: str
    extent: int
    kind: str = "serial"
    lower: int = 0


# --- statements -------------------------------------------------------------

@dataclass(frozen=True)
class Define:
    """Scalar index definition; ``reverse`` marks reverse-transform defs."""
    name: str
    expr: E.Expr
    reverse: bool = False


@dataclass(frozen=True)
class Compute:
    """``var = expr`` into the array, the lane register (slot 0) or a temporary."""
    var: str
    expr: E.Expr
    dest: str = "array"


@dataclass(frozen=True)
class Shift:
    var: str
    depth: int


@dataclass(frozen=True)
class Commit:
    """Copy the temporary of ``var`` into register slot 0 (Code 3 store)."""
    var: str


@dataclass(frozen=True)
class Guard:
    cond: E.Expr
    body: tuple


@dataclass(frozen=True)
class Emit:
    name: str
    args: Tuple[E.Expr, ...]
    guard: E.Expr
    value: E.Expr
    owned: Optional[E.Expr] = None     # in-domain condition after the transform


Stmt = Union[Define, Compute, Shift, Commit, Guard, Emit]


@dataclass(frozen=True)
class Storage:
    var: str
    kind: str                  # array | matrix | vector
    lanes: int = 0
    depth: int = 0
    memory: Optional[str] = None


@dataclass(frozen=True)
class Systolic:
    """Everything the space-time pass decided, kept for later stages."""
    transform: T.SpaceTimeTransform
    sources: Tuple[str, ...]            # innermost first
    dests: Tuple[str, ...]              # space, time
    source_extents: Tuple[int, ...]
    pattern: T.CodePattern
    lanes: int
    space_lower: int
    time_lower: int
    time_upper: int
    deps: Tuple[Dependence, ...]        # restricted to the source loops
    report: T.ValidityReport
    domain: E.Expr
    inlined: Tuple[str, ...] = ()

    @property
    def steps(self) -> int:
        return self.time_upper - self.time_lower + 1


@dataclass(frozen=True)
class LoopNest:
    system: UreSystem
    params: Tuple[Tuple[str, int], ...]
    loops: Tuple[Loop, ...]             # outermost first
    body: Tuple[Stmt, ...]
    storage: Tuple[Storage, ...]
    pieces: Tuple[Tuple[str, str], ...]     # original dim -> innermost loop piece
    annotations: Tuple[Tuple[str, str], ...] = ()
    systolic: Optional[Systolic] = None

    @property
    def env(self) -> Dict[str, int]:
        return dict(self.params)

    def loop(self, name: str) -> Loop:
        for l in self.loops:
            if l.name == name:
                return l
        raise UnknownLoop(f"no loop named '{name}'")

    def storage_of(self, var: str) -> Storage:
        for s in self.storage:
            if s.var == var:
                return s
        raise KeyError(var)

    @property
    def lowered(self) -> bool:
        return self.systolic is not None


# --------------------------------------------------------------------------
# passes

def merge_ures(sys: UreSystem, params: Mapping[str, int] = None) -> LoopNest:
    """Put the UREs as the body of a loop nest over the declared space."""
    env = sys.bind(params)
    ext = sys.space.extents(env)
    loops = tuple(Loop(n, ext[n]) for n in reversed(sys.space.names))
    body = tuple(Compute(eq.var, eq.expr) for eq in sys.equations)
    out = sys.output
    body += (Emit(out.name, tuple(E.Index(a) for a in out.args), out.guard, out.value),)
    storage = tuple(Storage(v, "array") for v in sys.variables)
    return LoopNest(sys, tuple(env.items()), loops, body, storage,
                    tuple((n, n) for n in sys.space.names))


def _factor(nest: LoopNest, factor) -> int:
    if isinstance(factor, int):
        return factor
    return E.eval_int(factor, nest.env)


def tile(nest: LoopNest, var: str, outer: str, inner: str, factor) -> LoopNest:
    loop = nest.loop(var)
    f = _factor(nest, factor)
    if f < 1 or loop.extent % f:
        raise NonDivisibleFactor(f"tile factor {f} does not divide the extent "
                                 f"{loop.extent} of {var}")
    taken = {l.name for l in nest.loops} | set(nest.env)
    for n in (outer, inner):
        if n in taken:
            raise SemanticError(f"loop name '{n}' is already in use")
    loops = []
    for l in nest.loops:
        if l.name == var:
            loops += [Loop(outer, l.extent // f, l.kind), Loop(inner, f, l.kind)]
        else:
            loops.append(l)
    define = Define(var, E.BinOp("+", E.BinOp("*", E.Index(outer), E.Const(f)), E.Index(inner)))
    pieces = tuple((d, inner if p == var else p) for d, p in nest.pieces)
    return replace(nest, loops=tuple(loops), body=(define,) + nest.body, pieces=pieces)


def reorder(nest: LoopNest, order: Sequence[str]) -> LoopNest:
    """``order`` lists loops innermost first, like the design file."""
    names = [l.name for l in nest.loops]
    if sorted(order) != sorted(names) or len(set(order)) != len(order):
        raise BadPermutation(f"reorder {tuple(order)} is not a permutation of {tuple(reversed(names))}")
    by_name = {l.name: l for l in nest.loops}
    return replace(nest, loops=tuple(by_name[n] for n in reversed(order)))


_RANK = {"blocks": 0, "threads": 1}


def annotate_loops(nest: LoopNest, names: Sequence[str], kind: str) -> LoopNest:
    for n in names:
        nest.loop(n)
    loops = tuple(replace(l, kind=kind) if l.name in names else l for l in nest.loops)
    ranks = [_RANK.get(l.kind, 2) for l in loops]
    for a, b, l in zip(ranks, ranks[1:], loops[1:]):
        if b < a:
            raise ThreadsInsideSerial(f"{l.kind} loop '{l.name}' is nested inside a "
                                      f"loop of a later kind")
    return replace(nest, loops=loops)


def annotate_storage(nest: LoopNest, func: str, memory: str) -> LoopNest:
    known = set(nest.system.variables) | {i.name for i in nest.system.inputs}
    if func not in known:
        raise SemanticError(f"store_in: unknown function '{func}'")
    storage = tuple(replace(s, memory=memory) if s.var == func else s for s in nest.storage)
    return replace(nest, storage=storage,
                   annotations=nest.annotations + (("store_in", f"{func}, {memory}"),))


def annotate_compute_at(nest: LoopNest, func: str, consumer: str, loop: str) -> LoopNest:
    nest.loop(loop)
    return replace(nest, annotations=nest.annotations +
                   (("compute_at", f"{func}, {consumer}, {loop}"),))


# --------------------------------------------------------------------------
# space-time pass

def _header_offsets(sys: UreSystem, ref: E.VarRef, params) -> Dict[str, int]:
    return dict(zip(sys.indices, read_offset(sys, ref, params)))


def _hazards(sys: UreSystem, ages: Mapping[Tuple[str, int], int]) -> List[str]:
    """Variables read at age >= 1 by a statement placed after their own
    definition; writing such a variable in place (Code 4) would clobber it."""
    order = {eq.var: k for k, eq in enumerate(sys.equations)}
    out = []
    for k, eq in enumerate(sys.equations):
        for n in E.walk(eq.expr):
            if isinstance(n, E.VarRef) and order[n.name] < k and ages[(eq.var, id(n))] >= 1:
                out.append(n.name)
    return out


def space_time_pass(nest: LoopNest, stt: T.SpaceTimeTransform, sources: Sequence[str],
                    dests: Sequence[str] = ("s", "t"), pattern="auto") -> LoopNest:
    """Replace the innermost source loops by a time loop and a vectorized
    space loop, storing every variable in lane registers."""
    sys = nest.system
    env = nest.env
    sources = tuple(sources)
    k = len(sources)
    if len(dests) != 2:
        raise SemanticError("only linear arrays are supported: stt needs exactly "
                            "one space loop and one time loop")
    inner = tuple(l.name for l in reversed(nest.loops[-k:])) if k <= len(nest.loops) else ()
    if inner != sources:
        raise SemanticError(f"stt source loops {sources} must be the innermost loops "
                            f"(innermost first: {inner})")
    if stt.dims != k:
        raise SemanticError(f"transform has {stt.dims} columns for {k} source loops")
    if any(l.kind != "serial" for l in nest.loops[-k:]):
        raise SemanticError("stt source loops must be serial")

    piece_of = {p: d for d, p in nest.pieces}
    as_dims = tuple(piece_of.get(s, f"<{s}>") for s in sources)
    deps = infer_dependences(sys, env)
    try:
        restricted = tuple(T.restrict_dependences(deps, sys.indices, as_dims))
    except OuterDependence as exc:
        raise OuterDependence(f"{exc} (the source loops must carry every dependence)") from None
    extents = tuple(nest.loop(s).extent for s in sources)
    tiled = [piece_of.get(s) is not None and piece_of[s] != s for s in sources]
    for d in restricted:
        # a distance as long as the tile always lands in another tile
        if any(t and abs(v) >= n for v, n, t in zip(d.distance, extents, tiled)):
            raise OuterDependence(f"{d.variable} dependence {d.distance} does not fit inside "
                                  f"the source loop extents {extents}")
    report = T.check_validity(stt, restricted, extents)
    if not report.valid:
        raise InvalidTransform(report)

    try:
        reverse = T.reverse_exprs(stt, sources, dests)
    except NotUnimodular as exc:
        raise MissingReverse(f"{exc}; supply a reverse {{...}} block") from None
    _verify_reverse(stt, sources, dests, extents, env)

    # dependence bookkeeping per read site
    dist, full, names = {}, {}, {}
    for eq in sys.equations:
        for n in E.walk(eq.expr):
            if isinstance(n, E.VarRef):
                key = (eq.var, id(n))
                off = _header_offsets(sys, n, env)
                full[key] = off
                dist[key] = tuple(off.get(d, 0) for d in as_dims)
                names[key] = n.name
    ages = {key: T._dot(stt.schedule, v) for key, v in dist.items()}
    for n in list(E.walk(sys.output.value)) + list(E.walk(sys.output.guard)):
        if isinstance(n, E.VarRef) and any(_header_offsets(sys, n, env).values()):
            raise SemanticError("the output may only read variables at the current point")

    # a broadcast value reused at time distance 0 is recomputed in place
    inline = {names[k] for k, age in ages.items()
              if age == 0 and any(dist[k]) and _is_broadcast(sys, names[k])}
    max_age: Dict[str, int] = {v: 0 for v in sys.variables}
    for key, age in ages.items():
        if names[key] not in inline:
            max_age[names[key]] = max(max_age[names[key]], age)

    pat = _choose_pattern(pattern, stt, sys, ages, max_age)

    lo, hi = T.space_bounds(stt, extents)
    t0, t1 = T.time_bounds(stt, extents)
    lanes = hi - lo + 1

    def slot(age: int) -> int:
        if pat is T.CodePattern.CODE2:
            return age
        if pat is T.CodePattern.CODE3:
            return age - 1 if age else -1
        return 0

    def rewrite(e: E.Expr, owner: Optional[str]) -> E.Expr:
        if isinstance(e, E.VarRef):
            if owner is None:
                return E.RegRef(e.name, 0, 0)
            key = (owner, id(e))
            if e.name in inline and any(dist[key]):
                header = sys.equation(e.name).args
                body = E.substitute(sys.equation(e.name).expr, dict(zip(header, e.args)))
                return rewrite(body, e.name)
            vec = dist[key]
            lane_off = -sum(r * v for r, v in zip(stt.allocation[0], vec))
            return E.RegRef(e.name, lane_off, slot(ages[key]))
        if isinstance(e, E.InputRef):
            return e
        kids = E.children(e)
        if not kids:
            return e
        new = [rewrite(c, owner) for c in kids]
        if isinstance(e, E.Select):
            return E.Select(new[0], new[1], new[2] if len(new) > 2 else None)
        if isinstance(e, E.BinOp):
            return E.BinOp(e.op, new[0], new[1])
        if isinstance(e, E.Neg):
            return E.Neg(new[0])
        raise TypeError(e)

    storage = []
    for v in sys.variables:
        dep = _deepest(restricted, v, stt) if v in max_age else None
        ln, depth = T.register_shape(stt, dep, pat, extents)
        depth = max(depth, _depth_needed(pat, max_age[v]))
        old = nest.storage_of(v)
        storage.append(Storage(v, "matrix" if depth > 1 else "vector", ln, depth, old.memory))

    domain = E.conj([term for s, n in zip(sources, extents)
                     for term in (E.BinOp("<=", E.Const(0), E.Index(s)),
                                  E.BinOp("<", E.Index(s), E.Const(n)))])
    defs = tuple(Define(s, ex, reverse=True) for s, ex in reverse)
    index_defs = tuple(s for s in nest.body if isinstance(s, Define))
    computes = [(eq.var, rewrite(eq.expr, eq.var)) for eq in sys.equations]
    out = sys.output
    emit = Emit(out.name, tuple(E.Index(a) for a in out.args), out.guard,
                rewrite(out.value, None), owned=domain)
    shifts = tuple(Shift(s.var, s.depth) for s in storage if s.depth > 1)

    if pat is T.CodePattern.CODE2:
        guard = Guard(domain, tuple(Compute(v, ex, "reg") for v, ex in computes))
        body = shifts + defs + index_defs + (guard, emit)
    elif pat is T.CodePattern.CODE3:
        guard = Guard(domain, tuple(Compute(v, ex, "tmp") for v, ex in computes))
        commits = tuple(Commit(v) for v in sys.variables)
        body = defs + index_defs + (guard,) + shifts + commits + (emit,)
    else:
        body = defs + index_defs + tuple(Compute(v, ex, "reg") for v, ex in computes) + (emit,)

    outer = tuple(l for l in nest.loops[:-k])
    loops = outer + (Loop(dests[-1], t1 - t0 + 1, "time", t0),
                     Loop(dests[0], lanes, "vectorized", lo))
    systolic = Systolic(stt, sources, tuple(dests), extents, pat, lanes, lo, t0, t1,
                        restricted, report, domain, tuple(sorted(inline)))
    return replace(nest, loops=loops, body=body, storage=tuple(storage), systolic=systolic)


def _is_broadcast(sys, var):
    return not any(isinstance(n, E.VarRef) for n in E.walk(sys.equation(var).expr))


def _deepest(deps, var, stt) -> Optional[Dependence]:
    best = None
    for d in deps:
        if d.variable == var and (best is None or
                                  T._dot(stt.schedule, d.distance) > T._dot(stt.schedule, best.distance)):
            best = d
    return best


def _depth_needed(pat, age: int) -> int:
    if pat is T.CodePattern.CODE2:
        return age + 1
    if pat is T.CodePattern.CODE3:
        return max(age, 1)
    return 1


def _choose_pattern(pattern, stt, sys, ages, max_age) -> T.CodePattern:
    deep = [v for v, a in max_age.items() if a > 1]
    hazards = _hazards(sys, ages)
    if pattern in (None, "auto"):
        if stt.check_time:
            return T.CodePattern.CODE2
        return T.CodePattern.CODE3 if deep or hazards else T.CodePattern.CODE4
    pat = T.CodePattern.parse(pattern)
    if pat is T.CodePattern.CODE4:
        if stt.check_time:
            raise PatternInapplicable("Code4 cannot honour check_time")
        if deep:
            raise PatternInapplicable(f"Code4 needs s.e <= 1; {', '.join(sorted(deep))} "
                                      f"need deeper registers")
        if hazards:
            raise PatternInapplicable(f"Code4 would overwrite {', '.join(sorted(set(hazards)))} "
                                      f"before a later statement reads its previous value")
    return pat


def _verify_reverse(stt, sources, dests, extents, env):
    import itertools
    for z in itertools.product(*[range(n) for n in extents]):
        space, time = T.apply_point(stt, z)
        back = T.reverse_point(stt, space, time, sources, dests, env)
        if tuple(back) != z:
            raise BadReverse(f"reverse transform maps ({space}, {time}) to {tuple(back)}, "
                             f"expected {z}")


# --------------------------------------------------------------------------
# proactive phase

def constant_fold(nest: LoopNest) -> LoopNest:
    """Compose index definitions into single affine forms and drop the
    intermediate ones that nothing reads any more."""
    env = nest.env
    loop_order = [l.name for l in nest.loops]
    rev_order = list(nest.systolic.dests) if nest.systolic else loop_order
    known: Dict[str, E.Expr] = {}
    kept = []

    def resolve(e):
        return E.fold(E.substitute(e, {n: x for n, x in known.items()}), env, loop_order)

    def fold_body(stmts, top):
        out = []
        for s in stmts:
            if isinstance(s, Define):
                ex = E.fold(s.expr, env, rev_order) if s.reverse else resolve(s.expr)
                if not s.reverse:
                    known[s.name] = ex
                out.append(replace(s, expr=ex))
            elif isinstance(s, Guard):
                out.append(Guard(E.fold(s.cond, env, loop_order), tuple(fold_body(s.body, False))))
            elif isinstance(s, Compute):
                out.append(replace(s, expr=E.fold(s.expr, env, loop_order)))
            elif isinstance(s, Emit):
                out.append(replace(s, guard=E.fold(s.guard, env, loop_order),
                                   value=E.fold(s.value, env, loop_order)))
            else:
                out.append(s)
        return out

    body = fold_body(nest.body, True)
    dims = set(nest.system.space.names)
    for s in body:
        if isinstance(s, Define) and not s.reverse and s.name not in dims:
            continue
        kept.append(s)
    return replace(nest, body=tuple(kept))


# --------------------------------------------------------------------------
# driver

@dataclass(frozen=True)
class Snapshot:
    name: str
    nest: LoopNest


@dataclass(frozen=True)
class Compiled:
    design: DesignFile
    snapshots: Tuple[Snapshot, ...]

    @property
    def nest(self) -> LoopNest:
        return self.snapshots[-1].nest

    @property
    def params(self) -> Dict[str, int]:
        return self.nest.env


def transform_of(d: SpaceTime, params: Mapping[str, int]) -> T.SpaceTimeTransform:
    matrix = [[E.eval_int(v, params) for v in row] for row in d.matrix]
    return T.SpaceTimeTransform.from_matrix(matrix, reverse=d.reverse, check_time=d.check_time)


def compile_design(design: DesignFile, overrides: Mapping[str, int] = None,
                   pattern="auto", fold: bool = True) -> Compiled:
    sys = design.system
    nest = merge_ures(sys, overrides)
    lexicographic_order(sys, params=nest.env)   # rejects systems with no valid serial order
    snaps = [Snapshot("merge_ures", nest)]
    for d in design.schedule:
        if isinstance(d, Tile):
            nest = tile(nest, d.var, d.outer, d.inner, d.factor)
            name = f"tile {d.var}"
        elif isinstance(d, Reorder):
            nest = reorder(nest, d.loops)
            name = "reorder"
        elif isinstance(d, Blocks):
            nest = annotate_loops(nest, d.loops, "blocks")
            name = "blocks"
        elif isinstance(d, Threads):
            nest = annotate_loops(nest, d.loops, "threads")
            name = "threads"
        elif isinstance(d, StoreIn):
            nest = annotate_storage(nest, d.func, d.memory)
            name = "store_in"
        elif isinstance(d, ComputeAt):
            nest = annotate_compute_at(nest, d.func, d.consumer, d.loop)
            name = "compute_at"
        elif isinstance(d, SpaceTime):
            t = transform_of(d, nest.env)
            nest = space_time_pass(nest, t, d.sources, d.dests, pattern)
            name = "space_time"
        else:
            raise TypeError(d)
        snaps.append(Snapshot(name, nest))
    if fold:
        snaps.append(Snapshot("constant_fold", constant_fold(nest)))
    return Compiled(design, tuple(snaps))


# --------------------------------------------------------------------------
# dump

def _stmt_lines(s: Stmt, indent: str) -> List[str]:
    if isinstance(s, Define):
        tag = "   // reverse" if s.reverse else ""
        return [f"{indent}{s.name} = {E.to_text(s.expr)}{tag}"]
    if isinstance(s, Compute):
        if s.dest == "array":
            return [f"{indent}{s.var}(*) = {E.to_text(s.expr)}"]
        target = f"{s.var}_tmp(s)" if s.dest == "tmp" else f"{s.var}(s)[0]"
        return [f"{indent}{target} = {E.to_text(s.expr)}"]
    if isinstance(s, Shift):
        return [f"{indent}shift {s.var}[1:{s.depth}] = {s.var}[0:{s.depth - 1}]"]
    if isinstance(s, Commit):
        return [f"{indent}{s.var}(s)[0] = {s.var}_tmp(s)"]
    if isinstance(s, Guard):
        lines = [f"{indent}if {E.to_text(s.cond)}:"]
        for b in s.body:
            lines += _stmt_lines(b, indent + "  ")
        return lines
    if isinstance(s, Emit):
        args = ", ".join(E.to_text(a) for a in s.args)
        cond = E.to_text(s.guard)
        if s.owned is not None:
            cond = f"{E.to_text(s.owned)} && ({cond})"
        return [f"{indent}if {cond}: {s.name}({args}) = {E.to_text(s.value)}"]
    raise TypeError(s)


def dump(nest: LoopNest) -> str:
    """Stable indented text: storage, loops, then statements."""
    lines = []
    for st in nest.storage:
        mem = f" in {st.memory}" if st.memory else ""
        shape = "" if st.kind == "array" else f"[{st.lanes}x{st.depth}]"
        lines.append(f"storage {st.var}: {st.kind}{shape}{mem}")
    for kind, text in nest.annotations:
        if kind != "store_in":
            lines.append(f"{kind} {text}")
    indent = ""
    for l in nest.loops:
        kind = "" if l.kind == "serial" else f" {l.kind}"
        lines.append(f"{indent}for {l.name} in [{l.lower}, {l.lower + l.extent}){kind}")
        indent += "  "
    for s in nest.body:
        lines += _stmt_lines(s, indent)
    return "\n".join(lines) + "\n"
