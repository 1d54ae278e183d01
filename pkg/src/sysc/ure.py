"""URE systems, dependence extraction and the direct (non-systolic) evaluator.

The direct evaluator is the correctness oracle for everything downstream:
it walks the full rectangular iteration space in a lexicographic order that
respects every dependence, stores each variable element exactly once, and
collects the output where its guard holds.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import expr as E
from .errors import (DoubleWrite, EvaluationOrderError, MissingOutput,
                     MultipleDependences, NonUniformDependence, SemanticError,
                     UndefinedRead)

DTYPES = {"i32": np.int64, "f32": np.float64}


@dataclass(frozen=True)
class Dim:
    name: str
    extent: E.Expr


@dataclass(frozen=True)
class IterationSpace:
    """Rectangular space; ``dims`` are listed innermost-first."""
    dims: Tuple[Dim, ...]

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(d.name for d in self.dims)

    def extents(self, params: Mapping[str, int]) -> Dict[str, int]:
        out = {}
        for d in self.dims:
            n = E.eval_int(d.extent, params)
            if n < 1:
                raise SemanticError(f"extent of {d.name} must be >= 1, got {n}")
            out[d.name] = n
        return out


@dataclass(frozen=True)
class InputDecl:
    name: str
    dtype: str
    shape: Tuple[E.Expr, ...]


@dataclass(frozen=True)
class Equation:
    var: str
    args: Tuple[str, ...]
    expr: E.Expr


@dataclass(frozen=True)
class OutputDecl:
    name: str
    args: Tuple[str, ...]
    guard: E.Expr
    value: E.Expr


@dataclass(frozen=True)
class Dependence:
    variable: str
    distance: Tuple[int, ...]
    broadcast: bool = False


@dataclass(frozen=True)
class UreSystem:
    name: str
    params: Tuple[Tuple[str, E.Expr], ...]
    inputs: Tuple[InputDecl, ...]
    variables: Tuple[str, ...]
    space: IterationSpace
    equations: Tuple[Equation, ...]
    output: OutputDecl

    @property
    def indices(self) -> Tuple[str, ...]:
        """Index order used for dependence distances: the equation headers."""
        return self.equations[0].args

    @property
    def dtype(self) -> str:
        return "f32" if any(i.dtype == "f32" for i in self.inputs) else "i32"

    def equation(self, var: str) -> Equation:
        for eq in self.equations:
            if eq.var == var:
                return eq
        raise KeyError(var)

    def input(self, name: str) -> InputDecl:
        for i in self.inputs:
            if i.name == name:
                return i
        raise KeyError(name)

    def bind(self, overrides: Mapping[str, int] = None) -> Dict[str, int]:
        """Evaluate parameter definitions in order, applying overrides."""
        overrides = dict(overrides or {})
        out: Dict[str, int] = {}
        for name, value in self.params:
            out[name] = overrides.pop(name) if name in overrides else E.eval_int(value, out)
        if overrides:
            raise SemanticError(f"unknown parameter(s): {', '.join(sorted(overrides))}")
        return out

    def input_shapes(self, params: Mapping[str, int]) -> Dict[str, Tuple[int, ...]]:
        return {i.name: tuple(E.eval_int(s, params) for s in i.shape) for i in self.inputs}

    def output_shape(self, params: Mapping[str, int]) -> Tuple[int, ...]:
        ext = self.space.extents(params)
        return tuple(ext[a] for a in self.output.args)


# --------------------------------------------------------------------------
# dependences

def read_offset(sys: UreSystem, ref: E.VarRef, params: Mapping[str, int] = None) -> Tuple[int, ...]:
    """Distance e = z - z' of a read ``V(z')`` performed at point z.

    Offsets may use parameters (``p + P - 1``); ``params`` binds them and
    defaults to the declared values.
    """
    params = sys.bind() if params is None else params
    header = sys.equation(ref.name).args
    offs = {}
    for dim, arg in zip(header, ref.args):
        form = E.affine_form(arg, params)
        if form is None or set(form[0]) - {dim} or form[0].get(dim, 0) != 1:
            raise NonUniformDependence(
                f"{E.to_text(ref)}: index '{E.to_text(arg)}' is not '{dim}' plus a constant")
        offs[dim] = -form[1]
    return tuple(offs[d] for d in sys.indices)


def _path_reads(e: E.Expr):
    """All read-sets along the select paths of ``e``.

    Every returned set holds the VarRefs one evaluation can touch; the two
    arms of a select never appear in the same set.
    """
    if isinstance(e, E.VarRef):
        inner = [set()]
        for a in e.args:
            inner = [x | y for x in inner for y in _path_reads(a)]
        return [s | {e} for s in inner]
    if isinstance(e, E.Select):
        cond = _path_reads(e.cond)
        arms = _path_reads(e.then) + (_path_reads(e.orelse) if e.orelse is not None else [set()])
        return [c | a for c in cond for a in arms]
    paths = [set()]
    for c in E.children(e):
        paths = [x | y for x in paths for y in _path_reads(c)]
        if len(paths) > 4096:
            raise MultipleDependences("expression has too many select paths to analyse")
    return paths


def is_broadcast_source(sys: UreSystem, var: str) -> bool:
    """True when the defining equation of ``var`` reads only inputs/params."""
    return not any(isinstance(n, E.VarRef) for n in E.walk(sys.equation(var).expr))


def infer_dependences(sys: UreSystem, params: Mapping[str, int] = None) -> list:
    """One Dependence per (variable, non-zero distance) read in the system.

    A variable may be read at two distances only from mutually exclusive
    select arms; reading it twice on one evaluation path is rejected.
    """
    params = sys.bind() if params is None else params
    found: Dict[Tuple[str, Tuple[int, ...]], None] = {}
    exprs = [eq.expr for eq in sys.equations] + [sys.output.guard, sys.output.value]
    for ex in exprs:
        for path in _path_reads(ex):
            seen: Dict[str, Tuple[int, ...]] = {}
            for ref in path:
                off = read_offset(sys, ref, params)
                if ref.name in seen and seen[ref.name] != off:
                    raise MultipleDependences(
                        f"{ref.name} is read at distances {seen[ref.name]} and {off} "
                        f"on the same evaluation path")
                seen[ref.name] = off
                if any(off):
                    found[(ref.name, off)] = None
    return [Dependence(v, d, is_broadcast_source(sys, v)) for v, d in found]


# --------------------------------------------------------------------------
# direct evaluation

def lexicographic_order(sys: UreSystem, deps: Sequence[Dependence] = None,
                        params: Mapping[str, int] = None):
    """Find (dims outermost-first, directions) making every dependence
    lexicographically positive, preferring the declared nesting order."""
    deps = infer_dependences(sys, params) if deps is None else deps
    idx = sys.indices
    declared = tuple(reversed(sys.space.names))
    perms = [declared] + [p for p in itertools.permutations(declared) if p != declared]
    for perm in perms:
        for dirs in itertools.product((1, -1), repeat=len(perm)):
            ok = True
            for d in deps:
                vec = [d.distance[idx.index(n)] * s for n, s in zip(perm, dirs)]
                first = next((v for v in vec if v), 0)
                if first <= 0:
                    ok = False
                    break
            if ok:
                return perm, dirs
    raise EvaluationOrderError("no lexicographic order respects every dependence")


def lexicographic_points(sys: UreSystem, params: Mapping[str, int], order=None):
    perm, dirs = order or lexicographic_order(sys, params=params)
    ext = sys.space.extents(params)
    ranges = [range(ext[n]) if s > 0 else range(ext[n] - 1, -1, -1) for n, s in zip(perm, dirs)]
    for values in itertools.product(*ranges):
        yield dict(zip(perm, values))


def _coerce(value, dtype):
    if value is E.POISON:
        return value
    return float(value) if dtype == "f32" else int(value)


def direct_eval(sys: UreSystem, inputs: Mapping[str, np.ndarray],
                params: Mapping[str, int] = None, points: Iterable[Mapping[str, int]] = None,
                allow_missing: bool = False) -> np.ndarray:
    """Evaluate every equation at every point and return the output array.

    ``params`` overrides parameter defaults.  ``points`` optionally supplies
    a different (dependence-respecting) visiting order; reading an element
    that has not been written yet raises EvaluationOrderError.
    """
    env = sys.bind(params)
    ext = sys.space.extents(env)
    dtype = sys.dtype
    shapes = sys.input_shapes(env)
    data = {}
    for decl in sys.inputs:
        arr = np.asarray(inputs[decl.name])
        if arr.shape != shapes[decl.name]:
            raise SemanticError(f"input {decl.name}: expected shape {shapes[decl.name]}, got {arr.shape}")
        data[decl.name] = arr.tolist()

    store: Dict[str, dict] = {v: {} for v in sys.variables}

    def read_var(name, coords):
        try:
            return store[name][coords]
        except KeyError:
            pass
        if any(c < 0 or c >= ext[d] for c, d in zip(coords, sys.equation(name).args)):
            raise UndefinedRead(f"{name}{coords} lies outside the iteration space")
        raise EvaluationOrderError(f"{name}{coords} read before it was written")

    def read_input(name, coords):
        ref = data[name]
        for c in coords:
            if c < 0 or c >= len(ref):
                raise UndefinedRead(f"input {name}{coords} out of bounds")
            ref = ref[c]
        return ref

    compiled = [(eq.var, eq.args, E.compile_scalar(eq.expr, env, read_var, read_input))
                for eq in sys.equations]
    guard = E.compile_scalar(sys.output.guard, env, read_var, read_input)
    value = E.compile_scalar(sys.output.value, env, read_var, read_input)
    out_shape = sys.output_shape(env)
    out = np.zeros(out_shape, dtype=DTYPES[dtype])
    written = np.zeros(out_shape, dtype=bool)

    if points is None:
        points = lexicographic_points(sys, env)
    for ix in points:
        for var, args, f in compiled:
            key = tuple(ix[a] for a in args)
            if key in store[var]:
                raise DoubleWrite(f"{var}{key} written twice")
            store[var][key] = _coerce(f(ix), dtype)
        if guard(ix):
            o = tuple(ix[a] for a in sys.output.args)
            if written[o]:
                raise DoubleWrite(f"{sys.output.name}{o} written twice")
            v = value(ix)
            if v is E.POISON:
                raise UndefinedRead(f"{sys.output.name}{o} receives an undefined value")
            out[o] = v
            written[o] = True
    if not allow_missing and not written.all():
        raise MissingOutput([tuple(int(i) for i in p) for p in np.argwhere(~written)])
    return out


def random_inputs(sys: UreSystem, params: Mapping[str, int], rng: np.random.Generator,
                  dtype: Optional[str] = None) -> Dict[str, np.ndarray]:
    """Random input arrays: small integers for i32, positive floats for f32."""
    dtype = dtype or sys.dtype
    out = {}
    for name, shape in sys.input_shapes(params).items():
        if dtype == "i32":
            out[name] = rng.integers(-8, 9, size=shape).astype(np.int64)
        else:
            out[name] = rng.uniform(0.5, 1.5, size=shape).astype(np.float32).astype(np.float64)
    return out


def with_dtype(sys: UreSystem, dtype: str) -> UreSystem:
    inputs = tuple(InputDecl(i.name, dtype, i.shape) for i in sys.inputs)
    return UreSystem(sys.name, sys.params, inputs, sys.variables, sys.space,
                     sys.equations, sys.output)
