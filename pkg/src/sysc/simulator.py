"""Interpreter for loop nests, before and after the space-time pass.

Lowered nests run lane-parallel: every (trial, thread) pair is one row of a
batch and every PE is one column, so a time step is a handful of numpy
operations over a ``(batch, lanes)`` grid.  Poison is tracked as a boolean
mask next to the values.  Unlowered nests are run point by point.
"""

from __future__ import annotations

import itertools
import sys as _sys
from dataclasses import dataclass, replace
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order

from . import expr as E
from .errors import (DoubleWrite, MissingOutput, OutputCollision, PoisonRead,
                     SemanticError, UndefinedRead)
from .ir import Commit, Compiled, Compute, Define, Emit, Guard, LoopNest, Shift, compile_design
from .parser import DesignFile
from .ure import direct_eval, random_inputs, with_dtype

SIM_DTYPES = {"i32": np.int64, "f32": np.float32}


# --------------------------------------------------------------------------
# trace

@dataclass
class Trace:
    lanes: int
    time_lower: int
    steps: int
    threads: List[Dict[str, int]]
    values: Dict[str, np.ndarray]       # var -> (steps, threads, lanes)
    poison: Dict[str, np.ndarray]
    node_var: np.ndarray                # var id of every computed lane value
    variables: List[str]
    edges: tuple                        # (consumer ids, producer ids)
    roots: np.ndarray                   # producer ids read by emitted outputs
    accumulators: tuple

    def dump(self, variables: Sequence[str] = None) -> str:
        """One line per (time, variable); ``_`` marks poison."""
        variables = list(variables or self.values)
        lines = []
        for b, coords in enumerate(self.threads):
            head = " ".join(f"{k}={v}" for k, v in coords.items())
            lines.append(f"# thread {head}".rstrip())
            for k in range(self.steps):
                for v in variables:
                    vals = self.values[v][k, b]
                    poi = self.poison[v][k, b]
                    cells = ["_" if p else _fmt(x) for x, p in zip(vals, poi)]
                    lines.append(f"t={self.time_lower + k} {v}: {','.join(cells)}")
        return "\n".join(lines) + "\n"


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.6g}"
    return str(int(x))


def count_useful_ops(trace: Trace):
    """(useful, total): accumulator lane-steps whose value reaches an output."""
    n = len(trace.node_var)
    total = trace.lanes * trace.steps * len(trace.threads)
    if n == 0 or len(trace.roots) == 0:
        return 0, total
    cons, prod = trace.edges
    root = n                                    # virtual node feeding every output
    rows = np.concatenate([cons, np.full(len(trace.roots), root)])
    cols = np.concatenate([prod, trace.roots])
    graph = csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n + 1, n + 1))
    reached = breadth_first_order(graph, root, directed=True, return_predecessors=False)
    reached = reached[reached < n]
    acc = [trace.variables.index(v) for v in trace.accumulators]
    return int(np.isin(trace.node_var[reached], acc).sum()), total


# --------------------------------------------------------------------------
# lowered nests

class _Machine:
    def __init__(self, nest: LoopNest, inputs: Sequence[Mapping[str, np.ndarray]],
                 trace: bool = False, junk_seed: Optional[int] = None):
        self.nest = nest
        self.sy = nest.systolic
        self.sys = nest.system
        self.params = nest.env
        self.dtype = SIM_DTYPES[self.sys.dtype]
        shapes = self.sys.input_shapes(self.params)
        self.data = {}
        for decl in self.sys.inputs:
            arrs = [np.asarray(inp[decl.name]) for inp in inputs]
            for a in arrs:
                if a.shape != shapes[decl.name]:
                    raise SemanticError(f"input {decl.name}: expected shape "
                                        f"{shapes[decl.name]}, got {a.shape}")
            self.data[decl.name] = np.stack(arrs).astype(self.dtype)
        self.trials = len(inputs)

        outer = [l for l in nest.loops if l.kind not in ("time", "vectorized")]
        combos = list(itertools.product(*[range(l.lower, l.lower + l.extent) for l in outer]))
        self.threads = [dict(zip([l.name for l in outer], c)) for c in combos]
        B = self.trials * len(combos)
        self.B = B
        self.L = self.sy.lanes
        self.trial = np.repeat(np.arange(self.trials), len(combos))[:, None]
        self.outer_env = {}
        for k, l in enumerate(outer):
            col = np.array([c[k] for c in combos], dtype=np.int64)
            self.outer_env[l.name] = np.tile(col, self.trials)[:, None]
        self.lane = np.arange(self.L)[None, :]
        self.space = self.lane + self.sy.space_lower

        rng = np.random.default_rng(junk_seed) if junk_seed is not None else None
        self.regs = {}
        for st in nest.storage:
            shape = (B, self.L, st.depth)
            vals = np.zeros(shape, dtype=self.dtype)
            if rng is not None:
                vals[...] = rng.integers(-1000, 1000, size=shape)
            self.regs[st.var] = [vals, np.ones(shape, dtype=bool),
                                 np.full(shape, -1, dtype=np.int64)]
        self.tmp = {}

        out_shape = self.sys.output_shape(self.params)
        self.out = np.zeros((self.trials,) + out_shape, dtype=self.dtype)
        self.written = np.zeros((self.trials,) + out_shape, dtype=bool)

        self.tracing = trace
        self.variables = list(self.sys.variables)
        self.node_var: List[np.ndarray] = []
        self.next_id = 0
        self.edge_c: List[np.ndarray] = []
        self.edge_p: List[np.ndarray] = []
        self.roots: List[np.ndarray] = []
        self.consumer = None
        self.history = {v: [] for v in self.variables}
        self.history_p = {v: [] for v in self.variables}

    # -- expression evaluation ------------------------------------------
    def ev(self, e, env, active):
        """(values, poison) of ``e`` over the (batch, lanes) grid."""
        if isinstance(e, E.Const):
            return e.value, False
        if isinstance(e, E.Param):
            return self.params[e.name], False
        if isinstance(e, E.Index):
            return env[e.name], False
        if isinstance(e, E.InputRef):
            data = self.data[e.name]
            idx, poi = [], False
            oob = False
            for k, a in enumerate(e.args):
                v, p = self.ev(a, env, active)
                v = np.asarray(v, dtype=np.int64)
                n = data.shape[k + 1]
                oob = oob | (v < 0) | (v >= n)
                poi = poi | p
                idx.append(np.clip(v, 0, n - 1))
            vals = data[(self.trial,) + tuple(idx)]
            return vals, poi | oob
        if isinstance(e, E.RegRef):
            return self.read_reg(e, active)
        if isinstance(e, E.Neg):
            v, p = self.ev(e.operand, env, active)
            return -v, p
        if isinstance(e, E.Select):
            c, pc = self.ev(e.cond, env, active)
            c = np.broadcast_to(np.asarray(c) != 0, (self.B, self.L))
            tv, tp = self.ev(e.then, env, active & c)
            if e.orelse is None:
                ev_, ep = 0, True
            else:
                ev_, ep = self.ev(e.orelse, env, active & ~c)
            return np.where(c, tv, ev_), pc | np.where(c, tp, ep)
        if isinstance(e, E.BinOp):
            a, pa = self.ev(e.lhs, env, active)
            if e.op in ("||", "&&"):
                at = np.broadcast_to(np.asarray(a) != 0, (self.B, self.L))
                rest = active & ~at if e.op == "||" else active & at
                b, pb = self.ev(e.rhs, env, rest)
                bt = np.asarray(b) != 0
                if e.op == "||":
                    return (at | bt).astype(np.int64), pa | (~at & pb)
                return (at & bt).astype(np.int64), pa | (at & pb)
            b, pb = self.ev(e.rhs, env, active)
            return self.arith(e.op, a, b), pa | pb
        raise TypeError(f"cannot simulate {e!r}")

    def arith(self, op, a, b):
        if op in E.CMP_OPS:
            return np.asarray(E.ARITH_VEC[op](a, b)).astype(np.int64)
        a = np.asarray(a)
        b = np.asarray(b)
        if op in ("/", "%"):
            if np.issubdtype(np.result_type(a, b), np.floating):
                safe = np.where(b == 0, 1, b)
                return a / safe if op == "/" else np.fmod(a, safe)
            safe = np.where(b == 0, 1, b)
            return np.floor_divide(a, safe) if op == "/" else np.mod(a, safe)
        return E.ARITH_VEC[op](a, b)

    def read_reg(self, e: E.RegRef, active):
        src = self.lane + e.lane_offset
        valid = (src >= 0) & (src < self.L)
        src = np.clip(src, 0, self.L - 1)
        if e.slot < 0:
            vals, poi, ids = self.tmp[e.name]
            vals, poi, ids = vals[:, src[0]], poi[:, src[0]], ids[:, src[0]]
        else:
            reg = self.regs[e.name]
            vals = reg[0][:, src[0], e.slot]
            poi = reg[1][:, src[0], e.slot]
            ids = reg[2][:, src[0], e.slot]
        poi = poi | ~valid
        if self.tracing and self.consumer is not None:
            mask = np.broadcast_to(active, (self.B, self.L)) & valid & (ids >= 0)
            if isinstance(self.consumer, str):
                self.roots.append(ids[mask & self.emit_mask])
            else:
                self.edge_c.append(self.consumer[mask])
                self.edge_p.append(ids[mask])
        return vals, poi

    # -- statements -------------------------------------------------------
    def run(self):
        sy = self.sy
        for t in range(sy.time_lower, sy.time_upper + 1):
            env = dict(self.outer_env)
            env[sy.dests[-1]] = t
            env[sy.dests[0]] = self.space
            self.domain = None
            full = np.ones((self.B, self.L), dtype=bool)
            self.exec_block(self.nest.body, env, full, t)
            if self.tracing:
                for v in self.variables:
                    reg = self.regs[v]
                    self.history[v].append(reg[0][:, :, 0].copy())
                    self.history_p[v].append(reg[1][:, :, 0].copy())

    def in_domain(self, env):
        d = E.eval_vec(self.sy.domain, self.params, env)
        return np.broadcast_to(np.asarray(d) != 0, (self.B, self.L))

    def exec_block(self, stmts, env, active, t):
        for s in stmts:
            if isinstance(s, Define):
                env[s.name] = E.eval_vec(s.expr, self.params, env)
            elif isinstance(s, Shift):
                for arr in self.regs[s.var]:
                    arr[:, :, 1:] = arr[:, :, :-1].copy()
            elif isinstance(s, Guard):
                c = np.broadcast_to(np.asarray(E.eval_vec(s.cond, self.params, env)) != 0,
                                    (self.B, self.L))
                # lanes the guard skips compute poison for this step
                self.exec_block(s.body, env, active & c, t)
            elif isinstance(s, Compute):
                self.compute(s, env, active, t)
            elif isinstance(s, Commit):
                vals, poi, ids = self.tmp[s.var]
                reg = self.regs[s.var]
                reg[0][:, :, 0] = vals
                reg[1][:, :, 0] = poi
                reg[2][:, :, 0] = ids
            elif isinstance(s, Emit):
                self.emit(s, env, t)
            else:
                raise TypeError(s)

    def compute(self, s: Compute, env, active, t):
        if self.tracing:
            ids = self.next_id + np.arange(self.B * self.L).reshape(self.B, self.L)
            ids = np.where(active, ids, -1)
            self.node_var.append(np.full(self.B * self.L, self.variables.index(s.var)))
            self.next_id += self.B * self.L
            self.consumer = ids
        else:
            ids = np.full((self.B, self.L), -1, dtype=np.int64)
        vals, poi = self.ev(s.expr, env, active)
        self.consumer = None
        vals = np.broadcast_to(np.asarray(vals).astype(self.dtype), (self.B, self.L))
        poi = np.broadcast_to(poi, (self.B, self.L)) | ~active
        bad = poi & active & self.in_domain(env)
        if bad.any():
            b, lane = map(int, np.argwhere(bad)[0])
            raise PoisonRead(f"{s.var}: undefined value computed at lane {lane}, time {t}"
                             f"{self._where(b)}")
        if s.dest == "tmp":
            self.tmp[s.var] = (vals.copy(), poi.copy(), ids)
        else:
            reg = self.regs[s.var]
            reg[0][:, :, 0] = vals
            reg[1][:, :, 0] = poi
            reg[2][:, :, 0] = ids

    def _where(self, b) -> str:
        coords = dict(self.threads[b % len(self.threads)])
        coords = ", ".join(f"{k}={v}" for k, v in coords.items())
        trial = b // len(self.threads)
        return f" (trial {trial}{', ' + coords if coords else ''})"

    def emit(self, s: Emit, env, t):
        owned = np.broadcast_to(np.asarray(E.eval_vec(s.owned, self.params, env)) != 0,
                                (self.B, self.L))
        g, gp = self.ev(s.guard, env, owned)
        gp = np.broadcast_to(gp, (self.B, self.L))
        if (gp & owned).any():
            b, lane = map(int, np.argwhere(gp & owned)[0])
            raise PoisonRead(f"{s.name}: guard undefined at lane {lane}, time {t}{self._where(b)}")
        mask = owned & (np.asarray(g) != 0)
        self.emit_mask = mask
        if self.tracing:
            self.consumer = "emit"
        v, vp = self.ev(s.value, env, mask)
        self.consumer = None
        vp = np.broadcast_to(vp, (self.B, self.L))
        if (vp & mask).any():
            b, lane = map(int, np.argwhere(vp & mask)[0])
            raise PoisonRead(f"{s.name}: undefined value emitted at lane {lane}, time {t}"
                             f"{self._where(b)}")
        if not mask.any():
            return
        coords = [np.broadcast_to(np.asarray(E.eval_vec(a, self.params, env)), (self.B, self.L))[mask]
                  for a in s.args]
        shape = self.out.shape[1:]
        for k, (c, n) in enumerate(zip(coords, shape)):
            if (c < 0).any() or (c >= n).any():
                raise OutputCollision(f"{s.name}: index {k} out of range at time {t}")
        trial = np.broadcast_to(self.trial, (self.B, self.L))[mask]
        key = (trial,) + tuple(coords)
        flat = np.ravel_multi_index(key, self.out.shape)
        uniq, counts = np.unique(flat, return_counts=True)
        if (counts > 1).any() or self.written.flat[flat].any():
            dup = uniq[counts > 1] if (counts > 1).any() else flat[self.written.flat[flat]]
            where = np.unravel_index(int(dup[0]), self.out.shape)
            raise OutputCollision(f"{s.name}{tuple(int(i) for i in where[1:])} written twice "
                                  f"(trial {int(where[0])}, time {t})")
        vals = np.broadcast_to(np.asarray(v).astype(self.dtype), (self.B, self.L))[mask]
        self.out.flat[flat] = vals
        self.written.flat[flat] = True

    def make_trace(self) -> Trace:
        sy = self.sy
        values = {v: np.stack(self.history[v]) for v in self.variables}
        poison = {v: np.stack(self.history_p[v]) for v in self.variables}
        cat = lambda xs: np.concatenate(xs) if xs else np.zeros(0, dtype=np.int64)
        acc = tuple(sorted({n.name for n in E.walk(self.sys.output.value)
                            if isinstance(n, E.VarRef)}))
        threads = [dict(th) for _ in range(self.trials) for th in self.threads]
        return Trace(sy.lanes, sy.time_lower, sy.steps, threads, values, poison,
                     cat(self.node_var), self.variables, (cat(self.edge_c), cat(self.edge_p)),
                     cat(self.roots), acc)


def _simulate_lowered(nest, inputs, trace=False, junk_seed=None):
    m = _Machine(nest, inputs, trace, junk_seed)
    m.run()
    return m.out, m.written, (m.make_trace() if trace else None)


# --------------------------------------------------------------------------
# unlowered nests: point by point, demand driven

def _simulate_serial(nest: LoopNest, inputs: Mapping[str, np.ndarray]):
    sys = nest.system
    params = nest.env
    ext = sys.space.extents(params)
    dtype = sys.dtype
    data = {k: np.asarray(v).tolist() for k, v in inputs.items()}
    store: Dict[str, dict] = {v: {} for v in sys.variables}
    busy = set()

    def read_input(name, coords):
        ref = data[name]
        for c in coords:
            if c < 0 or c >= len(ref):
                raise UndefinedRead(f"input {name}{coords} out of bounds")
            ref = ref[c]
        return ref

    def read_var(name, coords):
        hit = store[name].get(coords)
        if hit is not None:
            return hit
        header = sys.equation(name).args
        if any(c < 0 or c >= ext[d] for c, d in zip(coords, header)):
            raise UndefinedRead(f"{name}{coords} lies outside the iteration space")
        if (name, coords) in busy:
            raise UndefinedRead(f"{name}{coords} depends on itself")
        busy.add((name, coords))
        v = compiled[name](dict(zip(header, coords)))
        busy.discard((name, coords))
        v = v if v is E.POISON else (float(v) if dtype == "f32" else int(v))
        store[name][coords] = v
        return v

    compiled = {eq.var: E.compile_scalar(eq.expr, params, read_var, read_input)
                for eq in sys.equations}
    emit = next(s for s in nest.body if isinstance(s, Emit))
    guard = E.compile_scalar(emit.guard, params, read_var, read_input)
    value = E.compile_scalar(emit.value, params, read_var, read_input)
    defines = [s for s in nest.body if isinstance(s, Define)]
    out_shape = sys.output_shape(params)
    out = np.zeros(out_shape, dtype=SIM_DTYPES[dtype])
    written = np.zeros(out_shape, dtype=bool)
    visited = set()
    names = [l.name for l in nest.loops]
    limit = _sys.getrecursionlimit()
    _sys.setrecursionlimit(max(limit, 20000))
    try:
        for values in itertools.product(*[range(l.lower, l.lower + l.extent) for l in nest.loops]):
            ix = dict(zip(names, values))
            for d in defines:
                ix[d.name] = E.eval_int(d.expr, params, ix)
            point = tuple(ix[a] for a in sys.indices)
            if point in visited:
                raise DoubleWrite(f"iteration point {point} visited twice")
            visited.add(point)
            for eq in sys.equations:
                read_var(eq.var, point)
            if guard(ix):
                o = tuple(E.eval_int(a, params, ix) for a in emit.args)
                if written[o]:
                    raise OutputCollision(f"{emit.name}{o} written twice")
                out[o] = value(ix)
                written[o] = True
    finally:
        _sys.setrecursionlimit(limit)
    return out, written


# --------------------------------------------------------------------------
# public API

def simulate(nest: LoopNest, inputs: Mapping[str, np.ndarray], trace: bool = False,
             junk_seed: Optional[int] = None):
    """Run ``nest`` on one set of inputs.  Returns the output array, or
    ``(output, trace)`` when ``trace`` is set (lowered nests only)."""
    if isinstance(nest, Compiled):
        nest = nest.nest
    if not nest.lowered:
        if trace:
            raise SemanticError("tracing needs a nest lowered by the space-time pass")
        out, written = _simulate_serial(nest, inputs)
    else:
        out, written, tr = _simulate_lowered(nest, [inputs], trace, junk_seed)
        out, written = out[0], written[0]
    if not written.all():
        raise MissingOutput([tuple(int(i) for i in p) for p in np.argwhere(~written)])
    return (out, tr) if trace else out


def simulate_batch(nest: LoopNest, inputs: Sequence[Mapping[str, np.ndarray]]) -> np.ndarray:
    """Outputs stacked over trials; lowered nests run all trials at once."""
    if isinstance(nest, Compiled):
        nest = nest.nest
    if not nest.lowered:
        return np.stack([simulate(nest, inp) for inp in inputs])
    out, written, _ = _simulate_lowered(nest, list(inputs))
    if not written.all():
        missing = np.argwhere(~written)
        raise MissingOutput([tuple(int(i) for i in p[1:]) for p in missing])
    return out


@dataclass
class EquivalenceReport:
    design: str
    dtype: str
    trials: int
    matches: int
    max_deviation: float
    first_mismatch: Optional[tuple] = None      # (trial, output coordinate)

    @property
    def ok(self) -> bool:
        return self.matches == self.trials

    def __str__(self):
        text = f"{self.design} [{self.dtype}]: {self.matches}/{self.trials} match"
        if self.first_mismatch is not None:
            text += f", first mismatch at trial {self.first_mismatch[0]} " \
                    f"{self.first_mismatch[1]}, max deviation {self.max_deviation:g}"
        return text


def with_system_dtype(design: DesignFile, dtype: str) -> DesignFile:
    return replace(design, system=with_dtype(design.system, dtype))


def check_equivalence(design: DesignFile, trials: int = 20, seed: int = 0,
                      overrides: Mapping[str, int] = None, pattern="auto",
                      dtype: Optional[str] = None, rtol: float = 1e-5,
                      nest: Optional[LoopNest] = None) -> EquivalenceReport:
    """Compare simulation against direct evaluation on random inputs.

    i32 must match exactly; f32 within ``rtol`` relative error.
    """
    if dtype is not None:
        design = with_system_dtype(design, dtype)
    if nest is None:
        nest = compile_design(design, overrides, pattern).nest
    sys = design.system
    params = nest.env
    rng = np.random.default_rng(seed)
    inputs = [random_inputs(sys, params, rng) for _ in range(trials)]
    expected = np.stack([direct_eval(sys, inp, params) for inp in inputs])
    got = simulate_batch(nest, inputs).astype(np.float64)
    if sys.dtype == "i32":
        bad = got != expected
        dev = np.abs(got - expected)
    else:
        dev = np.abs(got - expected) / np.maximum(np.abs(expected), 1e-30)
        bad = dev > rtol
    per_trial = bad.reshape(trials, -1).any(axis=1)
    first = None
    if per_trial.any():
        p = np.argwhere(bad)[0]
        first = (int(p[0]), tuple(int(i) for i in p[1:]))
    return EquivalenceReport(sys.name, sys.dtype, trials, int((~per_trial).sum()),
                             float(dev.max()) if dev.size else 0.0, first)
