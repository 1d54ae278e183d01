"""Pure expression trees used by equations, guards, index maps and the IR.

Integer ``/`` is floor division and ``%`` is the floor modulo, so index
arithmetic on negative time steps stays well defined.  Comparisons and
logical operators produce 0/1 integers, as in C.
"""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, Optional, Union

from .errors import UndefinedSelect

Number = Union[int, float]


@dataclass(frozen=True)
class Const:
    value: Number


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Index:
    """A loop index (or an index defined by the enclosing loop nest)."""
    name: str


@dataclass(frozen=True)
class InputRef:
    name: str
    args: tuple


@dataclass(frozen=True)
class VarRef:
    name: str
    args: tuple


@dataclass(frozen=True)
class Select:
    cond: "Expr"
    then: "Expr"
    orelse: Optional["Expr"] = None


@dataclass(frozen=True)
class BinOp:
    op: str
    lhs: "Expr"
    rhs: "Expr"


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class RegRef:
    """Lane-relative register read produced by the space-time pass.

    ``lane_offset`` is added to the current lane; ``slot`` is the depth
    index in the register matrix, or -1 for the current step's temporary.
    """
    name: str
    lane_offset: int
    slot: int


Expr = Union[Const, Param, Index, InputRef, VarRef, Select, BinOp, Neg, RegRef]

PRECEDENCE = {
    "||": 1, "&&": 2,
    "==": 3, "!=": 3,
    "<": 4, "<=": 4, ">": 4, ">=": 4,
    "+": 5, "-": 5,
    "*": 6, "/": 6, "%": 6,
}
UNARY_PRECEDENCE = 7
BINARY_OPS = tuple(PRECEDENCE)


# --------------------------------------------------------------------------
# printing

def to_text(e: Expr, parent: int = 0) -> str:
    """Render with the minimal parentheses that re-parse to the same tree."""
    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, (Param, Index)):
        return e.name
    if isinstance(e, (InputRef, VarRef)):
        return f"{e.name}({', '.join(to_text(a) for a in e.args)})"
    if isinstance(e, RegRef):
        lane = "s" if e.lane_offset == 0 else f"s{e.lane_offset:+d}".replace("+", " + ").replace("-", " - ")
        if e.slot < 0:
            return f"{e.name}_tmp({lane})"
        return f"{e.name}({lane})[{e.slot}]"
    if isinstance(e, Select):
        parts = [to_text(e.cond), to_text(e.then)]
        if e.orelse is not None:
            parts.append(to_text(e.orelse))
        return f"select({', '.join(parts)})"
    if isinstance(e, Neg):
        text = "-" + to_text(e.operand, UNARY_PRECEDENCE)
        return f"({text})" if parent > UNARY_PRECEDENCE else text
    if isinstance(e, BinOp):
        p = PRECEDENCE[e.op]
        # left-associative: the right operand needs parens at equal precedence
        text = f"{to_text(e.lhs, p)} {e.op} {to_text(e.rhs, p + 1)}"
        return f"({text})" if p < parent else text
    raise TypeError(f"not an expression: {e!r}")


# --------------------------------------------------------------------------
# traversal

def children(e: Expr) -> tuple:
    if isinstance(e, (InputRef, VarRef)):
        return e.args
    if isinstance(e, Select):
        return (e.cond, e.then) + ((e.orelse,) if e.orelse is not None else ())
    if isinstance(e, BinOp):
        return (e.lhs, e.rhs)
    if isinstance(e, Neg):
        return (e.operand,)
    return ()


def walk(e: Expr) -> Iterator[Expr]:
    yield e
    for c in children(e):
        yield from walk(c)


def map_expr(e: Expr, fn: Callable[[Expr], Optional[Expr]]) -> Expr:
    """Bottom-up rebuild; ``fn`` may return a replacement or None to keep."""
    if isinstance(e, InputRef):
        e = InputRef(e.name, tuple(map_expr(a, fn) for a in e.args))
    elif isinstance(e, VarRef):
        e = VarRef(e.name, tuple(map_expr(a, fn) for a in e.args))
    elif isinstance(e, Select):
        e = Select(map_expr(e.cond, fn), map_expr(e.then, fn),
                   None if e.orelse is None else map_expr(e.orelse, fn))
    elif isinstance(e, BinOp):
        e = BinOp(e.op, map_expr(e.lhs, fn), map_expr(e.rhs, fn))
    elif isinstance(e, Neg):
        e = Neg(map_expr(e.operand, fn))
    out = fn(e)
    return e if out is None else out


def substitute(e: Expr, indices: Mapping[str, Expr] = None,
               params: Mapping[str, Expr] = None) -> Expr:
    indices = indices or {}
    params = params or {}

    def fn(node):
        if isinstance(node, Index) and node.name in indices:
            return indices[node.name]
        if isinstance(node, Param) and node.name in params:
            return params[node.name]
        return None
    return map_expr(e, fn)


def free_indices(e: Expr) -> set:
    return {n.name for n in walk(e) if isinstance(n, Index)}


def conj(terms) -> Expr:
    terms = list(terms)
    if not terms:
        return Const(1)
    out = terms[0]
    for t in terms[1:]:
        out = BinOp("&&", out, t)
    return out


# --------------------------------------------------------------------------
# scalar semantics

class _Poison:
    __slots__ = ()

    def __repr__(self):
        return "POISON"


POISON = _Poison()


def _floordiv(a, b):
    if isinstance(a, float) or isinstance(b, float):
        return a / b
    return a // b


def _mod(a, b):
    if isinstance(a, float) or isinstance(b, float):
        return math.fmod(a, b)
    return a % b


ARITH = {
    "+": operator.add, "-": operator.sub, "*": operator.mul,
    "/": _floordiv, "%": _mod,
    "==": lambda a, b: int(a == b), "!=": lambda a, b: int(a != b),
    "<": lambda a, b: int(a < b), "<=": lambda a, b: int(a <= b),
    ">": lambda a, b: int(a > b), ">=": lambda a, b: int(a >= b),
}


def eval_int(e: Expr, params: Mapping[str, int], indices: Mapping[str, int] = None) -> int:
    """Evaluate an index/parameter expression to an int (no data refs)."""
    indices = indices or {}
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Param):
        return params[e.name]
    if isinstance(e, Index):
        return indices[e.name]
    if isinstance(e, Neg):
        return -eval_int(e.operand, params, indices)
    if isinstance(e, BinOp):
        a = eval_int(e.lhs, params, indices)
        if e.op == "||":
            return int(bool(a) or bool(eval_int(e.rhs, params, indices)))
        if e.op == "&&":
            return int(bool(a) and bool(eval_int(e.rhs, params, indices)))
        return ARITH[e.op](a, eval_int(e.rhs, params, indices))
    if isinstance(e, Select):
        if eval_int(e.cond, params, indices):
            return eval_int(e.then, params, indices)
        if e.orelse is None:
            raise UndefinedSelect("one-armed select used in an index expression")
        return eval_int(e.orelse, params, indices)
    raise TypeError(f"not an index expression: {to_text(e)}")


def compile_scalar(e: Expr, params: Mapping[str, Number],
                   read_var: Callable, read_input: Callable) -> Callable:
    """Compile ``e`` into a closure ``f(ix)`` over a dict of index values.

    ``read_var(name, coords)`` and ``read_input(name, coords)`` resolve data
    references.  Arithmetic on POISON raises UndefinedSelect.
    """
    if isinstance(e, Const):
        v = e.value
        return lambda ix: v
    if isinstance(e, Param):
        v = params[e.name]
        return lambda ix: v
    if isinstance(e, Index):
        name = e.name
        return lambda ix: ix[name]
    if isinstance(e, (VarRef, InputRef)):
        fs = [compile_scalar(a, params, read_var, read_input) for a in e.args]
        name = e.name
        reader = read_var if isinstance(e, VarRef) else read_input
        return lambda ix: reader(name, tuple(f(ix) for f in fs))
    if isinstance(e, Neg):
        f = compile_scalar(e.operand, params, read_var, read_input)

        def neg(ix):
            v = f(ix)
            if v is POISON:
                raise UndefinedSelect("negation of an undefined select value")
            return -v
        return neg
    if isinstance(e, Select):
        fc = compile_scalar(e.cond, params, read_var, read_input)
        ft = compile_scalar(e.then, params, read_var, read_input)
        fe = (compile_scalar(e.orelse, params, read_var, read_input)
              if e.orelse is not None else None)

        def sel(ix):
            c = fc(ix)
            if c is POISON:
                raise UndefinedSelect("select condition is undefined")
            if c:
                return ft(ix)
            return fe(ix) if fe is not None else POISON
        return sel
    if isinstance(e, BinOp):
        fa = compile_scalar(e.lhs, params, read_var, read_input)
        fb = compile_scalar(e.rhs, params, read_var, read_input)
        op = e.op
        text = to_text(e)

        def check(v):
            if v is POISON:
                raise UndefinedSelect(f"undefined value consumed by '{text}'")
            return v
        if op == "||":
            return lambda ix: int(bool(check(fa(ix))) or bool(check(fb(ix))))
        if op == "&&":
            return lambda ix: int(bool(check(fa(ix))) and bool(check(fb(ix))))
        fn = ARITH[op]
        return lambda ix: fn(check(fa(ix)), check(fb(ix)))
    raise TypeError(f"cannot compile {e!r}")


# --------------------------------------------------------------------------
# affine normal form (proactive constant folding of index arithmetic)

def affine_form(e: Expr, params: Mapping[str, int]) -> Optional[tuple]:
    """Return ({index: coeff}, const) if ``e`` is affine in indices, else None."""
    if isinstance(e, Const) and isinstance(e.value, int):
        return {}, e.value
    if isinstance(e, Param) and e.name in params:
        return {}, params[e.name]
    if isinstance(e, Index):
        return {e.name: 1}, 0
    if isinstance(e, Neg):
        f = affine_form(e.operand, params)
        if f is None:
            return None
        return {k: -v for k, v in f[0].items()}, -f[1]
    if isinstance(e, BinOp) and e.op in "+-*":
        a = affine_form(e.lhs, params)
        b = affine_form(e.rhs, params)
        if a is None or b is None:
            return None
        if e.op == "*":
            if a[0] and b[0]:
                return None
            if a[0]:
                a, b = b, a
            k = a[1]
            return {n: k * v for n, v in b[0].items()}, k * b[1]
        sign = 1 if e.op == "+" else -1
        coeffs = dict(a[0])
        for n, v in b[0].items():
            coeffs[n] = coeffs.get(n, 0) + sign * v
        return coeffs, a[1] + sign * b[1]
    return None


def from_affine(coeffs: Mapping[str, int], const: int, order=None) -> Expr:
    order = list(order or ())
    names = [n for n in order + sorted(set(coeffs) - set(order)) if coeffs.get(n)]
    out = None
    for n in names:
        k = coeffs[n]
        term = Index(n) if abs(k) == 1 else BinOp("*", Index(n), Const(abs(k)))
        if out is None:
            out = term if k > 0 else Neg(term)
        else:
            out = BinOp("+" if k > 0 else "-", out, term)
    if out is None:
        return Const(const)
    if const:
        out = BinOp("+" if const > 0 else "-", out, Const(abs(const)))
    return out


def fold(e: Expr, params: Mapping[str, int], order=None) -> Expr:
    """Constant-fold: affine subtrees are normalised, constant subtrees reduced."""
    def fn(node):
        if isinstance(node, (InputRef, VarRef, Select, RegRef)):
            return None
        form = affine_form(node, params)
        if form is not None:
            return from_affine(form[0], form[1], order)
        if isinstance(node, BinOp) and isinstance(node.lhs, Const) and isinstance(node.rhs, Const):
            if node.op in ARITH and not (node.op in "/%" and node.rhs.value == 0):
                return Const(ARITH[node.op](node.lhs.value, node.rhs.value))
        return None
    return map_expr(e, fn)


def eval_vec(e: Expr, params: Mapping[str, int], env: Mapping):
    """Vectorised :func:`eval_int` over numpy index arrays (no data refs)."""
    import numpy as np

    if isinstance(e, Const):
        return e.value
    if isinstance(e, Param):
        return params[e.name]
    if isinstance(e, Index):
        return env[e.name]
    if isinstance(e, Neg):
        return -eval_vec(e.operand, params, env)
    if isinstance(e, BinOp):
        a = eval_vec(e.lhs, params, env)
        b = eval_vec(e.rhs, params, env)
        if e.op == "||":
            return np.logical_or(a, b).astype(np.int64)
        if e.op == "&&":
            return np.logical_and(a, b).astype(np.int64)
        if e.op == "/":
            return np.floor_divide(a, b)
        if e.op == "%":
            return np.mod(a, b)
        return np.asarray(ARITH_VEC[e.op](a, b)).astype(np.int64) if e.op in CMP_OPS \
            else ARITH_VEC[e.op](a, b)
    if isinstance(e, Select) and e.orelse is not None:
        return np.where(eval_vec(e.cond, params, env) != 0,
                        eval_vec(e.then, params, env), eval_vec(e.orelse, params, env))
    raise TypeError(f"not an index expression: {to_text(e)}")


CMP_OPS = ("==", "!=", "<", "<=", ">", ">=")
ARITH_VEC = {
    "+": operator.add, "-": operator.sub, "*": operator.mul,
    "==": operator.eq, "!=": operator.ne, "<": operator.lt, "<=": operator.le,
    ">": operator.gt, ">=": operator.ge,
}
