"""Reader and canonical printer for ``.sysd`` design files.

A design file holds the temporal definition (parameters, inputs, recurrent
variables over a rectangular space, the equations and the output) and an
optional schedule.  Loop lists are always written innermost-first.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Dict, List, Tuple, Union

from . import expr as E
from .errors import DesignSyntaxError, SemanticError
from .ure import Dim, Equation, InputDecl, IterationSpace, OutputDecl, UreSystem


# --------------------------------------------------------------------------
# directives

@dataclass(frozen=True)
class Tile:
    var: str
    outer: str
    inner: str
    factor: E.Expr          # Const or Param


@dataclass(frozen=True)
class Reorder:
    loops: Tuple[str, ...]  # innermost first


@dataclass(frozen=True)
class Blocks:
    loops: Tuple[str, ...]


@dataclass(frozen=True)
class Threads:
    loops: Tuple[str, ...]


@dataclass(frozen=True)
class StoreIn:
    func: str
    memory: str


@dataclass(frozen=True)
class ComputeAt:
    func: str
    consumer: str
    loop: str


@dataclass(frozen=True)
class SpaceTime:
    sources: Tuple[str, ...]            # innermost first
    dests: Tuple[str, ...]              # innermost first: space loop(s), then time
    matrix: Tuple[Tuple[E.Expr, ...], ...]
    reverse: Tuple[Tuple[str, E.Expr], ...] = ()
    check_time: bool = False


Directive = Union[Tile, Reorder, Blocks, Threads, StoreIn, ComputeAt, SpaceTime]


@dataclass(frozen=True)
class DesignFile:
    system: UreSystem
    schedule: Tuple[Directive, ...] = ()

    @property
    def name(self) -> str:
        return self.system.name


# --------------------------------------------------------------------------
# lexer

_TOKEN = re.compile(r"""
    (?P<ws>\s+|//[^\n]*)
  | (?P<float>\d+\.\d*(?:[eE][-+]?\d+)?|\d+[eE][-+]?\d+)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>->|\|\||&&|==|!=|<=|>=|[-+*/%<>=(){}\[\],:])
""", re.VERBOSE)

KEYWORDS = {"design", "params", "inputs", "vars", "over", "ure", "out", "schedule",
            "select", "tile", "by", "reorder", "blocks", "threads", "store_in",
            "compute_at", "stt", "matrix", "reverse", "check_time", "shared",
            "register", "i32", "f32"}


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    pos: int
    line: int
    col: int


def tokenize(text: str) -> List[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise DesignSyntaxError(f"unexpected character {text[pos]!r}", pos, line,
                                    pos - line_start + 1)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), pos, line, pos - line_start + 1))
        for i, ch in enumerate(m.group()):
            if ch == "\n":
                line += 1
                line_start = pos + i + 1
        pos = m.end()
    # the end-of-file token sits on the last character so positions stay in bounds
    last = max(len(text) - 1, 0)
    eof_line = text.count("\n", 0, last) + 1
    eof_col = last - (text.rfind("\n", 0, last) + 1) + 1
    tokens.append(Token("eof", "", last, eof_line, eof_col))
    return tokens


# --------------------------------------------------------------------------
# parser

class _Scope:
    def __init__(self, params=(), indices=(), inputs=None, variables=None):
        self.params = set(params)
        self.indices = set(indices)
        self.inputs = inputs or {}          # name -> rank
        self.variables = variables or {}    # name -> arity


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0

    # -- token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, message, expected=(), tok=None):
        tok = tok or self.tok
        return DesignSyntaxError(message, tok.pos, tok.line, tok.col, expected)

    def semantic(self, message, tok):
        return SemanticError(message, tok.line, tok.col)

    def at(self, text) -> bool:
        return self.tok.text == text and self.tok.kind in ("op", "ident")

    def accept(self, text) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text) -> Token:
        if not self.at(text):
            found = self.tok.text or "end of input"
            raise self.error(f"unexpected {found!r}", (repr(text),))
        tok = self.tok
        self.i += 1
        return tok

    def ident(self, what="identifier", allow_keyword=False) -> Token:
        tok = self.tok
        if tok.kind != "ident" or (tok.text in KEYWORDS and not allow_keyword):
            raise self.error(f"unexpected {tok.text or 'end of input'!r}", (what,))
        self.i += 1
        return tok

    def integer(self) -> int:
        neg = self.accept("-")
        tok = self.tok
        if tok.kind == "float":
            raise self.semantic(f"non-integer value {tok.text}", tok)
        if tok.kind != "int":
            raise self.error(f"unexpected {tok.text or 'end of input'!r}", ("integer",))
        self.i += 1
        return -int(tok.text) if neg else int(tok.text)

    def comma_list(self, item, close=None):
        items = [item()]
        while self.accept(","):
            items.append(item())
        return items

    # -- expressions (C precedence)
    def expression(self, scope: _Scope, level: int = 1) -> E.Expr:
        if level > 6:
            return self.unary(scope)
        lhs = self.expression(scope, level + 1)
        while self.tok.kind == "op" and E.PRECEDENCE.get(self.tok.text) == level:
            op = self.tok.text
            self.i += 1
            rhs = self.expression(scope, level + 1)
            lhs = E.BinOp(op, lhs, rhs)
        return lhs

    def unary(self, scope) -> E.Expr:
        if self.accept("-"):
            operand = self.unary(scope)
            if isinstance(operand, E.Const):
                return E.Const(-operand.value)
            return E.Neg(operand)
        return self.primary(scope)

    def primary(self, scope: _Scope) -> E.Expr:
        tok = self.tok
        if tok.kind == "int":
            self.i += 1
            return E.Const(int(tok.text))
        if tok.kind == "float":
            self.i += 1
            return E.Const(float(tok.text))
        if self.accept("("):
            inner = self.expression(scope)
            self.expect(")")
            return inner
        if tok.kind == "ident":
            if tok.text == "select":
                self.i += 1
                self.expect("(")
                cond = self.expression(scope)
                self.expect(",")
                then = self.expression(scope)
                orelse = self.expression(scope) if self.accept(",") else None
                self.expect(")")
                return E.Select(cond, then, orelse)
            name = self.ident().text
            if self.accept("("):
                args = tuple(self.comma_list(lambda: self.expression(scope)))
                self.expect(")")
                if name in scope.variables:
                    if len(args) != scope.variables[name]:
                        raise self.semantic(f"{name} takes {scope.variables[name]} indices, "
                                            f"got {len(args)}", tok)
                    return E.VarRef(name, args)
                if name in scope.inputs:
                    if len(args) != scope.inputs[name]:
                        raise self.semantic(f"input {name} has rank {scope.inputs[name]}, "
                                            f"indexed with {len(args)}", tok)
                    return E.InputRef(name, args)
                raise self.semantic(f"undeclared function or input '{name}'", tok)
            if name in scope.indices:
                return E.Index(name)
            if name in scope.params:
                return E.Param(name)
            raise self.semantic(f"undeclared identifier '{name}'", tok)
        raise self.error(f"unexpected {tok.text or 'end of input'!r}", ("expression",))

    # -- file
    def design(self) -> DesignFile:
        self.expect("design")
        name = self.ident("design name").text
        self.expect("{")
        params = self.params()
        pnames = [p for p, _ in params]
        inputs = self.inputs(pnames)
        variables, space = self.vars(pnames)
        dims = space.names
        scope = _Scope(pnames, dims, {i.name: len(i.shape) for i in inputs},
                       {v: len(dims) for v in variables})

        equations: List[Equation] = []
        while self.at("ure"):
            equations.append(self.ure(scope, variables, equations))
        if not equations:
            raise self.error("a design needs at least one equation", ("'ure'",))
        defined = {eq.var for eq in equations}
        missing = [v for v in variables if v not in defined]
        if missing:
            raise self.semantic(f"variable(s) without an equation: {', '.join(missing)}", self.tok)
        output = self.out(scope, equations[0].args)
        schedule = ()
        if self.at("schedule"):
            schedule = self.schedule(pnames, dims)
        self.expect("}")
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self.tok.text!r}", ("end of input",))
        system = UreSystem(name, tuple(params), tuple(inputs), tuple(variables), space,
                           tuple(equations), output)
        return DesignFile(system, tuple(schedule))

    def params(self):
        self.expect("params")
        self.expect("{")
        params: List[Tuple[str, E.Expr]] = []
        if not self.at("}"):
            def item():
                tok = self.ident("parameter name")
                if tok.text in (p for p, _ in params):
                    raise self.semantic(f"parameter {tok.text} declared twice", tok)
                self.expect("=")
                value = self.expression(_Scope([p for p, _ in params]))
                params.append((tok.text, value))
            self.comma_list(item)
        self.expect("}")
        return params

    def inputs(self, pnames):
        self.expect("inputs")
        self.expect("{")
        inputs: List[InputDecl] = []
        if not self.at("}"):
            def item():
                tok = self.ident("input name")
                if tok.text in pnames or tok.text in (i.name for i in inputs):
                    raise self.semantic(f"name {tok.text} already declared", tok)
                self.expect(":")
                ty = self.tok.text
                if ty not in ("i32", "f32"):
                    raise self.error(f"unexpected {ty!r}", ("'i32'", "'f32'"))
                self.i += 1
                self.expect("[")
                shape = tuple(self.comma_list(lambda: self.expression(_Scope(pnames))))
                self.expect("]")
                inputs.append(InputDecl(tok.text, ty, shape))
            self.comma_list(item)
        self.expect("}")
        return inputs

    def vars(self, pnames):
        self.expect("vars")
        self.expect("{")
        toks = self.comma_list(lambda: self.ident("variable name"))
        names = [t.text for t in toks]
        for t in toks:
            if names.count(t.text) > 1 or t.text in pnames:
                raise self.semantic(f"name {t.text} declared twice", t)
        self.expect("over")
        self.expect("(")
        dims: List[Dim] = []

        def item():
            tok = self.ident("dimension name")
            if tok.text in pnames or tok.text in names or tok.text in (d.name for d in dims):
                raise self.semantic(f"name {tok.text} already declared", tok)
            self.expect(":")
            dims.append(Dim(tok.text, self.expression(_Scope(pnames))))
        self.comma_list(item)
        self.expect(")")
        self.expect("}")
        return names, IterationSpace(tuple(dims))

    def ure(self, scope, variables, equations):
        self.expect("ure")
        tok = self.ident("variable name")
        if tok.text not in variables:
            raise self.semantic(f"undeclared variable '{tok.text}'", tok)
        if tok.text in (eq.var for eq in equations):
            raise self.semantic(f"{tok.text} is defined twice", tok)
        self.expect("(")
        args = tuple(t.text for t in self.comma_list(lambda: self.ident("index")))
        self.expect(")")
        if sorted(args) != sorted(scope.indices):
            raise self.semantic(f"{tok.text} must be indexed by every dimension "
                                f"({', '.join(sorted(scope.indices))})", tok)
        if equations and args != equations[0].args:
            raise self.semantic(f"{tok.text}{args} disagrees with the index order "
                                f"{equations[0].args} of the first equation", tok)
        self.expect("=")
        body = self.expression(scope)
        earlier = {eq.var for eq in equations}
        for ref in E.walk(body):
            if isinstance(ref, E.VarRef) and ref.name not in earlier:
                here = tuple(E.Index(a) for a in args)
                if ref.args == here:
                    raise self.semantic(f"{ref.name} is read at the same point before "
                                        f"its equation", tok)
        return Equation(tok.text, args, body)

    def out(self, scope, indices):
        self.expect("out")
        tok = self.ident("output name")
        if tok.text in scope.variables or tok.text in scope.inputs:
            raise self.semantic(f"name {tok.text} already declared", tok)
        self.expect("(")
        args: Tuple[str, ...] = ()
        if not self.at(")"):
            args = tuple(t.text for t in self.comma_list(lambda: self.ident("index")))
        self.expect(")")
        for a in args:
            if a not in scope.indices or args.count(a) > 1:
                raise self.semantic(f"bad output index '{a}'", tok)
        self.expect("=")
        self.expect("select")
        self.expect("(")
        guard = self.expression(scope)
        self.expect(",")
        value = self.expression(scope)
        self.expect(")")
        return OutputDecl(tok.text, args, guard, value)

    def schedule(self, pnames, dims):
        self.expect("schedule")
        self.expect("{")
        loops = set(dims)
        out = []

        def loop_name(tok):
            if tok.text not in loops:
                raise self.semantic(f"no loop named '{tok.text}'", tok)
            return tok.text

        def fresh(tok):
            if tok.text in loops or tok.text in pnames:
                raise self.semantic(f"name '{tok.text}' is already in use", tok)
            return tok.text

        while not self.at("}"):
            kw = self.tok
            if self.accept("tile"):
                var = loop_name(self.ident("loop"))
                self.expect("->")
                self.expect("(")
                outer = fresh(self.ident("loop"))
                self.expect(",")
                inner = fresh(self.ident("loop"))
                self.expect(")")
                if outer == inner:
                    raise self.semantic("tile needs two distinct loop names", kw)
                self.expect("by")
                if self.tok.kind == "ident":
                    ftok = self.ident("tile factor")
                    if ftok.text not in pnames:
                        raise self.semantic(f"undeclared parameter '{ftok.text}'", ftok)
                    factor = E.Param(ftok.text)
                else:
                    n = self.integer()
                    if n < 1:
                        raise self.semantic("tile factor must be >= 1", kw)
                    factor = E.Const(n)
                loops.discard(var)
                loops.update((outer, inner))
                out.append(Tile(var, outer, inner, factor))
            elif self.accept("reorder"):
                self.expect("(")
                names = tuple(loop_name(t) for t in self.comma_list(lambda: self.ident("loop")))
                self.expect(")")
                out.append(Reorder(names))
            elif self.at("blocks") or self.at("threads"):
                self.i += 1
                names = tuple(loop_name(t) for t in self.comma_list(lambda: self.ident("loop")))
                out.append(Blocks(names) if kw.text == "blocks" else Threads(names))
            elif self.accept("store_in"):
                func = self.ident("function").text
                self.expect(",")
                mem = self.tok.text
                if mem not in ("shared", "register"):
                    raise self.error(f"unexpected {mem!r}", ("'shared'", "'register'"))
                self.i += 1
                out.append(StoreIn(func, mem))
            elif self.accept("compute_at"):
                func = self.ident("function").text
                self.expect(",")
                consumer = self.ident("function").text
                self.expect(",")
                loop = loop_name(self.ident("loop"))
                out.append(ComputeAt(func, consumer, loop))
            elif self.accept("stt"):
                out.append(self.stt(pnames, loops, loop_name, fresh))
            else:
                raise self.error(f"unexpected {kw.text or 'end of input'!r}",
                                 ("directive", "'}'"))
        self.expect("}")
        return out

    def stt(self, pnames, loops, loop_name, fresh):
        kw = self.toks[self.i - 1]
        self.expect("(")
        sources = tuple(loop_name(t) for t in self.comma_list(lambda: self.ident("loop")))
        self.expect(")")
        self.expect("->")
        self.expect("(")
        dests = tuple(fresh(t) for t in self.comma_list(lambda: self.ident("loop")))
        self.expect(")")
        if len(set(dests)) != len(dests) or len(set(sources)) != len(sources):
            raise self.semantic("repeated loop name in space-time transform", kw)
        self.expect("matrix")
        self.expect("[")

        def entry():
            neg = self.accept("-")
            tok = self.tok
            if tok.kind == "float":
                raise self.semantic(f"non-integer matrix entry {tok.text}", tok)
            if tok.kind == "ident":
                if tok.text not in pnames:
                    raise self.semantic(f"undeclared parameter '{tok.text}'", tok)
                self.i += 1
                return E.Neg(E.Param(tok.text)) if neg else E.Param(tok.text)
            if tok.kind != "int":
                raise self.error(f"unexpected {tok.text or 'end of input'!r}", ("matrix entry",))
            self.i += 1
            return E.Const(-int(tok.text) if neg else int(tok.text))

        def row():
            self.expect("[")
            r = tuple(self.comma_list(entry))
            self.expect("]")
            return r
        matrix = tuple(self.comma_list(row))
        self.expect("]")
        if len(matrix) != len(dests) or any(len(r) != len(sources) for r in matrix):
            raise self.semantic(f"matrix must be {len(dests)}x{len(sources)} "
                                f"(destination loops x source loops)", kw)
        reverse: Tuple[Tuple[str, E.Expr], ...] = ()
        if self.accept("reverse"):
            self.expect("{")
            rscope = _Scope(pnames, dests)

            def item():
                tok = self.ident("source loop")
                if tok.text not in sources:
                    raise self.semantic(f"'{tok.text}' is not a source loop", tok)
                self.expect("=")
                return tok.text, self.expression(rscope)
            reverse = tuple(self.comma_list(item))
            self.expect("}")
            if sorted(n for n, _ in reverse) != sorted(sources):
                raise self.semantic("reverse transform must define every source loop once", kw)
        check_time = self.accept("check_time")
        for s in sources:
            loops.discard(s)
        loops.update(dests)
        return SpaceTime(sources, dests, matrix, reverse, check_time)


def parse(text: str) -> DesignFile:
    """Parse design-file text.  Raises DesignSyntaxError or SemanticError."""
    return _Parser(text).design()


# --------------------------------------------------------------------------
# printer

def _list(items) -> str:
    return ", ".join(items)


def _directive_text(d: Directive) -> str:
    if isinstance(d, Tile):
        return f"tile {d.var} -> ({d.outer}, {d.inner}) by {E.to_text(d.factor)}"
    if isinstance(d, Reorder):
        return f"reorder ({_list(d.loops)})"
    if isinstance(d, Blocks):
        return f"blocks {_list(d.loops)}"
    if isinstance(d, Threads):
        return f"threads {_list(d.loops)}"
    if isinstance(d, StoreIn):
        return f"store_in {d.func}, {d.memory}"
    if isinstance(d, ComputeAt):
        return f"compute_at {d.func}, {d.consumer}, {d.loop}"
    if isinstance(d, SpaceTime):
        rows = ", ".join("[" + _list(E.to_text(x) for x in r) + "]" for r in d.matrix)
        text = (f"stt ({_list(d.sources)}) -> ({_list(d.dests)}) matrix [{rows}]")
        if d.reverse:
            text += " reverse { " + _list(f"{n} = {E.to_text(x)}" for n, x in d.reverse) + " }"
        if d.check_time:
            text += " check_time"
        return text
    raise TypeError(d)


def print_design(d: DesignFile) -> str:
    """Canonical text; ``parse(print_design(d)) == d``."""
    s = d.system
    lines = [f"design {s.name} {{"]
    lines.append("  params { " + _list(f"{n} = {E.to_text(v)}" for n, v in s.params) + " }"
                 if s.params else "  params { }")
    ins = _list(f"{i.name}: {i.dtype}[{_list(E.to_text(x) for x in i.shape)}]" for i in s.inputs)
    lines.append(f"  inputs {{ {ins} }}" if ins else "  inputs { }")
    dims = _list(f"{dm.name}: {E.to_text(dm.extent)}" for dm in s.space.dims)
    lines.append(f"  vars {{ {_list(s.variables)} over ({dims}) }}")
    for eq in s.equations:
        lines.append(f"  ure {eq.var}({_list(eq.args)}) = {E.to_text(eq.expr)}")
    o = s.output
    lines.append(f"  out {o.name}({_list(o.args)}) = select({E.to_text(o.guard)}, "
                 f"{E.to_text(o.value)})")
    if d.schedule:
        lines.append("  schedule {")
        lines.extend(f"    {_directive_text(x)}" for x in d.schedule)
        lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"


def replace_matrix(d: DesignFile, matrix, reverse=None) -> DesignFile:
    """Copy of ``d`` whose space-time directive uses an integer ``matrix``."""
    sched = []
    for x in d.schedule:
        if isinstance(x, SpaceTime):
            rows = tuple(tuple(E.Const(int(v)) for v in r) for r in matrix)
            x = SpaceTime(x.sources, x.dests, rows,
                          x.reverse if reverse is None else tuple(reverse), x.check_time)
        sched.append(x)
    return DesignFile(d.system, tuple(sched))


def with_params(d: DesignFile, overrides: Dict[str, int]) -> DesignFile:
    """Copy of ``d`` with parameter definitions replaced by integer values."""
    known = {n for n, _ in d.system.params}
    unknown = set(overrides) - known
    if unknown:
        raise SemanticError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
    params = tuple((n, E.Const(int(overrides[n])) if n in overrides else v)
                   for n, v in d.system.params)
    s = d.system
    return DesignFile(UreSystem(s.name, params, s.inputs, s.variables, s.space,
                                s.equations, s.output), d.schedule)
