import numpy as np
import pytest

from sysc import gallery
from sysc.errors import DesignSyntaxError, SemanticError
from sysc.parser import SpaceTime, Tile, parse, print_design, replace_matrix, tokenize, with_params

OPS = ["+", "-", "*"]
CMPS = ["==", "!=", "<", "<=", ">", ">="]


def _rand_index(rng, dims, params):
    d = str(rng.choice(dims))
    r = rng.integers(4)
    if r == 0:
        return d
    if r == 1:
        return f"{d} + {rng.integers(1, 4)}"
    if r == 2:
        return f"{d} - {rng.integers(1, 4)}"
    return f"{d} + {rng.choice(params)} - 1"


def _rand_expr(rng, depth, dims, params, vars_, inputs):
    r = rng.integers(7 if depth > 0 else 4)
    if r == 0:
        return str(rng.integers(0, 9))
    if r == 1:
        return str(rng.choice(dims + params))
    if r == 2:
        # earlier variables at any offset, this one strictly one step back
        v = int(rng.integers(len(vars_)))
        if v == len(vars_) - 1:
            return f"{vars_[v]}({dims[0]} - 1{''.join(', ' + d for d in dims[1:])})"
        return f"{vars_[v]}({', '.join(_rand_index(rng, dims, params) for _ in dims)})"
    if r == 3:
        name, rank = inputs[rng.integers(len(inputs))]
        return f"{name}({', '.join(_rand_index(rng, dims, params) for _ in range(rank))})"
    if r == 4:
        a = _rand_expr(rng, depth - 1, dims, params, vars_, inputs)
        b = _rand_expr(rng, depth - 1, dims, params, vars_, inputs)
        return f"({a} {rng.choice(OPS)} {b})"
    if r == 5:
        cond = f"{rng.choice(dims)} {rng.choice(CMPS)} {rng.integers(0, 3)}"
        if rng.integers(2):
            cond = f"{cond} && {rng.choice(dims)} % {rng.choice(params)} == 0"
        a = _rand_expr(rng, depth - 1, dims, params, vars_, inputs)
        b = _rand_expr(rng, depth - 1, dims, params, vars_, inputs)
        return f"select({cond}, {a}, {b})"
    return f"-{_rand_expr(rng, depth - 1, dims, params, vars_, inputs)}"


def random_design(rng, k):
    n_dims = int(rng.integers(1, 4))
    dims = ["i", "j", "k"][:n_dims]
    params = ["N", "M", "L"][:n_dims]
    vars_ = [f"V{n}" for n in range(int(rng.integers(1, 4)))]
    inputs = [("a", n_dims), ("b", 1)]
    dtype = str(rng.choice(["i32", "f32"]))
    pvals = ", ".join(f"{p} = {rng.integers(2, 9)}" for p in params)
    lines = [f"design rand{k} {{",
             f"  params {{ {pvals}, T = {params[0]} * 2 }}",
             f"  inputs {{ a: {dtype}[{', '.join(p + ' + 4' for p in params)}], b: {dtype}[T] }}",
             f"  vars {{ {', '.join(vars_)} over ({', '.join(f'{d}: {p}' for d, p in zip(dims, params))}) }}"]
    for n, v in enumerate(vars_):
        lines.append(f"  ure {v}({', '.join(dims)}) = "
                     f"{_rand_expr(rng, 3, dims, params, vars_[:n + 1], inputs)}")
    lines.append(f"  out O({dims[0]}) = select({dims[-1]} == 0, {vars_[-1]}({', '.join(dims)}))")
    if rng.integers(2):
        lines.append("  schedule {")
        lines.append(f"    tile {dims[0]} -> (o, q) by {rng.integers(1, 4)}")
        if n_dims >= 2:
            m = rng.integers(-2, 3, size=(2, 2)).tolist()
            lines.append(f"    stt (q, {dims[1]}) -> (s, t) matrix {m}")
        lines.append("    store_in b, shared")
        lines.append("  }")
    lines.append("}")
    return "\n".join(lines) + "\n"


@pytest.mark.parametrize("key", gallery.KEYS)
def test_gallery_fixpoint(key):
    d = parse(gallery.source(key))
    text = print_design(d)
    assert parse(text) == d
    assert print_design(parse(text)) == text


def test_random_designs_fixpoint():
    rng = np.random.default_rng(2024)
    for k in range(100):
        d = parse(random_design(rng, k))
        text = print_design(d)
        assert parse(text) == d, text
        assert print_design(parse(text)) == text


def _check_position(exc, text):
    assert 0 <= exc.pos < max(len(text), 1)
    lines = text.split("\n")
    assert 1 <= exc.line <= len(lines)
    assert 1 <= exc.col <= len(lines[exc.line - 1]) + 1
    assert sum(len(l) + 1 for l in lines[:exc.line - 1]) + exc.col - 1 == exc.pos


@pytest.mark.parametrize("key", ["sbm1d", "ffs1d", "sbm2d"])
def test_syntax_error_positions_in_bounds(key):
    src = gallery.source(key)
    rng = np.random.default_rng(7)
    hits = 0
    for _ in range(300):
        text = list(src)
        pos = int(rng.integers(len(text)))
        op = rng.integers(3)
        if op == 0:
            del text[pos:pos + int(rng.integers(1, 6))]
        elif op == 1:
            text.insert(pos, str(rng.choice(list("(){}[],=+*#@;$"))))
        else:
            text = text[:pos]
        text = "".join(text)
        try:
            parse(text)
        except DesignSyntaxError as exc:
            hits += 1
            _check_position(exc, text)
        except SemanticError:
            pass
    assert hits > 100


@pytest.mark.parametrize("text", ["", "design", "design x {", "design x { params { A = } }",
                                  "design x { params { A = 1 } inputs { a: i32[A] } vars { } }"])
def test_truncated_inputs_positions(text):
    with pytest.raises(DesignSyntaxError) as err:
        parse(text)
    if text:
        _check_position(err.value, text)


def test_error_carries_expected_tokens():
    with pytest.raises(DesignSyntaxError) as err:
        parse("design x { params { A 1 } }")
    assert err.value.line == 1 and err.value.col == 23
    assert "'='" in err.value.expected


def test_tokenizer_tracks_lines():
    toks = tokenize("a\n  b // c\nd")
    assert [(t.text, t.line, t.col) for t in toks[:3]] == [("a", 1, 1), ("b", 2, 3), ("d", 3, 1)]


def test_rational_matrix_rejected():
    src = gallery.source("sbm1d").replace("[[1, 1], [0, 1]]", "[[1, 1.5], [0, 1]]")
    with pytest.raises((DesignSyntaxError, SemanticError)):
        parse(src)


@pytest.mark.parametrize("bad,needle", [
    ("ure Z(c, q) = Y(c, q)", "Y"),
    ("ure Z(c, q) = x(c, q)", "x"),
])
def test_semantic_errors(bad, needle):
    src = gallery.source("sbm1d")
    lines = [l if not l.strip().startswith("ure Z") else "  " + bad for l in src.splitlines()]
    with pytest.raises(SemanticError, match=needle):
        parse("\n".join(lines))


def test_sbm_schedule_contents():
    d = parse(gallery.source("sbm1d"))
    stt = next(x for x in d.schedule if isinstance(x, SpaceTime))
    assert stt.sources == ("ccc", "q") and stt.dests == ("s", "t")
    assert any(isinstance(x, Tile) and x.var == "c" for x in d.schedule)


def test_replace_matrix_and_params():
    d = parse(gallery.source("sbm1d"))
    e = replace_matrix(d, [[1, 0], [0, 1]], reverse=())
    assert "matrix [[1, 0], [0, 1]]" in print_design(e)
    f = with_params(d, {"Q": 2})
    assert f.system.bind()["Q"] == 2
    with pytest.raises(SemanticError):
        with_params(d, {"NOPE": 1})
