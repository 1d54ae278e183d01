"""Space-time transform mathematics for linear systolic arrays.

A transform maps an iteration point z of the source loops to the pair
(P z, s^T z): the PE (lane) it runs on and the time step it runs at.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Sequence, Tuple

import numpy as np

from . import expr as E
from .errors import (DimensionMismatch, InvalidProjection, NotUnimodular,
                     OuterDependence, PatternInapplicable)
from .ure import Dependence


class CodePattern(enum.Enum):
    CODE2 = "Code2"     # general: shift, then compute under an in-domain guard
    CODE3 = "Code3"     # register coalesced: compute into a temporary, then shift
    CODE4 = "Code4"     # coalesced, depth 1, no guard

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        for p in cls:
            if p.value.lower() == str(text).lower():
                return p
        raise ValueError(f"unknown code pattern {text!r}")


@dataclass(frozen=True)
class SpaceTimeTransform:
    """Allocation rows P and scheduling vector s over m source loops."""
    allocation: Tuple[Tuple[int, ...], ...]
    schedule: Tuple[int, ...]
    reverse: Tuple[Tuple[str, E.Expr], ...] = ()
    check_time: bool = False
    projection: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        m = len(self.schedule)
        if any(len(r) != m for r in self.allocation):
            raise DimensionMismatch("allocation rows and schedule differ in length")
        if self.projection is not None:
            if len(self.projection) != m:
                raise DimensionMismatch("projection vector has the wrong length")
            if any(_dot(r, self.projection) for r in self.allocation):
                raise InvalidProjection("allocation rows are not orthogonal to the "
                                        "projection vector")

    @classmethod
    def from_matrix(cls, matrix, **kw) -> "SpaceTimeTransform":
        rows = tuple(tuple(int(v) for v in r) for r in matrix)
        return cls(rows[:-1], rows[-1], **kw)

    @property
    def matrix(self) -> Tuple[Tuple[int, ...], ...]:
        return self.allocation + (self.schedule,)

    @property
    def dims(self) -> int:
        return len(self.schedule)


def _dot(a, b) -> int:
    return sum(x * y for x, y in zip(a, b))


@dataclass(frozen=True)
class DependenceVerdict:
    variable: str
    distance: Tuple[int, ...]
    time_distance: int
    broadcast: bool
    valid: bool


@dataclass(frozen=True)
class ValidityReport:
    entries: Tuple[DependenceVerdict, ...]
    processor_check: str            # how processor availability was established
    processor_value: Optional[int]  # s^T d, or the determinant for the shortcut
    processor_valid: bool

    @property
    def valid(self) -> bool:
        return self.processor_valid and all(e.valid for e in self.entries)

    def describe(self) -> str:
        lines = []
        for e in self.entries:
            kind = "broadcast" if e.broadcast else "dependence"
            verdict = "ok" if e.valid else "VIOLATED"
            rule = ">= 0" if e.broadcast else "> 0"
            lines.append(f"  {e.variable} {kind} e={e.distance}: s.e = {e.time_distance} "
                         f"(needs {rule}) {verdict}")
        verdict = "ok" if self.processor_valid else "VIOLATED"
        value = "" if self.processor_value is None else f" = {self.processor_value}"
        lines.append(f"  processor availability ({self.processor_check}{value}) {verdict}")
        lines.append(f"  overall: {'valid' if self.valid else 'INVALID'}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "dependences": [
                {"variable": e.variable, "distance": list(e.distance),
                 "time_distance": e.time_distance, "broadcast": e.broadcast,
                 "valid": e.valid} for e in self.entries],
            "processor": {"check": self.processor_check, "value": self.processor_value,
                          "valid": self.processor_valid},
        }


# --------------------------------------------------------------------------

def restrict_dependences(deps: Sequence[Dependence], indices: Sequence[str],
                         sources: Sequence[str]) -> list:
    """Re-express dependence distances over the transformed loops only.

    ``indices`` names the components of each distance; ``sources`` lists,
    in transform-column order, the index each transformed loop stands for.
    A non-zero component on an index outside ``sources`` crosses untouched
    loops and is rejected.
    """
    out = []
    for d in deps:
        if len(d.distance) != len(indices):
            raise DimensionMismatch(f"{d.variable}: distance {d.distance} has "
                                    f"{len(d.distance)} components, expected {len(indices)}")
        comp = dict(zip(indices, d.distance))
        stray = {k: v for k, v in comp.items() if v and k not in sources}
        if stray:
            raise OuterDependence(f"{d.variable} dependence {d.distance} crosses "
                                  f"untransformed loop(s) {', '.join(stray)}")
        out.append(Dependence(d.variable, tuple(comp[s] for s in sources), d.broadcast))
    return out


def determinant(matrix) -> int:
    """Exact integer determinant (Bareiss fraction-free elimination)."""
    a = [list(map(int, r)) for r in matrix]
    n = len(a)
    if any(len(r) != n for r in a):
        raise DimensionMismatch("determinant of a non-square matrix")
    sign, prev = 1, 1
    for k in range(n - 1):
        if a[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if a[i][k]), None)
            if swap is None:
                return 0
            a[k], a[swap] = a[swap], a[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[n - 1][n - 1] if n else 1


def invert_unimodular(matrix) -> Tuple[Tuple[int, ...], ...]:
    """Integer inverse via the adjugate; requires |det| = 1."""
    n = len(matrix)
    if any(len(r) != n for r in matrix):
        raise DimensionMismatch("only square matrices can be inverted")
    det = determinant(matrix)
    if abs(det) != 1:
        raise NotUnimodular(det)
    if n == 1:
        return ((det,),)
    inv = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [r[:j] + r[j + 1:] for k, r in enumerate(map(list, matrix)) if k != i]
            # adjugate is the transposed cofactor matrix
            inv[j][i] = (-1) ** (i + j) * determinant(minor) * det
    return tuple(map(tuple, inv))


def apply_point(t: SpaceTimeTransform, z: Sequence[int]):
    """(P z, s^T z); the space part is an int for a linear array."""
    if len(z) != t.dims:
        raise DimensionMismatch(f"point {tuple(z)} has {len(z)} components, "
                                f"transform expects {t.dims}")
    space = tuple(_dot(r, z) for r in t.allocation)
    return (space[0] if len(space) == 1 else space), _dot(t.schedule, z)


def reverse_point(t: SpaceTimeTransform, space: int, time: int, sources: Sequence[str],
                  dests: Sequence[str] = ("s", "t"), params: Mapping[str, int] = None):
    """Source point of (space, time): the supplied reverse map, else T^-1."""
    if t.reverse:
        env = {dests[0]: space, dests[-1]: time}
        defs = dict(t.reverse)
        return tuple(E.eval_int(defs[s], params or {}, env) for s in sources)
    inv = invert_unimodular(t.matrix)
    return tuple(_dot(r, (space, time)) for r in inv)


def reverse_exprs(t: SpaceTimeTransform, sources: Sequence[str], dests: Sequence[str]):
    """Reverse map as (source, expression) pairs over the destination loops."""
    if t.reverse:
        defs = dict(t.reverse)
        return tuple((s, defs[s]) for s in sources)
    inv = invert_unimodular(t.matrix)
    out = []
    for s, row in zip(sources, inv):
        out.append((s, E.from_affine(dict(zip(dests, row)), 0, order=list(dests))))
    return tuple(out)


def check_injective(t: SpaceTimeTransform, extents: Sequence[int]) -> bool:
    """No two domain points share a (space, time) pair (exhaustive)."""
    m = np.array(t.matrix, dtype=np.int64)
    grids = np.stack(np.meshgrid(*[np.arange(n) for n in extents], indexing="ij"), -1)
    images = grids.reshape(-1, len(extents)) @ m.T
    return len(np.unique(images, axis=0)) == len(images)


def check_validity(t: SpaceTimeTransform, deps: Sequence[Dependence],
                   extents: Sequence[int] = None) -> ValidityReport:
    """Data and processor availability of ``t`` for ``deps``.

    Without a projection vector, processor availability is established by
    a non-zero determinant (square transforms) or by exhaustive injectivity
    over ``extents``.
    """
    entries = []
    for d in deps:
        if len(d.distance) != t.dims:
            raise DimensionMismatch(f"{d.variable}: distance {d.distance} has "
                                    f"{len(d.distance)} components, transform has {t.dims}")
        st = _dot(t.schedule, d.distance)
        ok = st >= 0 if d.broadcast else st > 0
        entries.append(DependenceVerdict(d.variable, tuple(d.distance), st, d.broadcast, ok))
    if t.projection is not None:
        v = _dot(t.schedule, t.projection)
        proc = ("s.d", v, v > 0)
    elif len(t.matrix) == t.dims:
        det = determinant(t.matrix)
        proc = ("det", det, det != 0)
    elif extents is not None:
        proc = ("injective", None, check_injective(t, extents))
    else:
        raise DimensionMismatch("non-square transform without a projection vector needs "
                                "extents for the injectivity check")
    return ValidityReport(tuple(entries), *proc)


@dataclass(frozen=True)
class ProjectionStep:
    """One projection: direction d, allocation rows P_i and schedule s_i,
    all expressed in the coordinates of this step's input space."""
    direction: Tuple[int, ...]
    allocation: Tuple[Tuple[int, ...], ...]
    schedule: Tuple[int, ...]


def compose_projections(steps: Sequence[ProjectionStep]) -> SpaceTimeTransform:
    """Fold successive projections into one transform.

    Each step projects its input space along its direction; the combined
    allocation is the product of the step allocations and the combined
    time is the sum of every step's schedule applied to that step's input
    coordinates.
    """
    if not steps:
        raise InvalidProjection("no projection steps")
    n = len(steps[0].direction)
    lift = np.eye(n, dtype=np.int64)           # original coords -> current step coords
    schedule = np.zeros(n, dtype=np.int64)
    for k, st in enumerate(steps):
        dim = lift.shape[0]
        alloc = np.array(st.allocation, dtype=np.int64).reshape(-1, dim)
        if len(st.direction) != dim or len(st.schedule) != dim:
            raise DimensionMismatch(f"step {k} expects {dim}-dimensional vectors")
        if alloc.shape[0] != dim - 1:
            raise InvalidProjection(f"step {k} must reduce dimensionality by one")
        if np.any(alloc @ np.array(st.direction)):
            raise InvalidProjection(f"step {k}: allocation rows are not orthogonal to "
                                    f"projection vector {st.direction}")
        schedule = schedule + np.array(st.schedule) @ lift
        lift = alloc @ lift
    if lift.shape[0] != 1:
        raise InvalidProjection("projections must end in a linear (1-D) array")
    return SpaceTimeTransform((tuple(int(v) for v in lift[0]),),
                              tuple(int(v) for v in schedule))


def step_reports(steps: Sequence[ProjectionStep], deps: Sequence[Dependence]) -> list:
    """Validity of every individual projection step on its projected dependences."""
    n = len(steps[0].direction)
    lift = np.eye(n, dtype=np.int64)
    reports = []
    for st in steps:
        projected = [Dependence(d.variable, tuple(int(v) for v in lift @ np.array(d.distance)),
                                d.broadcast) for d in deps]
        projected = [d for d in projected if any(d.distance)]
        step = SpaceTimeTransform(tuple(map(tuple, st.allocation)), tuple(st.schedule),
                                  projection=tuple(st.direction))
        reports.append(check_validity(step, projected))
        lift = np.array(st.allocation, dtype=np.int64).reshape(-1, lift.shape[0]) @ lift
    return reports


def space_bounds(t: SpaceTimeTransform, extents: Sequence[int]) -> Tuple[int, int]:
    """Min/max of P z over the rectangular domain (first allocation row)."""
    return _linear_bounds(t.allocation[0], extents)


def time_bounds(t: SpaceTimeTransform, extents: Sequence[int]) -> Tuple[int, int]:
    """Min/max of s^T z over the domain; a linear form peaks at a corner."""
    return _linear_bounds(t.schedule, extents)


def _linear_bounds(row, extents) -> Tuple[int, int]:
    values = [_dot(row, corner)
              for corner in itertools.product(*[(0, n - 1) for n in extents])]
    return min(values), max(values)


def register_shape(t: SpaceTimeTransform, dep: Optional[Dependence], pattern: CodePattern,
                   extents: Sequence[int]) -> Tuple[int, int]:
    """(lanes, depth) of the register holding one recurrent variable.

    ``dep`` is None for a variable without a cross-point dependence.
    """
    pattern = CodePattern.parse(pattern)
    lo, hi = space_bounds(t, extents)
    lanes = hi - lo + 1
    st = 0 if dep is None else _dot(t.schedule, dep.distance)
    if pattern is CodePattern.CODE4:
        if st > 1:
            raise PatternInapplicable(f"Code4 needs s.e <= 1, {dep.variable} has s.e = {st}")
        if t.check_time:
            raise PatternInapplicable("Code4 cannot honour check_time")
        return lanes, 1
    if pattern is CodePattern.CODE3:
        return lanes, max(st, 1)
    return lanes, st + 1


def utilization_bound(t: SpaceTimeTransform, extents: Sequence[int]) -> Fraction:
    """Domain points per lane-step: the best possible lane utilization."""
    lo, hi = space_bounds(t, extents)
    t0, t1 = time_bounds(t, extents)
    return Fraction(int(np.prod(extents)), (hi - lo + 1) * (t1 - t0 + 1))
