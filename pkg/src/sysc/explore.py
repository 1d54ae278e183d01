"""Exhaustive search over small integer space-time matrices."""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from typing import List, Mapping, Optional, Tuple

from .errors import SyscError
from .ir import compile_design
from .parser import DesignFile, SpaceTime, replace_matrix
from .perf import PerfReport, analyze, percent, sig2
from .simulator import EquivalenceReport, check_equivalence
from .transform import determinant


@dataclass
class Candidate:
    matrix: Tuple[Tuple[int, ...], ...]
    report: PerfReport
    equivalence: Optional[EquivalenceReport] = None

    @property
    def key(self):
        r = self.report
        return (-r.utilization, -r.outturn, r.register_usage, self.matrix)

    @property
    def verified(self) -> bool:
        return self.equivalence is not None and self.equivalence.ok


@dataclass
class Exploration:
    design: str
    examined: int
    candidates: List[Candidate]                 # ranked, best first
    rejected: Counter = field(default_factory=Counter)

    def find(self, matrix) -> Optional[Candidate]:
        m = tuple(tuple(r) for r in matrix)
        return next((c for c in self.candidates if c.matrix == m), None)

    def to_text(self) -> str:
        lines = [f"{self.design}: {self.examined} matrices examined, "
                 f"{len(self.candidates)} valid"]
        for reason, n in sorted(self.rejected.items()):
            lines.append(f"  rejected ({reason}): {n}")
        lines.append(f"{'rank':>4}  {'matrix':<20} {'pattern':<7} {'lanes':>5} {'steps':>5} "
                     f"{'outturn':>7} {'util':>5} {'regs':>5}  verified")
        for k, c in enumerate(self.candidates, 1):
            r = c.report
            m = str([list(row) for row in c.matrix])
            ver = "-" if c.equivalence is None else ("yes" if c.verified else "NO")
            lines.append(f"{k:>4}  {m:<20} {r.pattern:<7} {r.lanes:>5} {r.time_steps:>5} "
                         f"{sig2(r.outturn):>7} {percent(r.utilization):>5} "
                         f"{r.register_usage:>5}  {ver}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "design": self.design, "examined": self.examined,
            "rejected": dict(self.rejected),
            "candidates": [{
                "matrix": [list(r) for r in c.matrix],
                "perf": c.report.to_dict(),
                "verified": None if c.equivalence is None else c.verified,
            } for c in self.candidates],
        }


def explore(design: DesignFile, bound: int = 2, overrides: Mapping[str, int] = None,
            top: Optional[int] = None, trials: int = 3, seed: int = 0) -> Exploration:
    """Rank every valid unimodular matrix with entries in [-bound, bound].

    The ``top`` best candidates (all when None) are verified by simulation;
    a candidate that fails verification is dropped from the ranking.
    """
    stt = next((d for d in design.schedule if isinstance(d, SpaceTime)), None)
    if stt is None:
        raise SyscError("the design has no stt directive to explore")
    n = len(stt.sources)
    if len(stt.dests) != n:
        raise SyscError("exploration needs a square transform (one source loop per "
                        "destination loop)")
    rejected: Counter = Counter()
    found: List[Candidate] = []
    entries = range(-bound, bound + 1)
    examined = 0
    for flat in itertools.product(entries, repeat=n * n):
        examined += 1
        matrix = tuple(tuple(flat[i * n:(i + 1) * n]) for i in range(n))
        if abs(determinant(matrix)) != 1:
            rejected["not unimodular"] += 1
            continue
        candidate = replace_matrix(design, matrix, reverse=())
        try:
            nest = compile_design(candidate, overrides).nest
        except SyscError as exc:
            rejected[type(exc).__name__] += 1
            continue
        found.append(Candidate(matrix, analyze(nest)))
    found.sort(key=lambda c: c.key)
    kept = []
    for k, c in enumerate(found):
        if top is None or k < top:
            candidate = replace_matrix(design, c.matrix, reverse=())
            try:
                c.equivalence = check_equivalence(candidate, trials, seed, overrides)
            except SyscError as exc:
                rejected[f"simulation: {type(exc).__name__}"] += 1
                continue
            if not c.equivalence.ok:
                rejected["simulation mismatch"] += 1
                continue
        kept.append(c)
    return Exploration(design.name, examined, kept, rejected)
