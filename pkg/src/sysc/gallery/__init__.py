"""Built-in design files, one per systolic design of the convolution study."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from typing import Dict, Mapping, Tuple

from ..errors import BadOverride, SemanticError, SyscError, UnknownKey
from ..parser import DesignFile, parse, with_params

KEYS = ("sbm1d", "bsm1d", "fsm1d", "bfs1d", "ffs1d", "fbs1d",
        "fbs1d_stride2", "sbm2d", "fbs2d")
ONE_D = KEYS[:6]
TWO_D = ("sbm2d", "fbs2d")

PROVENANCE = {
    "sbm1d": "stationary-output design of the worked 1-D example; matrix [[1, 1], [0, 1]]",
    "bsm1d": "broadcast inputs, forwarded weights, migrating sums; Out equation added at q == Q-1",
    "fsm1d": "forwarded inputs and weights, sums accumulated from the last tap; "
             "Out equation added at q == 0",
    "bfs1d": "broadcast inputs, forwarded weights, stationary sums; Out equation at q == Q-1 "
             "(sums accumulate upward, so the last tap emits)",
    "ffs1d": "forwarded inputs and weights, stationary sums; matrix [[1, 0], [2, 1]]",
    "fbs1d": "forwarded inputs, broadcast weights, stationary sums; identity matrix",
    "fbs1d_stride2": "stride-2 variant; boundary load reads x(2c + q), input length 2C + Q - 2",
    "sbm2d": "2-D stationary-output design; allocation (1 0 1), schedule (0 1 P), explicit reverse",
    "fbs2d": "2-D convolution as P chained 1-D passes; allocation (1 0 0), schedule (0 1 Q)",
}


@dataclass(frozen=True)
class GalleryEntry:
    key: str
    text: str
    defaults: Tuple[Tuple[str, int], ...]
    provenance: str


def list_keys() -> Tuple[str, ...]:
    return KEYS


def source(key: str) -> str:
    if key not in KEYS:
        raise UnknownKey(f"unknown gallery design '{key}' (known: {', '.join(KEYS)})")
    return resources.files(__name__).joinpath(f"{key}.sysd").read_text(encoding="utf-8")


def entry(key: str) -> GalleryEntry:
    text = source(key)
    d = parse(text)
    return GalleryEntry(key, text, tuple(d.system.bind().items()), PROVENANCE[key])


def instantiate(key: str, overrides: Mapping[str, int] = None) -> DesignFile:
    """Parse a gallery design with parameter overrides applied and checked."""
    d = parse(source(key))
    overrides = dict(overrides or {})
    for name, value in overrides.items():
        if isinstance(value, bool) or not isinstance(value, int):
            raise BadOverride(f"{name}: expected an integer, got {value!r}")
    try:
        d = with_params(d, overrides)
    except SemanticError as exc:
        raise BadOverride(str(exc)) from None
    from ..ir import compile_design
    try:
        compile_design(d)
    except SyscError as exc:
        raise BadOverride(f"{key} with {overrides}: {exc}") from None
    return d


def all_entries() -> Dict[str, GalleryEntry]:
    return {k: entry(k) for k in KEYS}
