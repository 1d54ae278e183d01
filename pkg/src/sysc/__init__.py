"""Systolic arrays on SIMD hardware from uniform recurrence equations.

Typical flow::

    from sysc import gallery, compile_design, simulate, analyze, emit
    design = gallery.instantiate("sbm1d", {"Q": 5})
    nest = compile_design(design).nest
    report = analyze(nest)
"""

from .emitter import EmittedProgram, emit, reparse_structure
from .errors import *  # noqa: F401,F403
from .explore import explore
from .ir import LoopNest, compile_design, dump
from .parser import DesignFile, parse, print_design
from .perf import PerfReport, analyze, static_dynamic_crosscheck
from .simulator import check_equivalence, count_useful_ops, simulate, simulate_batch
from .transform import (CodePattern, ProjectionStep, SpaceTimeTransform, check_validity,
                        compose_projections, invert_unimodular)
from .ure import UreSystem, direct_eval, infer_dependences
from . import gallery

__version__ = "0.1.0"
