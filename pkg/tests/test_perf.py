from fractions import Fraction

import pytest

from sysc import gallery
from sysc.errors import UnloweredNest
from sysc.ir import compile_design
from sysc.perf import HW_SCALAR_REGISTERS, analyze, percent, sig2, static_dynamic_crosscheck

# Analytical model table for one 1-D convolution with five taps:
# outturn, utilization at two significant figures, published register count
TABLE = {
    "sbm1d": (Fraction(16, 5), "80%", 80),
    "bsm1d": (Fraction(4, 5), "80%", 25),
    "fsm1d": (Fraction(4, 5), "80%", 35),
    "bfs1d": (Fraction(4, 5), "25%", 80),
    "ffs1d": (Fraction(16, 35), "14%", 112),
    "fbs1d": (Fraction(16, 5), "100%", 80),
}

# lanes and steps follow from the footnotes: outturn = 16 / steps and
# utilization = 16 * 5 / (lanes * steps)
SHAPE = {"sbm1d": (20, 5), "bsm1d": (5, 20), "fsm1d": (5, 20), "bfs1d": (16, 20),
         "ffs1d": (16, 35), "fbs1d": (16, 5)}


@pytest.fixture(scope="module")
def reports():
    return {k: analyze(gallery.instantiate(k, {"Q": 5, "CC": 4})) for k in gallery.KEYS}


@pytest.mark.parametrize("key", gallery.ONE_D)
def test_outturn_and_utilization(key, reports):
    r = reports[key]
    outturn, util, _ = TABLE[key]
    assert r.outturn == outturn
    assert percent(r.utilization) == util
    assert r.utilization == Fraction(16 * 5, r.lanes * r.time_steps)
    assert r.outturn == Fraction(16, r.time_steps)


@pytest.mark.parametrize("key", gallery.ONE_D)
def test_lanes_and_steps(key, reports):
    assert (reports[key].lanes, reports[key].time_steps) == SHAPE[key]
    assert reports[key].outputs_per_thread == 16
    assert reports[key].filter_taps == 5


def test_register_usage_ordering(reports):
    regs = {k: reports[k].register_usage for k in gallery.ONE_D}
    middle = [regs[k] for k in ("sbm1d", "bfs1d", "fbs1d")]
    assert regs["ffs1d"] > max(middle)
    assert min(middle) > regs["fsm1d"] > regs["bsm1d"]
    # same ordering as the published counts
    pub = {k: TABLE[k][2] for k in gallery.ONE_D}
    assert pub["ffs1d"] > max(pub[k] for k in ("sbm1d", "bfs1d", "fbs1d"))
    assert min(pub[k] for k in ("sbm1d", "bfs1d", "fbs1d")) > pub["fsm1d"] > pub["bsm1d"]


def test_register_breakdown(reports):
    r = reports["sbm1d"]
    assert r.registers == {"X": 20, "W": 20, "Z": 20}
    assert r.staging == 16 + 5 - 1 + 5
    assert r.register_usage == 85


def test_other_designs(reports):
    assert reports["fbs1d_stride2"].outturn == Fraction(16, 5)
    assert percent(reports["fbs1d_stride2"].utilization) == "100%"
    s2 = reports["sbm2d"]
    # 5 x 5 filter: 16 + 5 - 1 lanes, P * Q steps per row pass, RRR passes
    assert (s2.lanes, s2.passes, s2.steps_per_pass) == (20, 4, 25)
    assert s2.utilization == Fraction(16 * 25, 20 * 25)
    assert reports["fbs2d"].utilization == 1


@pytest.mark.parametrize("key", gallery.KEYS)
def test_static_equals_dynamic(key):
    ov = {"CC": 1} if key in gallery.ONE_D else None
    check = static_dynamic_crosscheck(gallery.instantiate(key, ov))
    assert check, check.diagnostic
    assert check.static_utilization == check.dynamic_utilization


def test_register_warning():
    r = analyze(gallery.instantiate("sbm1d", {"CCC": 512, "CC": 1}))
    assert r.register_usage > HW_SCALAR_REGISTERS
    assert any("exceeds" in w for w in r.warnings)


def test_analyze_needs_lowered_nest():
    first = compile_design(gallery.instantiate("sbm1d")).snapshots[0].nest
    with pytest.raises(UnloweredNest):
        analyze(first)


@pytest.mark.parametrize("x,text", [(Fraction(16, 35), "0.46"), (Fraction(16, 5), "3.2"),
                                    (0.8, "0.8"), (100, "100"), (0.14285, "0.14"), (0, "0")])
def test_sig2(x, text):
    assert sig2(x) == text


def test_report_renders(reports):
    text = reports["ffs1d"].to_text()
    assert "outturn" in text and "0.46 (16/35)" in text and "14% (1/7)" in text
    d = reports["ffs1d"].to_dict()
    assert d["outturn"] == "16/35" and d["utilization_percent"] == "14%"
