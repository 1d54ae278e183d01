import itertools

import pytest

from sysc import gallery
from sysc.errors import SyscError
from sysc.explore import explore
from sysc.parser import parse
from sysc.transform import determinant

SMALL = {"CC": 1, "Q": 3}


@pytest.fixture(scope="module")
def result():
    return explore(gallery.instantiate("sbm1d"), bound=1, overrides=SMALL, trials=2)


def test_counts(result):
    assert result.examined == 3 ** 4
    singular = sum(abs(determinant([m[:2], m[2:]])) != 1
                   for m in itertools.product(range(-1, 2), repeat=4))
    assert result.rejected["not unimodular"] == singular
    assert result.examined == len(result.candidates) + sum(result.rejected.values())


def test_finds_the_stationary_output_matrix(result):
    c = result.find([[1, 1], [0, 1]])
    assert c is not None and c.verified
    assert c.report.lanes == 16 + 3 - 1


def test_all_candidates_verified(result):
    assert result.candidates and all(c.verified for c in result.candidates)


def test_ranking_is_sorted(result):
    keys = [c.key for c in result.candidates]
    assert keys == sorted(keys)
    assert result.candidates[0].report.utilization == max(
        c.report.utilization for c in result.candidates)


def test_top_limits_verification():
    r = explore(gallery.instantiate("sbm1d"), bound=1, overrides=SMALL, top=2, trials=1)
    assert [c.equivalence is not None for c in r.candidates][:3] == [True, True, False]


def test_text_and_dict(result):
    text = result.to_text()
    assert text.startswith(f"sbm1d: {result.examined} matrices examined")
    d = result.to_dict()
    assert len(d["candidates"]) == len(result.candidates)
    assert all(c["verified"] for c in d["candidates"])


def test_needs_stt():
    src = gallery.source("sbm1d")
    src = "\n".join(l for l in src.splitlines() if "stt" not in l)
    with pytest.raises(SyscError):
        explore(parse(src))
