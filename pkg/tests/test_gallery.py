import pytest

from sysc import gallery
from sysc.errors import BadOverride, UnknownKey
from sysc.parser import parse, print_design


def test_keys_and_provenance():
    assert gallery.list_keys() == gallery.KEYS
    assert set(gallery.PROVENANCE) == set(gallery.KEYS)
    assert set(gallery.ONE_D) | set(gallery.TWO_D) | {"fbs1d_stride2"} == set(gallery.KEYS)


@pytest.mark.parametrize("key", gallery.KEYS)
def test_entries_parse_and_carry_defaults(key):
    e = gallery.entry(key)
    assert e.key == key and e.provenance == gallery.PROVENANCE[key]
    assert parse(e.text).name == key
    assert dict(e.defaults)["CCC"] == 16


@pytest.mark.parametrize("key", gallery.ONE_D)
def test_one_d_defaults(key):
    p = dict(gallery.entry(key).defaults)
    assert (p["Q"], p["CCC"], p["CC"], p["OC"]) == (5, 16, 56, 1)
    assert p["C"] == 16 * 56


@pytest.mark.parametrize("key", gallery.TWO_D)
def test_two_d_defaults(key):
    p = dict(gallery.entry(key).defaults)
    assert (p["Q"], p["P"], p["CC"], p["RRR"]) == (2, 2, 4, 4)


def test_overrides_propagate_to_derived_params():
    d = gallery.instantiate("sbm1d", {"CC": 2, "Q": 3})
    p = d.system.bind()
    assert (p["C"], p["Q"]) == (32, 3)


@pytest.mark.parametrize("overrides", [{"NOPE": 1}, {"Q": "5"}, {"Q": 2.5}, {"Q": True},
                                       {"CCC": 0}])
def test_bad_overrides(overrides):
    with pytest.raises(BadOverride):
        gallery.instantiate("sbm1d", overrides)


def test_unknown_key():
    with pytest.raises(UnknownKey):
        gallery.instantiate("nope")
    with pytest.raises(UnknownKey):
        gallery.source("nope")


def test_all_entries_round_trip():
    for key, e in gallery.all_entries().items():
        d = parse(e.text)
        assert parse(print_design(d)) == d
