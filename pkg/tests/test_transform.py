import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sysc import gallery
from sysc.errors import DimensionMismatch, InvalidProjection, NotUnimodular, OuterDependence, \
    PatternInapplicable
from sysc.ir import transform_of
from sysc.parser import SpaceTime
from sysc.transform import (CodePattern, ProjectionStep, SpaceTimeTransform, apply_point,
                            check_injective, check_validity, compose_projections, determinant,
                            invert_unimodular, register_shape, restrict_dependences,
                            reverse_point, space_bounds, step_reports, time_bounds,
                            utilization_bound)
from sysc.ure import Dependence, infer_dependences


def _stt(key, overrides=None):
    d = gallery.instantiate(key, overrides)
    stt = next(x for x in d.schedule if isinstance(x, SpaceTime))
    return d, stt, transform_of(stt, d.system.bind())


SBM = SpaceTimeTransform.from_matrix([[1, 1], [0, 1]])


@pytest.mark.parametrize("m", [[[1, 2], [3, 4]], [[2, 0, 1], [1, 3, 2], [1, 1, 1]],
                               [[0, 1], [1, 0]], [[5]]])
def test_determinant_matches_numpy(m):
    assert determinant(m) == round(np.linalg.det(np.array(m, float)))


def test_determinant_needs_square():
    with pytest.raises(DimensionMismatch):
        determinant([[1, 2, 3], [0, 1, 0]])


@pytest.mark.parametrize("key", gallery.KEYS)
def test_inverse_round_trips_on_gallery(key):
    d, stt, t = _stt(key)
    if len(t.matrix) != t.dims:
        # non-square: the explicit reverse must undo the map on the domain
        params = d.system.bind()
        extents = [params[k.upper()] for k in stt.sources]
        for z in itertools.product(*map(range, extents)):
            s, tt = apply_point(t, z)
            assert reverse_point(t, s, tt, stt.sources, stt.dests, params) == z
        return
    inv = invert_unimodular(t.matrix)
    eye = np.eye(t.dims, dtype=int)
    np.testing.assert_array_equal(np.array(t.matrix) @ np.array(inv), eye)
    np.testing.assert_array_equal(np.array(inv) @ np.array(t.matrix), eye)


def test_inverse_rejects_non_unimodular():
    with pytest.raises(NotUnimodular):
        invert_unimodular([[1, 1], [1, 3]])


def test_sbm_forward_and_reverse_exhaustive():
    # 16 x 5 domain over (ccc, q)
    for ccc, q in itertools.product(range(16), range(5)):
        s, t = apply_point(SBM, (ccc, q))
        assert (s, t) == (ccc + q, q)
        assert reverse_point(SBM, s, t, ("ccc", "q")) == (ccc, q)


@pytest.mark.parametrize("P", [2, 3])
def test_sbm2d_reverse_exhaustive(P):
    d, stt, t = _stt("sbm2d", {"Q": P, "P": P})
    ccc_n = d.system.bind()["CCC"]
    seen = set()
    for z in itertools.product(range(ccc_n), range(P), range(P)):
        s, tt = apply_point(t, z)
        assert reverse_point(t, s, tt, stt.sources, stt.dests, d.system.bind()) == z
        seen.add((s, tt))
    assert len(seen) == ccc_n * P * P


def test_sbm_is_valid():
    deps = [Dependence("X", (-1, 1), False), Dependence("Z", (0, 1), False)]
    assert check_validity(SBM, deps).valid


def test_negative_schedule_cites_time_distance():
    t = SpaceTimeTransform(((1, 0),), (1, -1))
    report = check_validity(t, [Dependence("Z", (0, 1), False)])
    assert not report.valid
    assert report.entries[0].time_distance == -1
    assert "s.e = -1" in report.describe()


def test_broadcast_allows_zero_time():
    t = SpaceTimeTransform(((1, 0),), (0, 1))
    assert check_validity(t, [Dependence("W", (1, 0), True)]).valid
    assert not check_validity(t, [Dependence("W", (1, 0), False)]).valid


def test_projection_vector_checks():
    with pytest.raises(InvalidProjection):
        SpaceTimeTransform(((1, 0),), (0, 1), projection=(1, 0))
    t = SpaceTimeTransform(((1, 0),), (0, 1), projection=(0, 1))
    assert check_validity(t, []).processor_check == "s.d"


def _brute_injective(matrix, extents):
    images = [tuple(np.array(matrix) @ np.array(z))
              for z in itertools.product(*map(range, extents))]
    return len(set(images)) == len(images)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(-2, 2), min_size=6, max_size=6),
       st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 3)))
def test_injectivity_matches_brute_force(flat, extents):
    rows = (tuple(flat[:3]), tuple(flat[3:]))
    t = SpaceTimeTransform(rows[:1], rows[1])
    assert check_injective(t, extents) == _brute_injective(rows, extents)


def test_collision_rejected_by_non_square_transform():
    # (1, 1, 0) and (0, 0, 1) send (1, 0, 0) and (0, 1, 0) to the same pair
    t = SpaceTimeTransform(((1, 1, 0),), (0, 0, 1))
    report = check_validity(t, [], extents=(2, 2, 2))
    assert report.processor_check == "injective" and not report.processor_valid


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(-2, 2), min_size=4, max_size=4))
def test_valid_transforms_respect_dependences_pointwise(flat):
    t = SpaceTimeTransform.from_matrix([flat[:2], flat[2:]])
    deps = [Dependence("X", (-1, 1), False), Dependence("Z", (0, 1), False)]
    if not check_validity(t, deps).valid:
        return
    for z in itertools.product(range(4), range(3)):
        for d in deps:
            prod = tuple(a - b for a, b in zip(z, d.distance))
            if all(0 <= v < n for v, n in zip(prod, (4, 3))):
                assert apply_point(t, prod)[1] < apply_point(t, z)[1]


def _sequential(steps, z):
    z = np.array(z)
    time = 0
    for s in steps:
        time += int(np.dot(s.schedule, z))
        z = np.array(s.allocation) @ z
    return int(z[0]), time


IJK_TWO_STEPS = [ProjectionStep((0, 0, 1), ((1, 0, 0), (0, 1, 0)), (1, 0, 2)),
        ProjectionStep((0, 1), ((1, 0),), (0, 1))]


def test_ijk_two_step_composition():
    t = compose_projections(IJK_TWO_STEPS)
    assert t.allocation == ((1, 0, 0),) and t.schedule == (1, 1, 2)
    for z in itertools.product(range(3), repeat=3):
        assert apply_point(t, z) == _sequential(IJK_TWO_STEPS, z)


@pytest.mark.parametrize("P", [2, 5])
def test_sbm2d_composition(P):
    steps = [ProjectionStep((0, 1, 0), ((1, 0, 0), (0, 0, 1)), (0, 1, 0)),
             ProjectionStep((-1, 1), ((1, 1),), (0, P))]
    t = compose_projections(steps)
    assert t.allocation == ((1, 0, 1),) and t.schedule == (0, 1, P)
    for z in itertools.product(range(4), range(P), range(P)):
        assert apply_point(t, z) == _sequential(steps, z)
    d, stt, gal = _stt("sbm2d", {"Q": P, "P": P})
    assert gal.allocation == t.allocation and gal.schedule == t.schedule
    # after tiling, the c component of every distance lives on ccc
    indices = tuple("ccc" if i == "c" else i for i in d.system.indices)
    deps = restrict_dependences(infer_dependences(d.system), indices, stt.sources)
    assert check_validity(t, deps, extents=(16, P, P)).valid


def test_single_projection_is_unchanged():
    t = compose_projections([ProjectionStep((1, -1), ((1, 1),), (0, 1))])
    assert t.allocation == ((1, 1),) and t.schedule == (0, 1)


def test_composition_rejects_non_orthogonal_step():
    with pytest.raises(InvalidProjection):
        compose_projections([ProjectionStep((1, 0, 0), ((1, 0, 0), (0, 1, 0)), (1, 0, 0)),
                             ProjectionStep((0, 1), ((1, 0),), (0, 1))])


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(-2, 2), min_size=5, max_size=5))
def test_valid_steps_give_available_data(v):
    # data availability adds up over steps; processor availability does not
    # (s = (2, 1, 1) with allocation (1 0 0) collides), so only the
    # dependence entries are compared
    steps = [ProjectionStep((0, 0, 1), ((1, 0, 0), (0, 1, 0)), (v[0], v[1], v[2])),
             ProjectionStep((0, 1), ((1, 0),), (v[3], v[4]))]
    deps = [Dependence("A", (1, 0, 0), False), Dependence("B", (0, 1, 0), True),
            Dependence("C", (0, 0, 1), False)]
    if all(e.valid for r in step_reports(steps, deps) for e in r.entries):
        combined = check_validity(compose_projections(steps), deps, extents=(3, 3, 3))
        assert all(e.valid for e in combined.entries)


def test_valid_steps_can_still_collide():
    steps = [ProjectionStep((0, 0, 1), ((1, 0, 0), (0, 1, 0)), (1, 0, 1)),
             ProjectionStep((0, 1), ((1, 0),), (1, 1))]
    assert all(r.valid for r in step_reports(steps, []))
    assert not check_validity(compose_projections(steps), [], extents=(3, 3, 3)).valid


def test_ijk_steps_valid_for_projected_dependences():
    deps = [Dependence("A", (1, 0, 0), True), Dependence("B", (0, 1, 0), True),
            Dependence("C", (0, 0, 1), False)]
    reports = step_reports(IJK_TWO_STEPS, deps)
    assert all(r.valid for r in reports)
    # j + 2k separates points only while j takes at most two values
    assert check_validity(compose_projections(IJK_TWO_STEPS), deps, extents=(3, 2, 3)).valid
    assert not check_validity(compose_projections(IJK_TWO_STEPS), deps, extents=(3, 3, 3)).valid


def test_restrict_rejects_outer_dependence():
    with pytest.raises(OuterDependence):
        restrict_dependences([Dependence("Z", (0, 1, 1), False)], ("a", "b", "c"), ("a", "b"))


def test_bounds_and_utilization_bound():
    assert space_bounds(SBM, (16, 5)) == (0, 19)
    assert time_bounds(SBM, (16, 5)) == (0, 4)
    assert utilization_bound(SBM, (16, 5)) == pytest.approx(0.8)


@pytest.mark.parametrize("pattern,dep,shape", [
    ("Code2", Dependence("Z", (0, 1), False), (20, 2)),
    ("Code3", Dependence("Z", (0, 1), False), (20, 1)),
    ("Code4", Dependence("Z", (0, 1), False), (20, 1)),
    ("Code2", None, (20, 1)),
])
def test_register_shape(pattern, dep, shape):
    assert register_shape(SBM, dep, pattern, (16, 5)) == shape


def test_register_shape_deep_dependence():
    t = SpaceTimeTransform.from_matrix([[1, 0], [2, 1]])
    dep = Dependence("X", (-1, 1), False)
    assert register_shape(t, dep, CodePattern.CODE3, (16, 5)) == (16, 1)
    dep = Dependence("Z", (1, 1), False)
    assert register_shape(t, dep, CodePattern.CODE3, (16, 5)) == (16, 3)
    assert register_shape(t, dep, CodePattern.CODE2, (16, 5)) == (16, 4)
    with pytest.raises(PatternInapplicable):
        register_shape(t, dep, CodePattern.CODE4, (16, 5))
