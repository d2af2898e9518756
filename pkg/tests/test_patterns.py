import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvxpref import oracle, patterns
from cvxpref.errors import InputError


def test_identity_positive_witness_gives_all_ones():
    ps = patterns.sample_patterns(np.eye(2), 200, 0)
    idx = [i for i, w in enumerate(ps.witnesses) if np.all(w > 0)]
    assert idx
    assert all(ps.masks[i].tolist() == [True, True] for i in idx)


def test_single_row_has_at_most_two_masks():
    ps = patterns.sample_patterns(np.array([[1.0, -2.0, 0.5]]), 1000, 3)
    assert len(ps) <= 2
    assert set(ps.bitstrings()) <= {"0", "1"}


def test_three_rows_sampling_finds_six_sectors():
    X = np.random.default_rng(5).standard_normal((3, 2))
    ps = patterns.sample_patterns(X, 10**4, 1)
    assert len(ps) == 6
    assert set(ps.bitstrings()) == oracle.angular_sector_masks(X)


def test_sampling_reports_actual_count_and_provenance():
    X = np.random.default_rng(0).standard_normal((4, 2))
    ps = patterns.sample_patterns(X, 50, 9)
    assert len(ps) <= 8
    assert ps.source == "sampled" and ps.seed == 9 and ps.draws == 50


def test_sampling_keeps_first_draw_order():
    X = np.random.default_rng(0).standard_normal((5, 2))
    ps = patterns.sample_patterns(X, 40, 2)
    V = np.random.default_rng(2).standard_normal((40, 2))
    masks = (X @ V.T >= 0).T
    first = []
    for m in masks:
        if not any(np.array_equal(m, f) for f in first):
            first.append(m)
    assert np.array_equal(ps.masks, np.array(first))


def test_sampling_rejects_bad_input():
    with pytest.raises(InputError):
        patterns.sample_patterns(np.array([[np.nan, 1.0]]), 3, 0)
    with pytest.raises(InputError):
        patterns.sample_patterns(np.eye(2), 0, 0)


def test_enumerate_trivial_cases():
    assert sorted(patterns.enumerate_patterns(np.array([[1.0]])).bitstrings()) == ["0", "1"]
    assert len(patterns.enumerate_patterns(np.eye(2))) == 4


def test_enumerate_four_rows_plane_matches_sector_sweep():
    X = np.random.default_rng(1).standard_normal((4, 2))
    ps = patterns.enumerate_patterns(X)
    assert len(ps) == 8 == patterns.region_count_bound(4, 2)
    assert set(ps.bitstrings()) == oracle.angular_sector_masks(X)


def test_enumerate_guards():
    with pytest.raises(InputError):
        patterns.enumerate_patterns(np.ones((15, 2)))
    with pytest.raises(InputError):
        patterns.enumerate_patterns(np.ones((3, 4)))
    with pytest.raises(InputError):
        patterns.enumerate_patterns(np.array([[1.0, 0.0], [0.0, 0.0]]))


def test_enumerate_degenerate_rows():
    # parallel rows share a hyperplane, so only 4 regions remain
    X = np.array([[1.0, 0.0], [2.0, 0.0], [0.0, 1.0]])
    ps = patterns.enumerate_patterns(X)
    assert len(ps) == oracle.arrangement_region_count(X) == 4
    assert ps.check_witnesses(X)


def test_cone_contains_examples():
    X = np.random.default_rng(0).standard_normal((5, 3))
    ps = patterns.sample_patterns(X, 20, 0)
    for p in ps:
        assert patterns.cone_contains(p, X, np.zeros(3))
        assert patterns.cone_contains(p, X, p.witness)
    X1 = np.array([[1.0], [-1.0]])
    assert not patterns.cone_contains(np.array([1, 0]), X1, np.array([-1.0]))
    with pytest.raises(InputError):
        patterns.cone_contains(ps[0], X, np.zeros(2))


def test_json_round_trip():
    X = np.random.default_rng(0).standard_normal((6, 2))
    for ps in (patterns.sample_patterns(X, 30, 4), patterns.enumerate_patterns(X)):
        doc = json.loads(ps.to_json())
        assert doc["n"] == 6 and doc["d"] == 2 and doc["source"] == ps.source
        assert all(set(s) <= {"0", "1"} and len(s) == 6 for s in doc["masks"])
        back = patterns.PatternSet.from_json(ps.to_json())
        assert np.array_equal(back.masks, ps.masks)
        assert np.array_equal(back.witnesses, ps.witnesses)
        assert (back.seed, back.draws) == (ps.seed, ps.draws)


def test_pattern_set_is_immutable():
    ps = patterns.sample_patterns(np.eye(3), 10, 0)
    with pytest.raises(ValueError):
        ps.masks[0, 0] = not ps.masks[0, 0]


shapes = st.tuples(st.integers(1, 10), st.integers(1, 3))


@settings(max_examples=40, deadline=None)
@given(shape=shapes, seed=st.integers(0, 2**31 - 1), P=st.integers(1, 300))
def test_sampling_is_subset_of_enumeration(shape, seed, P):
    X = np.random.default_rng(seed).standard_normal(shape)
    sampled = patterns.sample_patterns(X, P, seed)
    full = patterns.enumerate_patterns(X)
    assert set(sampled.bitstrings()) <= set(full.bitstrings())
    assert sampled.check_witnesses(X) and full.check_witnesses(X)
    assert len(full) <= patterns.region_count_bound(*shape)


@settings(max_examples=25, deadline=None)
@given(shape=shapes, seed=st.integers(0, 2**31 - 1), P=st.integers(1, 100))
def test_sampling_is_deterministic_and_distinct(shape, seed, P):
    X = np.random.default_rng(seed).standard_normal(shape)
    a = patterns.sample_patterns(X, P, seed)
    b = patterns.sample_patterns(X, P, seed)
    assert np.array_equal(a.masks, b.masks) and np.array_equal(a.witnesses, b.witnesses)
    assert len(set(a.bitstrings())) == len(a)


@settings(max_examples=25, deadline=None)
@given(shape=st.tuples(st.integers(1, 9), st.integers(1, 3)), seed=st.integers(0, 2**31 - 1))
def test_enumeration_count_matches_zaslavsky(shape, seed):
    X = np.random.default_rng(seed).standard_normal(shape)
    assert len(patterns.enumerate_patterns(X)) == oracle.arrangement_region_count(X)
