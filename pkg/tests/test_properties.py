"""Taxonomy flags and implication rules."""

from __future__ import annotations

from itertools import product

import pytest

from featurespace.errors import ValidationError
from featurespace.properties import (
    IMPLICATIONS,
    PROPERTY_NAMES,
    PropertySet,
    format_edge,
    implication_closure,
    validate_property_set,
)


def closure_oracle(p: PropertySet, edges=IMPLICATIONS) -> PropertySet:
    """Independent fixpoint: repeatedly add heads for satisfied tails."""
    true = set(p.true_names())
    while True:
        added = {head for tail, head in edges if tail in true and head not in true}
        if not added:
            return PropertySet.from_names(true)
        true |= added


def all_property_sets():
    for bits in product([False, True], repeat=len(PROPERTY_NAMES)):
        yield PropertySet(**dict(zip(PROPERTY_NAMES, bits)))


def test_human_worded_requires_readable():
    p = PropertySet(human_worded=True)
    assert validate_property_set(p) == (("human_worded", "readable"),)


def test_all_false_is_coherent():
    assert validate_property_set(PropertySet()) == ()


def test_simulatable_with_trackable_is_coherent():
    p = PropertySet(simulatable=True, trackable=True)
    assert validate_property_set(p) == ()


def test_closure_adds_readable_for_human_worded():
    p = implication_closure(PropertySet(human_worded=True))
    assert p == PropertySet(human_worded=True, readable=True)


def test_closure_adds_model_compatible_for_model_ready():
    p = implication_closure(PropertySet(model_ready=True))
    assert p == PropertySet(model_ready=True, model_compatible=True)


def test_closure_matches_oracle_exhaustively():
    for p in all_property_sets():
        assert implication_closure(p) == closure_oracle(p)


def test_closure_idempotent_exhaustively():
    for p in all_property_sets():
        once = implication_closure(p)
        assert implication_closure(once) == once


def test_closure_extensive_and_monotone():
    sets = list(all_property_sets())
    for p in sets:
        assert p.issubset(implication_closure(p))
    # monotonicity over comparable pairs: p vs p with one extra flag
    for p in sets:
        closed = implication_closure(p)
        for name in PROPERTY_NAMES:
            if not p.has(name):
                bigger = p.with_flags(**{name: True})
                assert closed.issubset(implication_closure(bigger))


def test_valid_iff_fixed_point():
    for p in all_property_sets():
        ok = validate_property_set(p) == ()
        assert ok == (implication_closure(p) == p)


def test_extra_implications_extend_the_edge_set():
    extra = [("understandable", "readable")]
    p = PropertySet(understandable=True)
    assert validate_property_set(p) == ()  # not enforced by default
    assert validate_property_set(p, extra) == (("understandable", "readable"),)
    assert implication_closure(p, extra).readable


def test_unknown_flag_rejected():
    with pytest.raises(ValidationError):
        PropertySet.from_names(["made_up"])
    with pytest.raises(ValidationError):
        validate_property_set(PropertySet(), [("nope", "readable")])


def test_format_edge():
    assert format_edge(("human_worded", "readable")) == "human_worded=>readable"
