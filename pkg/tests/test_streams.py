"""Unit tests for finitely presented sequences."""

import pytest
from pydantic import ValidationError

from compact_witness.core import (
    INFINITY,
    as_dyadic,
    dyadic,
    fresh,
    hat_point,
    label_set,
    named,
    vector,
)
from compact_witness.errors import (
    GroundMismatchError,
    IncompatibleModulusError,
    InvalidSelectionError,
    SpaceViolationError,
)
from compact_witness.spaces import Coordinate, SigmaSpace
from compact_witness.streams import (
    FPS,
    BlackBoxStream,
    Const,
    FreshFamily,
    Geom,
    Progression,
    class_start,
    fps_eval,
    fps_project,
    fps_restrict,
    fps_validate,
    fresh_tags,
    geometric_settle,
    mentioned_labels,
    require_valid,
)

ALTERNATING = {
    "modulus": 2,
    "preamble": [],
    "space": {"kind": "sigma", "n": 2},
    "cases": [
        {"fixed": ["a"], "fresh_families": ["t"]},
        {"fixed": ["a", "b"]},
    ],
}


def test_value_expressions():
    """Const is constant, Geom decays to zero."""
    assert Const(q="1/2^1").at(7) == dyadic(1, 1)
    g = Geom(q="1/2^1", r="1/2^1")
    assert g.at(0) == dyadic(1, 1)
    assert g.at(3) == dyadic(1, 4)
    assert g.limit() == 0
    assert Geom(q=1, r=0).at(0) == 1
    assert Geom(q=1, r=0).at(1) == 0
    with pytest.raises(ValidationError):
        Geom(q=1, r=1)
    with pytest.raises(ValidationError):
        Const(q=2)


@pytest.mark.parametrize(
    "q, r, t", [("1/2^1", "1/2^1", "1/2^5"), ("3/2^2", "3/2^2", "1/2^3"), (1, "7/2^3", "1/2^4")]
)
def test_geometric_settle_is_least_index(q, r, t):
    """The settle index is the first k with q·r^k below the threshold."""
    q, r, t = as_dyadic(q), as_dyadic(r), as_dyadic(t)
    k = 0
    while q * r**k >= t:
        k += 1
    assert geometric_settle(q, r, t) == k


def test_geometric_settle_edges():
    """Already below, zero rate, and a threshold that can never be reached."""
    assert geometric_settle(dyadic(1, 4), dyadic(1, 1), dyadic(1, 1)) == 0
    assert geometric_settle(dyadic(1), dyadic(0), dyadic(1, 1)) == 1
    with pytest.raises(ValueError):
        geometric_settle(dyadic(1), dyadic(1, 1), dyadic(0))


def test_geometric_settle_slow_rate():
    """Rates close to 1 settle far out without stepping through every index."""
    slow = Geom(q="1/2^1", r="1023/2^10")
    threshold = dyadic(1, 10)
    k = slow.settle(threshold)
    assert slow.at(k) < threshold <= slow.at(k - 1)
    assert k > 6000


def test_fresh_family_is_affine():
    """Labels tag#(offset + stride·k), with inverse index_of."""
    family = FreshFamily(tag="t", offset=3, stride=2)
    assert family.label(0) == fresh("t", 3)
    assert family.label(4) == fresh("t", 11)
    assert family.owns(fresh("t", 11))
    assert not family.owns(fresh("t", 4))
    assert not family.owns(fresh("s", 11))
    assert not family.owns(named("t"))
    assert family.index_of(fresh("t", 11)) == 4
    assert family.shifted(1, 3) == FreshFamily(tag="t", offset=5, stride=6)


def test_fps_eval_by_residue_class():
    """Term k follows case k mod modulus after the preamble."""
    s = FPS.model_validate({**ALTERNATING, "preamble": [["z"]]})
    assert fps_eval(s, 0) == label_set(["z"])
    assert fps_eval(s, 1) == label_set(["b", "a"])
    assert fps_eval(s, 2) == label_set(["a", "t#2"])
    assert fps_eval(s, 4) == label_set(["a", "t#4"])
    assert class_start(s, 0) == 2
    assert class_start(s, 1) == 1


def test_fps_shape_checks():
    """The case count matches the modulus; cases fit the space."""
    with pytest.raises(ValidationError):
        FPS.model_validate({**ALTERNATING, "modulus": 3})
    with pytest.raises(ValidationError):
        FPS.model_validate(
            {"modulus": 1, "space": {"kind": "hat"}, "cases": [{"fixed": ["a", "b"]}]}
        )
    with pytest.raises(ValidationError):
        FPS.model_validate(
            {
                "modulus": 1,
                "space": {"kind": "cube", "coords": ["a"]},
                "cases": [{"fixed_coords": {"b": "1/2^1"}}],
            }
        )
    with pytest.raises(ValidationError):
        FPS.model_validate(
            {
                "modulus": 1,
                "space": {"kind": "sigma", "n": 2},
                "cases": [{"fixed": ["t#1"], "fresh_families": ["t"]}],
            }
        )
    with pytest.raises(ValidationError):
        FPS.model_validate({**ALTERNATING, "extra": True})


def test_fps_document_round_trip():
    """A dumped FPS reads back to the same value."""
    s = FPS.model_validate(
        {
            "modulus": 1,
            "preamble": [{"a": 1}],
            "space": {"kind": "b1plus"},
            "cases": [
                {
                    "fixed_coords": {
                        "a": {"kind": "geom", "q": "1/2^1", "r": "1/2^1"},
                        "b": "1/2^2",
                    },
                    "fresh_coords": [["t", "1/2^2"]],
                }
            ],
        }
    )
    document = s.model_dump()
    assert document["preamble"] == [{"a": "1/2^0"}]
    assert FPS.model_validate(document) == s
    assert fps_eval(s, 2) == vector({"a": "1/2^3", "b": "1/2^2", "t#2": "1/2^2"})


def test_restrict_shifts_every_expression():
    """fps_restrict yields modulus 1 with shifted geometric and fresh parts."""
    s = FPS.model_validate(
        {
            "modulus": 2,
            "space": {"kind": "b1plus"},
            "cases": [
                {"fixed_coords": {"a": {"kind": "geom", "q": "1/2^1", "r": "1/2^1"}}},
                {"fresh_coords": [["t", "1/2^1"]]},
            ],
        }
    )
    progression = Progression(start=0, residue=1, modulus=4)
    restricted = fps_restrict(s, progression)
    assert restricted.modulus == 1
    for j in range(50):
        assert fps_eval(restricted, j) == fps_eval(s, progression.at(j))

    evens = fps_restrict(s, Progression(start=3, residue=0, modulus=2))
    for j in range(50):
        assert fps_eval(evens, j) == fps_eval(s, 4 + 2 * j)


def test_restrict_rejects_bad_progressions():
    """The modulus must be a multiple; the start must clear the preamble."""
    s = FPS.model_validate({**ALTERNATING, "preamble": [["z"]]})
    with pytest.raises(IncompatibleModulusError):
        fps_restrict(s, Progression(start=1, residue=0, modulus=3))
    with pytest.raises(InvalidSelectionError):
        fps_restrict(s, Progression(start=0, residue=0, modulus=2))


def test_project_product_factor():
    """fps_project keeps the chosen factor of every term."""
    s = FPS.model_validate(
        {
            "modulus": 1,
            "preamble": [["a", ["b"]]],
            "space": {
                "kind": "product",
                "factors": [
                    {"kind": "hat", "ground": "X"},
                    {"kind": "sigma", "n": 1, "ground": "Y"},
                ],
            },
            "cases": [{"parts": [{"fresh_families": ["t"]}, {"fixed": ["c"]}]}],
        }
    )
    assert fps_eval(s, 0) == (hat_point("a"), label_set(["b"]))
    assert fps_eval(s, 1) == (hat_point("t#1"), label_set(["c"]))
    first = fps_project(s, 0)
    assert fps_eval(first, 3) == hat_point("t#3")
    assert fps_eval(fps_project(s, 1), 0) == label_set(["b"])
    with pytest.raises(GroundMismatchError):
        fps_project(first, 0)


def test_validate_reports_violations():
    """Oversized terms are reported per preamble entry and per class."""
    s = FPS.model_validate(
        {
            "modulus": 2,
            "preamble": [["a", "b", "c"]],
            "space": {"kind": "sigma", "n": 2},
            "cases": [{"fixed": ["a"]}, {"fixed": ["a", "b"], "fresh_families": ["t"]}],
        }
    )
    report = fps_validate(s)
    assert not report.ok
    assert report.violations == [
        "preamble[0]: support size 3 > 2",
        "class 1 (k=1): support size 3 > 2",
    ]
    with pytest.raises(SpaceViolationError):
        require_valid(s)
    assert fps_validate(FPS.model_validate(ALTERNATING)).ok


def test_validate_b1plus_mass():
    """Mass is checked at the first term of each class, where it is largest."""
    s = FPS.model_validate(
        {
            "modulus": 1,
            "space": {"kind": "b1plus"},
            "cases": [
                {
                    "fixed_coords": {"a": {"kind": "geom", "q": "3/2^2", "r": "1/2^1"}},
                    "fresh_coords": [["t", "1/2^1"]],
                }
            ],
        }
    )
    report = fps_validate(s)
    assert report.violations == ["class 0 (k=0): mass 5/4 > 1"]


def test_label_inventory():
    """Mentioned labels and fresh families, with factor paths."""
    s = FPS.model_validate({**ALTERNATING, "preamble": [["z"]]})
    assert mentioned_labels(s) == frozenset(
        Coordinate.model_validate(text) for text in ("a", "b", "z")
    )
    assert fresh_tags(s) == [((), FreshFamily(tag="t"))]


def test_black_box_wraps_fps():
    """A black box evaluates like the FPS it came from."""
    s = FPS.model_validate(ALTERNATING)
    box = BlackBoxStream.from_fps(s)
    assert box(2) == fps_eval(s, 2)
    assert box.space == SigmaSpace(n=2)


def test_hat_case_with_no_labels_is_infinity():
    """An empty hat case denotes ∞."""
    s = FPS.model_validate({"modulus": 1, "space": {"kind": "hat"}, "cases": [{}]})
    assert fps_eval(s, 5) == INFINITY
