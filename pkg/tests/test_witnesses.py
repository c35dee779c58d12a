"""Tests for sequential-compactness witnesses."""

import pytest

from compact_witness.codec import h_p
from compact_witness.constants import WitnessMode
from compact_witness.core import INFINITY, ONE, dyadic, hat_point, label_set, two_to_minus, vector
from compact_witness.errors import (
    GroundMismatchError,
    HorizonTooSmallError,
    NotAnFPSError,
    SpaceViolationError,
    UnregisteredFactorError,
)
from compact_witness.spaces import B1PlusSpace, Coordinate, HatSpace, np_power_interval
from compact_witness.streams import FPS, BlackBoxStream, Progression, fps_eval
from compact_witness.verify import brute_limit, check_convergence, mentioned_coordinates
from compact_witness.witnesses import (
    Selection,
    b1_witness,
    b1plus_witness,
    cube_witness,
    empirical_extract,
    extract,
    hat_witness,
    product_witness,
    scalar_witness,
    sigma_witness,
)


def _fps(space, cases, preamble=()):
    return FPS.model_validate(
        {"modulus": len(cases), "preamble": list(preamble), "space": space, "cases": cases}
    )


def _sigma(n, cases, preamble=()):
    return _fps({"kind": "sigma", "n": n}, cases, preamble)


def _hat(cases, preamble=()):
    return _fps({"kind": "hat"}, cases, preamble)


def _b1plus(cases, preamble=()):
    return _fps({"kind": "b1plus"}, cases, preamble)


def _b1(cases, preamble=()):
    return _fps({"kind": "b1"}, cases, preamble)


def _scalar(cases):
    return _fps({"kind": "cube", "coords": ["x"]}, cases)


SIGMA_CORPUS = [
    _sigma(3, [{"fixed": ["a", "b"], "fresh_families": ["t"]}]),
    _sigma(1, [{"fresh_families": ["t"]}]),
    _sigma(1, [{"fixed": ["a"]}]),
    _sigma(2, [{"fixed": ["a"]}, {"fresh_families": ["t"]}]),
    _sigma(2, [{"fixed": ["a", "b"]}, {"fixed": ["a"], "fresh_families": ["t"]}]),
    _sigma(3, [{"fixed": ["a"], "fresh_families": ["t", "u"]}]),
    _sigma(5, [{"fixed": ["a", "b", "c"], "fresh_families": ["s", "t"]}]),
    _sigma(
        4,
        [
            {"fixed": ["a", "b"]},
            {"fixed": ["c"], "fresh_families": ["t"]},
            {"fixed": ["a", "b", "c", "d"]},
        ],
    ),
    _sigma(2, [{"fixed": ["a"], "fresh_families": ["t"]}], preamble=[["x", "y"], ["z"]]),
    _sigma(3, [{"fresh_families": ["t", "u"]}, {"fixed": ["a", "b"]}], preamble=[["a", "b", "c"]]),
    _sigma(1, [{"fixed": ["a"]}, {"fixed": ["b"]}]),
    _sigma(2, [{"fixed": ["a"], "fresh_families": [{"tag": "t", "offset": 5, "stride": 3}]}]),
    _sigma(4, [{"fresh_families": ["t", "u", "v"]}, {"fresh_families": ["t"]}]),
    _sigma(5, [{"fixed": ["a", "b", "c", "d", "e"]}]),
    _sigma(3, [{"fixed": ["a"]}, {"fixed": ["b"]}, {"fixed": ["c"]}]),
    _sigma(2, [{}], preamble=[["a"]]),
    _sigma(3, [{"fixed": ["t#1"], "fresh_families": ["u"]}]),
    _sigma(2, [{"fresh_families": ["t"]}, {"fresh_families": ["t"]}], preamble=[["a"]]),
    _sigma(
        4,
        [
            {"fixed": ["a"]},
            {"fixed": ["a", "b"]},
            {"fresh_families": ["t"]},
            {"fixed": ["a"], "fresh_families": ["t"]},
        ],
    ),
    _sigma(3, [{"fixed": ["b"], "fresh_families": [{"tag": "s", "offset": 2}]}]),
    _sigma(
        5,
        [
            {"fixed": ["a", "b"], "fresh_families": ["s", "t", "u"]},
            {"fixed": ["c", "d", "e"], "fresh_families": ["s"]},
        ],
    ),
    _sigma(1, [{"fresh_families": ["t"]}], preamble=[["a"], []]),
    _sigma(
        2,
        [{"fixed": ["a", "b"]}, {"fixed": ["a", "b"]}, {"fixed": ["a"], "fresh_families": ["t"]}],
        preamble=[["a", "b"]],
    ),
    _sigma(3, [{"fixed": ["x", "y"], "fresh_families": [{"tag": "t", "stride": 2}]}]),
    _sigma(
        4,
        [{"fixed": ["a", "b", "c", "d"]}, {"fixed": ["a", "b", "c"], "fresh_families": ["t"]}],
    ),
    _sigma(2, [{"fresh_families": ["s", "t"]}]),
    _sigma(
        3,
        [{"fixed": ["p"]}, {"fixed": ["q"], "fresh_families": ["t", "u"]}],
        preamble=[["p"], ["q"], ["r"]],
    ),
    _sigma(5, [{"fixed": ["a"], "fresh_families": ["p", "q", "r", "s"]}]),
    _sigma(
        2,
        [
            {"fixed": ["a"], "fresh_families": [{"tag": "t", "offset": 1, "stride": 2}]},
            {"fixed": ["b"]},
        ],
    ),
    _sigma(
        4,
        [
            {"fresh_families": ["t"]},
            {"fixed": ["a", "b", "c", "d"]},
            {"fixed": ["a"], "fresh_families": ["t", "u", "v"]},
        ],
        preamble=[["a", "b", "c", "d"]],
    ),
]

EPSILON = two_to_minus(10)


def _perturbed(witness, coordinate):
    toggled = set(witness.limit) ^ {coordinate.label}
    return witness.model_copy(update={"limit": frozenset(toggled)})


@pytest.mark.parametrize("index", range(len(SIGMA_CORPUS)))
def test_sigma_witness_soundness(index):
    """Each corpus stream converges to its witness limit on every checked coordinate."""
    s = SIGMA_CORPUS[index]
    witness = sigma_witness(s)
    coords = mentioned_coordinates(s, 20)
    report = check_convergence(s, witness, coords, EPSILON, 100)
    assert report.passed, report.first_failure
    assert report.threshold < 100


@pytest.mark.parametrize("index", range(len(SIGMA_CORPUS)))
def test_sigma_perturbed_limit_fails(index):
    """Toggling one checked coordinate of the limit is always caught."""
    s = SIGMA_CORPUS[index]
    witness = sigma_witness(s)
    coords = mentioned_coordinates(s, 20)
    report = check_convergence(s, _perturbed(witness, coords[0]), coords, EPSILON, 100)
    assert not report.passed
    assert report.first_failure.coordinate == coords[0]


def test_sigma_corpus_is_valid():
    """Every corpus stream lies in its σₙ with n ≤ 5."""
    assert len(SIGMA_CORPUS) == 30
    for s in SIGMA_CORPUS:
        assert s.space.n <= 5
        assert sigma_witness(s).limit in brute_limit(s)


def test_sigma_common_part_survives():
    """F_k = {a, b} ∪ {t#k} in σ₃ tends to {a, b} with ν₀ = 2."""
    s = SIGMA_CORPUS[0]
    witness = sigma_witness(s)
    assert witness.limit == label_set(["a", "b"])
    assert witness.trace[0].nu0 == 2
    assert witness.selection == Selection()
    assert [step.depth for step in witness.trace[1:]] == [0, 1]
    assert brute_limit(s) == [label_set(["a", "b"])]
    coords = [Coordinate(label=label) for label in ("a", "b")]
    coords += [Coordinate.model_validate(f"t#{k}") for k in range(200)]
    report = check_convergence(s, witness, coords, EPSILON, 300)
    assert report.passed
    assert report.threshold == 200


def test_sigma_disjoint_terms_tend_to_empty():
    """F_k = {t#k} in σ₁ tends to ∅."""
    witness = sigma_witness(SIGMA_CORPUS[1])
    assert witness.limit == frozenset()
    assert witness.trace[0].nu0 == 0
    assert len(witness.trace) == 2


def test_sigma_constant():
    """Constant {a} has ν₀ = 1 and limit {a}."""
    witness = sigma_witness(SIGMA_CORPUS[2])
    assert witness.limit == label_set(["a"])
    assert witness.trace[0].nu0 == 1


def test_sigma_prefers_least_intersection_class():
    """The lowest class achieving the least ν wins."""
    witness = sigma_witness(SIGMA_CORPUS[18])
    assert witness.trace[0].residue == 2
    assert witness.limit == frozenset()
    assert witness.selection.steps == (Progression(start=0, residue=2, modulus=4),)
    assert sigma_witness(SIGMA_CORPUS[10]).limit == label_set(["a"])


def test_sigma_recursion_depth_bounded():
    """Descent depth never exceeds n."""
    for s in SIGMA_CORPUS:
        depths = [step.depth for step in sigma_witness(s).trace if step.depth is not None]
        assert max(depths) <= s.space.n


def test_hat_constant_stream():
    """A constant point is its own limit, along all of ℕ."""
    witness = hat_witness(_hat([{"fixed": ["a"]}]))
    assert witness.limit == hat_point("a")
    assert witness.selection == Selection()
    assert witness.trace[0].branch == "constant"


def test_hat_injective_stream_tends_to_infinity():
    """k ↦ t#k is one-to-one, so it converges to ∞."""
    witness = hat_witness(_hat([{"fresh_families": ["t"]}]))
    assert witness.limit == INFINITY
    assert witness.trace[0].branch == "injective"


def test_hat_alternating_picks_lowest_constant_class():
    """Parity-alternating a / t#k selects the even class with limit a."""
    s = _hat([{"fixed": ["a"]}, {"fresh_families": ["t"]}])
    witness = hat_witness(s)
    assert witness.limit == hat_point("a")
    assert witness.selection.steps == (Progression(start=0, residue=0, modulus=2),)
    assert [witness.selection.index(j) for j in range(4)] == [0, 2, 4, 6]
    report = check_convergence(s, witness, mentioned_coordinates(s, 20), EPSILON, 100)
    assert report.passed


def test_scalar_examples():
    """Const keeps its value, Geom descends to 0, parity picks class 0."""
    constant = scalar_witness(_scalar([{"fixed_coords": {"x": "1/2^1"}}]))
    assert constant.limit == vector({"x": "1/2^1"})

    decay = {"kind": "geom", "q": 1, "r": "1/2^1"}
    geometric = scalar_witness(_scalar([{"fixed_coords": {"x": decay}}]))
    assert geometric.limit == vector()
    assert geometric.trace[0].branch == "descending"

    parity = scalar_witness(_scalar([{"fixed_coords": {"x": 0}}, {"fixed_coords": {"x": 1}}]))
    assert parity.limit == vector()
    assert parity.selection.steps == (Progression(start=0, residue=0, modulus=2),)


def test_scalar_needs_one_coordinate():
    """Wider cubes go through cube_witness."""
    s = _fps({"kind": "cube", "coords": ["x", "y"]}, [{}])
    with pytest.raises(GroundMismatchError):
        scalar_witness(s)


def test_cube_diagonal_extraction():
    """Coordinates are handled in the enumeration order of D."""
    s = _fps(
        {"kind": "cube", "coords": ["x", "y"]},
        [
            {"fixed_coords": {"x": "1/2^1", "y": {"kind": "geom", "q": 1, "r": "1/2^1"}}},
            {"fixed_coords": {"x": 1}},
        ],
    )
    witness = cube_witness(s)
    assert witness.limit == vector({"x": "1/2^1"})
    assert [step.coordinate for step in witness.trace] == ["x", "y"]
    assert [step.branch for step in witness.trace] == ["constant", "descending"]
    report = check_convergence(s, witness, ["x", "y"], EPSILON, 100)
    assert report.passed
    assert report.threshold == 6


def test_product_witness_componentwise():
    """σ₁ × σ₁ stream ({t#k}, {a}) tends to (∅, {a})."""
    s = _fps(
        {
            "kind": "product",
            "factors": [
                {"kind": "sigma", "n": 1, "ground": "X"},
                {"kind": "sigma", "n": 1, "ground": "Y"},
            ],
        },
        [{"parts": [{"fresh_families": ["t"]}, {"fixed": ["a"]}]}],
    )
    witness = product_witness(s)
    assert witness.limit == (frozenset(), label_set(["a"]))
    assert {step.factor for step in witness.trace[1:]} == {0, 1}
    report = check_convergence(s, witness, mentioned_coordinates(s, 20), EPSILON, 100)
    assert report.passed


def test_product_of_constants_keeps_full_selection():
    """Two constant factors need no extraction."""
    s = _fps(
        {
            "kind": "product",
            "factors": [{"kind": "hat", "ground": "X"}, {"kind": "hat", "ground": "Y"}],
        },
        [{"parts": [{"fixed": ["a"]}, {"fixed": ["b"]}]}],
    )
    witness = product_witness(s)
    assert witness.selection == Selection()
    assert witness.limit == (hat_point("a"), hat_point("b"))


def test_product_with_unwitnessed_factor():
    """B_p factors have no registered witness."""
    s = _fps(
        {
            "kind": "product",
            "factors": [{"kind": "hat", "ground": "X"}, {"kind": "bp", "p": "2", "ground": "Y"}],
        },
        [{"parts": [{"fixed": ["a"]}, {"fixed_coords": {"b": "1/2^1"}}]}],
    )
    with pytest.raises(UnregisteredFactorError):
        product_witness(s)


def test_b1plus_weak_null_basis():
    """y_k = e_{t#k} tends to 0, and h_2 keeps every term on the unit sphere of ℓ²."""
    s = _b1plus([{"fresh_coords": [["t", 1]]}])
    witness = b1plus_witness(s)
    assert witness.limit == vector()
    assert brute_limit(s) == [vector()]
    assert fps_eval(s, 0) == vector({"t#0": 1})
    for k in range(10):
        image = h_p(fps_eval(s, k), 2)
        assert np_power_interval(image.entries, 2).contains(ONE)


def test_b1plus_slow_geometric_rate():
    """A rate of 1023/1024 still yields the constant part as the limit, with a sound check."""
    slow = {"kind": "geom", "q": "1/2^1", "r": "1023/2^10"}
    s = _b1plus([{"fixed_coords": {"a": "1/2^2", "g": slow}}])
    witness = b1plus_witness(s)
    assert witness.limit == vector({"a": "1/2^2"})
    report = check_convergence(s, witness, ["a", "g"], two_to_minus(3), 200)
    assert report.passed
    assert report.threshold < 200


def test_b1plus_examples():
    """Constant and half-escaping streams keep the fixed mass."""
    constant = b1plus_witness(_b1plus([{"fixed_coords": {"a": "1/2^1"}}]))
    assert constant.limit == vector({"a": "1/2^1"})
    s = _b1plus([{"fixed_coords": {"a": "1/2^1"}, "fresh_coords": [["t", "1/2^1"]]}])
    witness = b1plus_witness(s)
    assert witness.limit == vector({"a": "1/2^1"})
    report = check_convergence(s, witness, mentioned_coordinates(s, 200), EPSILON, 300)
    assert report.passed


def test_b1plus_full_mass_coordinate():
    """A coordinate equal to 1 decodes exactly through the all-ones level."""
    witness = b1plus_witness(_b1plus([{"fixed_coords": {"a": 1}}]))
    assert witness.limit == vector({"a": 1})


def test_b1plus_alternating_classes():
    """The class with the least level-0 intersection is selected."""
    s = _b1plus(
        [
            {"fixed_coords": {"a": "1/2^1"}},
            {"fixed_coords": {"b": "1/2^2"}, "fresh_coords": [["t", "1/2^1"]]},
        ]
    )
    witness = b1plus_witness(s)
    assert witness.limit == vector({"b": "1/2^2"})
    assert witness.selection.index(0) % 2 == 1
    assert brute_limit(s)[1] == witness.limit


def test_b1plus_geometric_and_preamble():
    """Geometric coordinates vanish; the preamble is skipped by the threshold."""
    s = _b1plus(
        [{"fixed_coords": {"a": "1/2^2", "b": {"kind": "geom", "q": "1/2^1", "r": "1/2^1"}}}],
        preamble=[{"c": 1}],
    )
    witness = b1plus_witness(s)
    assert witness.limit == vector({"a": "1/2^2"})
    report = check_convergence(s, witness, mentioned_coordinates(s, 20), EPSILON, 100)
    assert report.passed
    assert report.threshold == 10


def test_b1_examples():
    """Signed streams: escaping mass vanishes, fixed signed mass stays."""
    assert b1_witness(_b1([{"fresh_coords": [["t", -1]]}])).limit == vector()
    assert b1_witness(_b1([{"fixed_coords": {"a": "-1/2^1"}}])).limit == vector({"a": "-1/2^1"})
    s = _b1([{"fixed_coords": {"a": "1/2^2"}, "fresh_coords": [["t", "-3/2^2"]]}])
    witness = b1_witness(s)
    assert witness.limit == vector({"a": "1/2^2"})
    assert [step.branch for step in witness.trace if step.step == "b1"] == ["plus", "minus"]
    report = check_convergence(s, witness, mentioned_coordinates(s, 20), EPSILON, 100)
    assert report.passed


def test_extract_dispatch_and_errors():
    """extract dispatches on the space; bad inputs raise the documented errors."""
    assert extract(_hat([{"fixed": ["a"]}])).limit == hat_point("a")
    bp = _fps({"kind": "bp", "p": "2"}, [{"fixed_coords": {"a": "1/2^1"}}])
    with pytest.raises(UnregisteredFactorError):
        extract(bp)
    with pytest.raises(NotAnFPSError):
        extract(BlackBoxStream(evaluate=lambda k: INFINITY, space=HatSpace()))
    with pytest.raises(GroundMismatchError):
        hat_witness(SIGMA_CORPUS[0])
    with pytest.raises(SpaceViolationError):
        sigma_witness(_sigma(1, [{"fixed": ["a", "b"]}]))


def test_witness_is_deterministic():
    """Identical inputs give identical documents, traces included."""
    for s in SIGMA_CORPUS[:5]:
        assert extract(s).model_dump(mode="json") == extract(s).model_dump(mode="json")
    document = extract(SIGMA_CORPUS[3]).model_dump(mode="json")
    assert document["limit"] == []
    assert document["selection"] == {"steps": [{"start": 0, "residue": 1, "modulus": 2}]}


def test_selection_is_strictly_increasing():
    """Nested progressions compose to a strictly increasing index map."""
    selection = Selection(
        steps=(
            Progression(start=3, residue=1, modulus=2),
            Progression(start=0, residue=2, modulus=3),
        )
    )
    indices = [selection.index(j) for j in range(20)]
    assert indices[:3] == [7, 13, 19]
    assert all(a < b for a, b in zip(indices, indices[1:]))


def test_empirical_constant_stream():
    """A constant black box is found with horizon 10."""
    box = BlackBoxStream(evaluate=lambda k: vector({"a": "1/2^1"}), space=B1PlusSpace())
    witness = empirical_extract(box, 10)
    assert witness.mode == WitnessMode.EMPIRICAL
    assert witness.horizon == 10
    assert witness.limit == vector({"a": "1/2^1"})
    assert witness.limit_bounds == {"a": witness.limit_bounds["a"]}
    assert witness.limit_bounds["a"].is_exact
    assert witness.modulus is None


def test_empirical_basis_stream_matches_certified():
    """The black-box basis stream estimates the certified limit 0."""
    s = _b1plus([{"fresh_coords": [["t", 1]]}])
    empirical = extract(s, WitnessMode.EMPIRICAL, horizon=50)
    assert empirical.limit == b1plus_witness(s).limit == vector()
    assert empirical.mode == WitnessMode.EMPIRICAL


def test_empirical_alternating_picks_constant_class():
    """Parity-alternating points: the even class never strays."""
    box = BlackBoxStream.from_fps(_hat([{"fixed": ["a"]}, {"fixed": ["b"]}]))
    witness = empirical_extract(box, 50)
    assert witness.limit == hat_point("a")
    assert witness.trace[0].modulus == 2
    assert witness.trace[0].deviations == 0
    assert witness.selection.index(0) == 24


def test_empirical_fresh_support_is_not_a_deviation():
    """A new coordinate in every term is weak-null noise, not a stray term."""
    s = _b1plus([{"fixed_coords": {"a": "1/2^1"}, "fresh_coords": [["t", "1/2^2"]]}])
    witness = extract(s, WitnessMode.EMPIRICAL, horizon=50)
    assert witness.limit == vector({"a": "1/2^1"})
    assert witness.trace[0].modulus == 1
    assert witness.trace[0].deviations == 0
    assert witness.selection.index(0) == 25
    assert list(witness.limit_bounds) == ["a"]


def test_empirical_tail_is_never_a_single_term():
    """A period-3 stream picks the first class with a full tail, not a lone late term."""
    box = BlackBoxStream(evaluate=lambda k: hat_point(f"x{k % 3}"), space=HatSpace())
    witness = empirical_extract(box, 40)
    tail = [k for k in (witness.selection.index(j) for j in range(40)) if k < 40]
    assert len(tail) == 7
    assert witness.limit == hat_point("x0")
    assert witness.trace[0].modulus == 3
    assert witness.trace[0].deviations == 0


def test_empirical_horizon_too_small():
    """At least two terms are needed."""
    box = BlackBoxStream(evaluate=lambda k: INFINITY, space=HatSpace())
    with pytest.raises(HorizonTooSmallError):
        empirical_extract(box, 1)


def test_empirical_tolerance_merges_close_values():
    """Values within tolerance of the mode do not count as strays."""
    box = BlackBoxStream(
        evaluate=lambda k: vector({"a": dyadic(1, 1) + two_to_minus(20 + k % 2)}),
        space=B1PlusSpace(),
    )
    witness = empirical_extract(box, 10, tolerance=two_to_minus(10))
    assert witness.trace[0].modulus == 1
    assert witness.trace[0].deviations == 0
