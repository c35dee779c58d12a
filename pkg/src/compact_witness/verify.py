"""Independent oracles: pointwise limits, convergence checks, cross-checks and seeded generators."""

import itertools
import logging
import random
from typing import Any, Iterable, Optional

from pydantic import BaseModel, Field

from .closecompact import Cylinder, ElementaryClosedSet, FIPProblem, HatClosedSet, SequencePoint
from .core import (
    ZERO,
    DyadicRational,
    FiniteSupportVector,
    HatPoint,
    INFINITY,
    dyadic,
    named,
    vector,
)
from .errors import InvalidSelectionError, OutOfRangeError, WitnessError
from .spaces import (
    B1PlusSpace,
    B1Space,
    Coordinate,
    HatSpace,
    SpaceDescriptor,
    as_coordinate,
    coordinate_values,
    dump_point,
)
from .streams import (
    FPS,
    Const,
    FreshCoordinate,
    Geom,
    ProductTermCase,
    SetTermCase,
    VectorTermCase,
    fps_eval,
    fresh_tags,
    mentioned_labels,
)
from .witnesses import WitnessResult, extract

logger = logging.getLogger(__name__)


def _case_limit(space: SpaceDescriptor, case: Any) -> Any:
    if isinstance(case, ProductTermCase):
        return tuple(_case_limit(f, part) for f, part in zip(space.factors, case.parts))
    if isinstance(case, SetTermCase):
        if isinstance(space, HatSpace):
            if case.fresh_families or not case.fixed:
                return INFINITY
            return HatPoint(label=next(iter(case.fixed)))
        return case.fixed
    return vector({label: expr.limit() for label, expr in case.fixed_coords.items()})


def brute_limit(s: FPS) -> list[Any]:
    """Limit of every residue class, read directly off the presentation.

    Fixed coordinates tend to the limits of their value expressions and
    fresh coordinates to zero.
    """
    return [_case_limit(s.space, case) for case in s.cases]


class ConvergenceFailure(BaseModel):
    j: int
    index: int
    coordinate: Coordinate
    gap: DyadicRational


class ConvergenceReport(BaseModel):
    checked_coords: list[Coordinate]
    epsilon: DyadicRational
    prefix_depth: int
    threshold: int
    passed: bool = Field(serialization_alias="pass")
    first_failure: Optional[ConvergenceFailure] = None


def check_convergence(
    s: FPS,
    w: WitnessResult,
    coords: Iterable[Any],
    epsilon: DyadicRational,
    depth: int,
) -> ConvergenceReport:
    """Check the first `depth` selected terms against the limit on `coords`.

    Terms before the threshold derived from the witness's convergence
    modulus are not checked.
    """
    coords = sorted({as_coordinate(c) for c in coords})
    if epsilon <= ZERO:
        raise OutOfRangeError(f"epsilon must be positive, got {epsilon}")
    if w.space != s.space:
        raise InvalidSelectionError(
            f"witness is for a {w.space.kind} space, stream is {s.space.kind}"
        )
    try:
        indices = [w.selection.index(j) for j in range(depth)]
    except (WitnessError, ValueError) as e:
        raise InvalidSelectionError(f"selection cannot be evaluated: {e}") from e
    if any(b <= a for a, b in zip(indices, indices[1:])) or any(k < 0 for k in indices):
        raise InvalidSelectionError("selection is not strictly increasing")

    threshold = w.modulus.settle_index(coords, epsilon) if w.modulus else 0
    limit = coordinate_values(w.space, w.limit)
    failure = None
    for j in range(threshold, depth):
        term = coordinate_values(s.space, fps_eval(s, indices[j]))
        for coordinate in coords:
            gap = abs(term.get(coordinate, ZERO) - limit.get(coordinate, ZERO))
            if gap >= epsilon:
                failure = ConvergenceFailure(j=j, index=indices[j], coordinate=coordinate, gap=gap)
                break
        if failure:
            break
    if failure:
        logger.debug(f"convergence fails at j={failure.j} on {failure.coordinate}")
    return ConvergenceReport(
        checked_coords=coords,
        epsilon=epsilon,
        prefix_depth=depth,
        threshold=threshold,
        passed=failure is None,
        first_failure=failure,
    )


def mentioned_coordinates(s: FPS, fresh_probe: int) -> list[Coordinate]:
    """Every named coordinate plus the first `fresh_probe` instances of each fresh family."""
    found = set(mentioned_labels(s))
    for path, family in fresh_tags(s):
        found |= {Coordinate(path=path, label=family.label(k)) for k in range(fresh_probe)}
    return sorted(found)


class CrossCheckReport(BaseModel):
    agree: bool
    residue: int
    witness_limit: Any
    brute_limit: Any
    discrepancies: list[str] = Field(default_factory=list)


def cross_check(s: FPS) -> CrossCheckReport:
    """Compare the codec-based witness limit with the direct per-class limit."""
    if not isinstance(s.space, (B1PlusSpace, B1Space)):
        raise WitnessError(f"cross_check needs a b1plus or b1 stream, got {s.space.kind}")
    witness = extract(s)
    residue = witness.selection.index(0) % s.modulus
    direct = brute_limit(s)[residue]
    left = coordinate_values(s.space, witness.limit)
    right = coordinate_values(s.space, direct)
    discrepancies = [
        f"{coordinate}: witness {left.get(coordinate, ZERO)}"
        f" vs direct {right.get(coordinate, ZERO)}"
        for coordinate in sorted(set(left) | set(right))
        if left.get(coordinate, ZERO) != right.get(coordinate, ZERO)
    ]
    if discrepancies:
        logger.warning(f"[ERROR] Cross-check disagreement on class {residue}: {discrepancies}")
    return CrossCheckReport(
        agree=not discrepancies,
        residue=residue,
        witness_limit=dump_point(s.space, witness.limit),
        brute_limit=dump_point(s.space, direct),
        discrepancies=discrepancies,
    )


class BatchCrossCheck(BaseModel):
    seed: int
    count: int
    signed: bool
    agreed: int
    disagreements: list[dict[str, Any]] = Field(default_factory=list)


def cross_check_batch(seed: int, count: int, signed: bool = False) -> BatchCrossCheck:
    """Cross-check `count` generated streams; the seed makes the batch reproducible."""
    rng = random.Random(seed)
    agreed, disagreements = 0, []
    for index in range(count):
        s = random_b1plus_fps(rng, signed=signed)
        report = cross_check(s)
        if report.agree:
            agreed += 1
        else:
            disagreements.append(
                {"index": index, "stream": s.model_dump(), "discrepancies": report.discrepancies}
            )
    logger.info(f"[OK] Cross-checked {count} streams (seed {seed}): {agreed} agree")
    return BatchCrossCheck(
        seed=seed, count=count, signed=signed, agreed=agreed, disagreements=disagreements
    )


VECTOR_LABELS = [f"i{n}" for n in range(16)]
CASE_LABELS = ["a", "b", "c", "d", "e"]
FRESH_TAGS = ["s", "t", "u"]
RATIOS = [dyadic(0), dyadic(1, 2), dyadic(1, 1), dyadic(3, 2)]
FIP_UNIVERSE = [f"u{n}" for n in range(5)]


def _split_budget(rng: random.Random, total: int, parts: int) -> list[int]:
    """Split `total` into `parts` positive integers (needs total >= parts)."""
    if parts == 0:
        return []
    cuts = sorted(rng.sample(range(1, total), parts - 1))
    return [b - a for a, b in zip([0] + cuts, cuts + [total])]


def random_dyadic_vector(
    rng: random.Random, max_support: int = 8, max_exponent: int = 12, signed: bool = False
) -> FiniteSupportVector:
    """A point of B⁺₁ (B₁ when signed) with at most `max_support` coordinates."""
    size = rng.randint(0, max_support)
    if size == 0:
        return FiniteSupportVector()
    budget = rng.randint(size, 1 << max_exponent)
    labels = rng.sample(VECTOR_LABELS, size)
    entries = {}
    for label, units in zip(labels, _split_budget(rng, budget, size)):
        value = dyadic(units, max_exponent)
        entries[label] = -value if signed and rng.random() < 0.5 else value
    return vector(entries)


def _random_case(rng: random.Random, signed: bool, exponent: int = 6) -> VectorTermCase:
    fixed = rng.sample(CASE_LABELS, rng.randint(0, 3))
    tags = rng.sample(FRESH_TAGS, rng.randint(0, 2))
    entries = len(fixed) + len(tags)
    if entries == 0:
        return VectorTermCase()
    units = _split_budget(rng, rng.randint(entries, 1 << exponent), entries)
    values = []
    for amount in units:
        value = dyadic(amount, exponent)
        values.append(-value if signed and rng.random() < 0.5 else value)
    fixed_coords = {}
    for label, value in zip(fixed, values):
        if rng.random() < 0.5:
            fixed_coords[named(label)] = Const(q=value)
        else:
            fixed_coords[named(label)] = Geom(q=value, r=rng.choice(RATIOS))
    fresh_coords = tuple(
        FreshCoordinate(tag=tag, value=value) for tag, value in zip(tags, values[len(fixed) :])
    )
    return VectorTermCase(fixed_coords=fixed_coords, fresh_coords=fresh_coords)


def random_b1plus_fps(rng: random.Random, signed: bool = False) -> FPS:
    """A valid stream over B⁺₁, or over B₁ when `signed`."""
    modulus = rng.randint(1, 3)
    preamble = tuple(
        random_dyadic_vector(rng, signed=signed) for _ in range(rng.randint(0, 2))
    )
    cases = tuple(_random_case(rng, signed) for _ in range(modulus))
    space = B1Space() if signed else B1PlusSpace()
    return FPS(modulus=modulus, preamble=preamble, cases=cases, space=space)


def _random_closed_set(rng: random.Random, with_infinity: bool) -> HatClosedSet:
    labels = rng.sample(FIP_UNIVERSE, rng.randint(0, 3))
    forms = ["infinity_plus", "cofinite"]
    if not with_infinity:
        forms += ["finite", "finite"]
    form = rng.choice(forms)
    if form == "finite":
        return HatClosedSet.finite(labels)
    if form == "infinity_plus":
        return HatClosedSet.infinity_plus(labels)
    return HatClosedSet.cofinite(labels)


def random_fip_problem(
    rng: random.Random, with_infinity: bool = False, coordinates: int = 4
) -> FIPProblem:
    """Up to 4 constraints of up to 3 cylinders over coordinates below `coordinates`.

    With `with_infinity` the first cylinder always contains ∞.
    """
    constraints = []
    for index in range(rng.randint(1, 4)):
        disjuncts = []
        for position in range(rng.randint(1, 3)):
            forced = with_infinity and index == 0 and position == 0
            disjuncts.append(
                Cylinder(
                    coordinate=rng.randrange(coordinates),
                    constraint=_random_closed_set(rng, forced),
                )
            )
        constraints.append(ElementaryClosedSet(disjuncts=tuple(disjuncts)))
    return FIPProblem(constraints=tuple(constraints))


def brute_force_fip(
    problem: FIPProblem, universe: Iterable[Any], coordinates: int
) -> Optional[SequencePoint]:
    """First point of (U ∪ {∞})^coordinates, extended by ∞, that meets every constraint."""
    labels = sorted(named(u) for u in universe)
    candidates = [INFINITY] + [HatPoint(label=label) for label in labels]
    for values in itertools.product(candidates, repeat=coordinates):
        point = SequencePoint(values=dict(enumerate(values)))
        if problem.contains(point):
            return point
    return None
