"""Closed sets of X̂, elementary closed sets of X̂^ω and the FIP point-finder."""

import itertools
import logging
from enum import Enum
from typing import Any, Callable, Iterable, Optional, Protocol, Sequence, TypeVar

from pydantic import BaseModel, ConfigDict, Field, model_serializer, model_validator

from .constants import DEFAULT_GROUND
from .core import INFINITY, HatPoint, IndexLabel, as_label, choice_least, dump_labels
from .errors import EmptySetError, UnsatisfiableError, WitnessError

logger = logging.getLogger(__name__)


class ClosedForm(str, Enum):
    """Normal forms of a representable closed subset of X̂."""

    FINITE = "finite"  # S ⊆ X finite
    INFINITY_PLUS = "infinity_plus"  # {∞} ∪ S
    COFINITE = "cofinite"  # {∞} ∪ (X ∖ E)


def _labels(values: Any) -> frozenset[IndexLabel]:
    if values is None:
        return frozenset()
    return frozenset(as_label(value) for value in values)


class HatClosedSet(BaseModel):
    """A closed subset of X̂ in normal form.

    Documents use the keys `finite`, `infinity` and `cofinite_excluded`; the
    cofinite part needs `infinity` and absorbs the finite part.
    """

    model_config = ConfigDict(frozen=True)

    finite_part: frozenset[IndexLabel] = frozenset()
    contains_infinity: bool = False
    cofinite_excluded: Optional[frozenset[IndexLabel]] = None

    @model_validator(mode="before")
    @classmethod
    def _normalise(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        finite = _labels(data.get("finite_part", data.get("finite")))
        infinity = bool(data.get("contains_infinity", data.get("infinity", False)))
        excluded = data.get("cofinite_excluded")
        if excluded is None:
            return {"finite_part": finite, "contains_infinity": infinity}
        if not infinity:
            raise ValueError("a cofinite closed set must contain infinity")
        return {
            "finite_part": frozenset(),
            "contains_infinity": True,
            "cofinite_excluded": _labels(excluded) - finite,
        }

    @model_serializer
    def _to_document(self) -> dict[str, Any]:
        document = {"finite": dump_labels(self.finite_part), "infinity": self.contains_infinity}
        if self.cofinite_excluded is not None:
            document["cofinite_excluded"] = dump_labels(self.cofinite_excluded)
        return document

    def __str__(self) -> str:
        if self.form == ClosedForm.COFINITE:
            return f"{{inf}} + X - {{{', '.join(dump_labels(self.cofinite_excluded))}}}"
        parts = dump_labels(self.finite_part) + (["inf"] if self.contains_infinity else [])
        return "{" + ", ".join(parts) + "}"

    @classmethod
    def finite(cls, labels: Iterable[Any]) -> "HatClosedSet":
        return cls(finite_part=_labels(labels))

    @classmethod
    def infinity_plus(cls, labels: Iterable[Any] = ()) -> "HatClosedSet":
        return cls(finite_part=_labels(labels), contains_infinity=True)

    @classmethod
    def cofinite(cls, excluded: Iterable[Any] = ()) -> "HatClosedSet":
        return cls(contains_infinity=True, cofinite_excluded=_labels(excluded))

    @classmethod
    def everything(cls) -> "HatClosedSet":
        return cls.cofinite()

    @classmethod
    def point(cls, x: HatPoint) -> "HatClosedSet":
        return cls.infinity_plus() if x.is_infinity else cls.finite([x.label])

    @property
    def form(self) -> ClosedForm:
        if self.cofinite_excluded is not None:
            return ClosedForm.COFINITE
        return ClosedForm.INFINITY_PLUS if self.contains_infinity else ClosedForm.FINITE

    def is_empty(self) -> bool:
        return not self.contains_infinity and not self.finite_part

    def contains(self, x: HatPoint) -> bool:
        if x.is_infinity:
            return self.contains_infinity
        if self.cofinite_excluded is not None:
            return x.label not in self.cofinite_excluded
        return x.label in self.finite_part

    def intersect(self, other: "HatClosedSet") -> "HatClosedSet":
        a, b = sorted((self, other), key=lambda c: _FORM_ORDER[c.form])
        if b.form == ClosedForm.COFINITE:
            if a.form == ClosedForm.COFINITE:
                return HatClosedSet.cofinite(a.cofinite_excluded | b.cofinite_excluded)
            remaining = a.finite_part - b.cofinite_excluded
            if a.form == ClosedForm.FINITE:
                return HatClosedSet.finite(remaining)
            return HatClosedSet.infinity_plus(remaining)
        common = a.finite_part & b.finite_part
        if a.form == ClosedForm.FINITE:
            return HatClosedSet.finite(common)
        return HatClosedSet.infinity_plus(common)

    def union(self, other: "HatClosedSet") -> "HatClosedSet":
        a, b = sorted((self, other), key=lambda c: _FORM_ORDER[c.form])
        if b.form == ClosedForm.COFINITE:
            if a.form == ClosedForm.COFINITE:
                return HatClosedSet.cofinite(a.cofinite_excluded & b.cofinite_excluded)
            return HatClosedSet.cofinite(b.cofinite_excluded - a.finite_part)
        joined = a.finite_part | b.finite_part
        if b.form == ClosedForm.INFINITY_PLUS:
            return HatClosedSet.infinity_plus(joined)
        return HatClosedSet.finite(joined)


_FORM_ORDER = {ClosedForm.FINITE: 0, ClosedForm.INFINITY_PLUS: 1, ClosedForm.COFINITE: 2}


def tilde(c: HatClosedSet) -> HatClosedSet:
    """Reduce a non-empty closed set to a finite non-empty one: {∞} if ∞ ∈ c, else c."""
    if c.is_empty():
        raise EmptySetError("tilde needs a non-empty closed set")
    if c.contains_infinity:
        return HatClosedSet.infinity_plus()
    return c


class SequencePoint(BaseModel):
    """A point of X̂^ω: explicit values on finitely many coordinates, ∞ elsewhere."""

    model_config = ConfigDict(frozen=True)

    values: dict[int, HatPoint] = Field(default_factory=dict)

    @model_serializer
    def _to_document(self) -> dict[int, str]:
        return {n: str(self.values[n]) for n in sorted(self.values)}

    def __hash__(self) -> int:
        return hash(frozenset(self.values.items()))

    def at(self, n: int) -> HatPoint:
        return self.values.get(n, INFINITY)


class Cylinder(BaseModel):
    """{x : x_coordinate ∈ constraint}."""

    model_config = ConfigDict(frozen=True)

    coordinate: int = Field(ge=0)
    constraint: HatClosedSet

    @model_validator(mode="before")
    @classmethod
    def _from_pair(cls, data: Any) -> Any:
        if isinstance(data, (list, tuple)) and len(data) == 2:
            return {"coordinate": data[0], "constraint": data[1]}
        return data

    @model_serializer
    def _to_document(self) -> list[Any]:
        return [self.coordinate, self.constraint.model_dump()]


class ElementaryClosedSet(BaseModel):
    """A finite union of cylinders; no disjuncts denotes the empty set."""

    model_config = ConfigDict(frozen=True)

    disjuncts: tuple[Cylinder, ...] = ()

    @model_validator(mode="before")
    @classmethod
    def _from_list(cls, data: Any) -> Any:
        if isinstance(data, (list, tuple)):
            return {"disjuncts": data}
        return data

    @model_serializer
    def _to_document(self) -> list[Any]:
        return [cylinder.model_dump() for cylinder in self.disjuncts]

    def contains(self, point: SequencePoint) -> bool:
        return any(c.constraint.contains(point.at(c.coordinate)) for c in self.disjuncts)


class FIPProblem(BaseModel):
    """A finite family of elementary closed sets of X̂^ω."""

    model_config = ConfigDict(frozen=True)

    constraints: tuple[ElementaryClosedSet, ...] = ()
    ground: str = DEFAULT_GROUND

    @model_validator(mode="before")
    @classmethod
    def _from_list(cls, data: Any) -> Any:
        if isinstance(data, (list, tuple)):
            return {"constraints": data}
        return data

    def contains(self, point: SequencePoint) -> bool:
        return all(constraint.contains(point) for constraint in self.constraints)

    def coordinates(self) -> list[int]:
        return sorted({c.coordinate for e in self.constraints for c in e.disjuncts})


class Refutation(BaseModel):
    """Why one DNF box is empty: the disjunct picked per constraint and the failing coordinate."""

    choice: tuple[int, ...]
    coordinate: Optional[int] = None
    reason: str


class FIPCheckResult(BaseModel):
    satisfiable: bool
    choice: Optional[tuple[int, ...]] = None
    certificate: list[Refutation] = Field(default_factory=list)


S = TypeVar("S")
P = TypeVar("P")


class FactorAlgebra(Protocol[S, P]):
    """Closed sets of one factor space, a reducer to non-empty closed sets and a chooser."""

    def full(self) -> S: ...

    def intersect(self, a: S, b: S) -> S: ...

    def union(self, a: S, b: S) -> S: ...

    def is_empty(self, a: S) -> bool: ...

    def reduce(self, a: S) -> S: ...

    def choose(self, a: S) -> P: ...

    def singleton(self, x: P) -> S: ...

    def default(self) -> P: ...


class HatFactor:
    """X̂ with tilde as reducer and the least label (or ∞) as choice."""

    def full(self) -> HatClosedSet:
        return HatClosedSet.everything()

    def intersect(self, a: HatClosedSet, b: HatClosedSet) -> HatClosedSet:
        return a.intersect(b)

    def union(self, a: HatClosedSet, b: HatClosedSet) -> HatClosedSet:
        return a.union(b)

    def is_empty(self, a: HatClosedSet) -> bool:
        return a.is_empty()

    def reduce(self, a: HatClosedSet) -> HatClosedSet:
        return tilde(a)

    def choose(self, a: HatClosedSet) -> HatPoint:
        if a.contains_infinity:
            return INFINITY
        return HatPoint(label=choice_least(a.finite_part))

    def singleton(self, x: HatPoint) -> HatClosedSet:
        return HatClosedSet.point(x)

    def default(self) -> HatPoint:
        return INFINITY


class FiniteOrderFactor:
    """A finite complete linear order: every subset is closed, the first element is chosen."""

    def __init__(self, order: Sequence[Any]):
        self.order = tuple(as_label(label) for label in order)
        if not self.order:
            raise ValueError("a finite order needs at least one element")

    def full(self) -> frozenset[IndexLabel]:
        return frozenset(self.order)

    def intersect(self, a: frozenset, b: frozenset) -> frozenset:
        return a & b

    def union(self, a: frozenset, b: frozenset) -> frozenset:
        return a | b

    def is_empty(self, a: frozenset) -> bool:
        return not a

    def reduce(self, a: frozenset) -> frozenset:
        if not a:
            raise EmptySetError("cannot reduce an empty closed set")
        return a

    def choose(self, a: frozenset) -> IndexLabel:
        return next(label for label in self.order if label in a)

    def singleton(self, x: IndexLabel) -> frozenset:
        return frozenset([x])

    def default(self) -> IndexLabel:
        return self.order[0]


HAT_FACTOR = HatFactor()

Constraint = Sequence[tuple[int, Any]]


def _boxes(
    factor_for: Callable[[int], FactorAlgebra], constraints: Sequence[Constraint]
) -> tuple[list[tuple[tuple[int, ...], dict[int, Any]]], list[tuple[tuple[int, ...], int]]]:
    """Expand the intersection of unions into DNF boxes.

    Returns the non-empty boxes and the empty ones, each with its disjunct
    choice; an empty box comes with the coordinate whose conjunction is empty.
    """
    boxes, refuted = [], []
    for choice in itertools.product(*(range(len(c)) for c in constraints)):
        box: dict[int, Any] = {}
        empty_at = None
        for constraint, picked in zip(constraints, choice):
            coordinate, closed = constraint[picked]
            algebra = factor_for(coordinate)
            box[coordinate] = algebra.intersect(box.get(coordinate, algebra.full()), closed)
            if algebra.is_empty(box[coordinate]):
                empty_at = coordinate
                break
        if empty_at is None:
            boxes.append((choice, box))
        else:
            refuted.append((choice, empty_at))
    return boxes, refuted


def fip_check(problem: FIPProblem) -> FIPCheckResult:
    """Decide whether the constraints have a common point, with a certificate if not."""
    constraints = [[(c.coordinate, c.constraint) for c in e.disjuncts] for e in problem.constraints]
    empty = [index for index, c in enumerate(constraints) if not c]
    if empty:
        return FIPCheckResult(
            satisfiable=False,
            certificate=[
                Refutation(choice=(), reason=f"constraint {index} has no disjuncts")
                for index in empty
            ],
        )

    boxes, refuted = _boxes(lambda n: HAT_FACTOR, constraints)
    if boxes:
        return FIPCheckResult(satisfiable=True, choice=boxes[0][0])

    certificate = [
        Refutation(
            choice=choice,
            coordinate=coordinate,
            reason=f"coordinate {coordinate} conjunction is empty",
        )
        for choice, coordinate in refuted
    ]
    logger.debug(f"fip_check: all {len(refuted)} boxes are empty")
    return FIPCheckResult(satisfiable=False, certificate=certificate)


def product_cc_combinator(
    factor_for: Callable[[int], FactorAlgebra],
    constraints: Sequence[Constraint],
    span: int = 0,
) -> dict[int, Any]:
    """Pick a common point of finitely many elementary closed sets, coordinate by coordinate.

    At each constrained coordinate the projection of the remaining solution
    boxes is reduced and a point is chosen from it; the boxes are then cut
    down to that point. Unconstrained coordinates below `span` get their
    factor's default point; the rest are left out.
    """
    if any(not c for c in constraints):
        raise UnsatisfiableError("a constraint with no disjuncts is empty")
    boxes = [box for _, box in _boxes(factor_for, constraints)[0]]
    if not boxes:
        raise UnsatisfiableError("the constraints have no common point")

    values = {}
    for n in sorted({coordinate for c in constraints for coordinate, _ in c}):
        algebra = factor_for(n)
        projection = None
        for box in boxes:
            side = box.get(n, algebra.full())
            projection = side if projection is None else algebra.union(projection, side)
        x = algebra.choose(algebra.reduce(projection))
        values[n] = x
        single = algebra.singleton(x)
        narrowed = []
        for box in boxes:
            cut = algebra.intersect(box.get(n, algebra.full()), single)
            if not algebra.is_empty(cut):
                narrowed.append({**box, n: cut})
        boxes = narrowed
        logger.debug(f"coordinate {n}: chose {x}, {len(boxes)} boxes remain")
    for n in range(span):
        if n not in values:
            values[n] = factor_for(n).default()
    return dict(sorted(values.items()))


def fip_solve(problem: FIPProblem) -> SequencePoint:
    """A point in the intersection of all constraints; ∞ on unconstrained coordinates."""
    check = fip_check(problem)
    if not check.satisfiable:
        raise UnsatisfiableError("the constraints have empty intersection", check.certificate)
    constraints = [[(c.coordinate, c.constraint) for c in e.disjuncts] for e in problem.constraints]
    point = SequencePoint(values=product_cc_combinator(lambda n: HAT_FACTOR, constraints))
    for index, constraint in enumerate(problem.constraints):
        if not constraint.contains(point):
            raise WitnessError(f"solution misses constraint {index}")
    return point
