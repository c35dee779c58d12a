"""Space descriptors and decidable membership predicates."""

import logging
from enum import Enum
from fractions import Fraction
from typing import Annotated, Any, Literal, Mapping, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    TypeAdapter,
    ValidationError,
    field_validator,
    model_serializer,
    model_validator,
)

from .constants import DEFAULT_GROUND, DEFAULT_PRECISION_BITS, PATH_SEPARATOR
from .core import (
    ONE,
    ZERO,
    DyadicInterval,
    DyadicRational,
    FiniteSupportVector,
    HatPoint,
    IndexLabel,
    INFINITY,
    as_label,
    dump_labels,
    l1_mass,
    root_interval,
)
from .errors import GroundMismatchError, ParseError

logger = logging.getLogger(__name__)


class _Space(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class HatSpace(_Space):
    """X̂: the one-point compactification of a discrete ground set."""

    kind: Literal["hat"] = "hat"
    ground: str = DEFAULT_GROUND


class SigmaSpace(_Space):
    """σₙ(X): finite subsets of X with at most n elements."""

    kind: Literal["sigma"] = "sigma"
    n: int = Field(ge=1)
    ground: str = DEFAULT_GROUND


class CubeSpace(_Space):
    """[0,1]^D over an explicitly enumerated index list D."""

    kind: Literal["cube"] = "cube"
    coords: tuple[IndexLabel, ...]
    ground: str = "D"

    @field_validator("coords")
    @classmethod
    def _check_enumeration(cls, value: tuple[IndexLabel, ...]) -> tuple[IndexLabel, ...]:
        if not value:
            raise ValueError("cube enumeration must not be empty")
        if len(set(value)) != len(value):
            raise ValueError("cube enumeration lists a coordinate twice")
        return value


class B1PlusSpace(_Space):
    kind: Literal["b1plus"] = "b1plus"
    ground: str = DEFAULT_GROUND


class B1Space(_Space):
    kind: Literal["b1"] = "b1"
    ground: str = DEFAULT_GROUND


class BpSpace(_Space):
    """B_p(I) for a rational p ≥ 1, given as text such as "2" or "3/2"."""

    kind: Literal["bp"] = "bp"
    p: str
    ground: str = DEFAULT_GROUND

    @field_validator("p", mode="before")
    @classmethod
    def _check_exponent(cls, value: Any) -> str:
        try:
            exponent = Fraction(str(value))
        except (ValueError, ZeroDivisionError) as e:
            raise ValueError(f"p must be a rational number, got {value!r}") from e
        if exponent < 1:
            raise ValueError(f"p must be at least 1, got {exponent}")
        return str(exponent)

    @property
    def exponent(self) -> Fraction:
        return Fraction(self.p)


class ProductSpace(_Space):
    """Finite product of spaces with pairwise disjoint grounds."""

    kind: Literal["product"] = "product"
    factors: tuple["SpaceDescriptor", ...]

    @model_validator(mode="after")
    def _check_grounds(self) -> "ProductSpace":
        if not self.factors:
            raise ValueError("a product needs at least one factor")
        grounds = [ground for factor in self.factors for ground in leaf_grounds(factor)]
        if len(set(grounds)) != len(grounds):
            raise ValueError(f"product factors must have disjoint grounds, got {grounds}")
        return self


SpaceDescriptor = Annotated[
    Union[HatSpace, SigmaSpace, CubeSpace, B1PlusSpace, B1Space, BpSpace, ProductSpace],
    Field(discriminator="kind"),
]

ProductSpace.model_rebuild()

_SPACE_ADAPTER = TypeAdapter(SpaceDescriptor)


def parse_space(data: Any) -> SpaceDescriptor:
    if isinstance(data, BaseModel) and hasattr(data, "kind"):
        return data
    return _SPACE_ADAPTER.validate_python(data)


def leaf_grounds(space: SpaceDescriptor) -> list[str]:
    if isinstance(space, ProductSpace):
        return [ground for factor in space.factors for ground in leaf_grounds(factor)]
    return [space.ground]


class MembershipStatus(str, Enum):
    INSIDE = "inside"
    OUTSIDE = "outside"
    UNDECIDED = "undecided"


class MembershipReport(BaseModel):
    """Outcome of a membership test; `witness_constraint` names the first violated constraint."""

    model_config = ConfigDict(frozen=True)

    member: bool
    witness_constraint: str = ""
    status: MembershipStatus = MembershipStatus.INSIDE

    @classmethod
    def inside(cls) -> "MembershipReport":
        return cls(member=True)

    @classmethod
    def outside(cls, constraint: str) -> "MembershipReport":
        return cls(member=False, witness_constraint=constraint, status=MembershipStatus.OUTSIDE)


def _require_vector(space: SpaceDescriptor, point: Any) -> FiniteSupportVector:
    if not isinstance(point, FiniteSupportVector):
        raise GroundMismatchError(f"{space.kind} expects a finite-support vector, got {point!r}")
    return point


def member(
    space: SpaceDescriptor, point: Any, precision: int = DEFAULT_PRECISION_BITS
) -> MembershipReport:
    """Decide whether `point` lies in `space`.

    Exact for every space except B_p with fractional p, where the decision is
    made at `precision` bits and may come back undecided.
    """
    if isinstance(space, HatSpace):
        if not isinstance(point, HatPoint):
            raise GroundMismatchError(f"hat expects a point of X̂, got {point!r}")
        return MembershipReport.inside()

    if isinstance(space, SigmaSpace):
        if not isinstance(point, (set, frozenset)):
            raise GroundMismatchError(f"sigma expects a finite label set, got {point!r}")
        if len(point) > space.n:
            return MembershipReport.outside(f"support size {len(point)} > {space.n}")
        return MembershipReport.inside()

    if isinstance(space, CubeSpace):
        v = _require_vector(space, point)
        allowed = set(space.coords)
        stray = [label for label in v.support() if label not in allowed]
        if stray:
            raise GroundMismatchError(
                f"labels {dump_labels(stray)} are not in the cube enumeration"
            )
        for label, value in v.items():
            if value < ZERO or value > ONE:
                return MembershipReport.outside(f"coordinate {label} = {value} outside [0, 1]")
        return MembershipReport.inside()

    if isinstance(space, B1PlusSpace):
        v = _require_vector(space, point)
        for label, value in v.items():
            if value < ZERO:
                return MembershipReport.outside(f"coordinate {label} = {value} < 0")
        mass = l1_mass(v)
        if mass > ONE:
            return MembershipReport.outside(f"mass {mass.to_fraction()} > 1")
        return MembershipReport.inside()

    if isinstance(space, B1Space):
        mass = l1_mass(_require_vector(space, point))
        if mass > ONE:
            return MembershipReport.outside(f"mass {mass.to_fraction()} > 1")
        return MembershipReport.inside()

    if isinstance(space, BpSpace):
        return _bp_member(space, _require_vector(space, point), precision)

    if isinstance(space, ProductSpace):
        if not isinstance(point, tuple) or len(point) != len(space.factors):
            raise GroundMismatchError(
                f"product of {len(space.factors)} factors expects a tuple of that length"
            )
        for index, (factor, part) in enumerate(zip(space.factors, point)):
            report = member(factor, part, precision)
            if report.status != MembershipStatus.INSIDE:
                return report.model_copy(
                    update={"witness_constraint": f"factor {index}: {report.witness_constraint}"}
                )
        return MembershipReport.inside()

    raise GroundMismatchError(f"unknown space {space!r}")


def _bp_member(space: BpSpace, v: FiniteSupportVector, precision: int) -> MembershipReport:
    exponent = space.exponent
    if exponent.denominator == 1:
        total = np_power(v, exponent.numerator)
        if total > ONE:
            return MembershipReport.outside(f"N_p^p {total.to_fraction()} > 1")
        return MembershipReport.inside()

    total = DyadicInterval.exact(ZERO)
    for _, value in v.items():
        total = total + root_interval(abs(value), exponent, precision)
    if total.hi <= ONE:
        return MembershipReport.inside()
    if total.lo > ONE:
        return MembershipReport.outside(f"N_p^p in [{total.lo}, {total.hi}] > 1")
    logger.debug(f"B_p membership undecided at {precision} bits: [{total.lo}, {total.hi}]")
    return MembershipReport(
        member=False,
        witness_constraint=f"N_p^p in [{total.lo}, {total.hi}] undecided at {precision} bits",
        status=MembershipStatus.UNDECIDED,
    )


def np_power(point: FiniteSupportVector, p: int) -> DyadicRational:
    """Σᵢ |xᵢ|^p, exactly (the p-th power of the N_p norm)."""
    total = ZERO
    for _, value in point.items():
        total = total + abs(value) ** p
    return total


def np_power_interval(intervals: Mapping[Any, DyadicInterval], p: int) -> DyadicInterval:
    """Enclosure of Σᵢ |xᵢ|^p over an interval vector."""
    total = DyadicInterval.exact(ZERO)
    for interval in intervals.values():
        total = total + interval.abs_pow(p)
    return total


class Coordinate(BaseModel):
    """A coordinate of a possibly nested product space: factor path plus label."""

    model_config = ConfigDict(frozen=True)

    path: tuple[int, ...] = ()
    label: IndexLabel

    @model_validator(mode="before")
    @classmethod
    def _from_text(cls, data: Any) -> Any:
        if isinstance(data, IndexLabel):
            return {"label": data}
        if isinstance(data, str):
            *path, label = data.split(PATH_SEPARATOR)
            return {"path": tuple(int(step) for step in path), "label": label}
        return data

    @model_serializer
    def _to_text(self) -> str:
        return str(self)

    def __str__(self) -> str:
        return PATH_SEPARATOR.join([str(step) for step in self.path] + [str(self.label)])

    def sort_key(self) -> tuple:
        return (self.path, self.label.sort_key())

    def __lt__(self, other: "Coordinate") -> bool:
        return self.sort_key() < other.sort_key()

    def under(self, index: int) -> "Coordinate":
        return Coordinate(path=(index,) + self.path, label=self.label)


def as_coordinate(value: Any) -> Coordinate:
    if isinstance(value, Coordinate):
        return value
    try:
        return Coordinate.model_validate(value)
    except ValidationError as e:
        raise ParseError(f"invalid coordinate {value!r}: {e.errors()[0]['msg']}") from e


def coordinate_values(space: SpaceDescriptor, point: Any) -> dict[Coordinate, DyadicRational]:
    """Nonzero coordinates of a point; X̂ and σ points count as {0,1}-vectors."""
    if isinstance(space, HatSpace):
        if point.is_infinity:
            return {}
        return {Coordinate(label=point.label): ONE}
    if isinstance(space, SigmaSpace):
        return {Coordinate(label=label): ONE for label in point}
    if isinstance(space, ProductSpace):
        values = {}
        for index, (factor, part) in enumerate(zip(space.factors, point)):
            for coordinate, value in coordinate_values(factor, part).items():
                values[coordinate.under(index)] = value
        return values
    return {Coordinate(label=label): value for label, value in point.items()}


def point_from_coordinates(space: SpaceDescriptor, values: Mapping[Coordinate, Any]) -> Any:
    """Inverse of `coordinate_values`: rebuild a point from its nonzero coordinates."""
    if isinstance(space, ProductSpace):
        return tuple(
            point_from_coordinates(
                factor,
                {
                    Coordinate(path=c.path[1:], label=c.label): value
                    for c, value in values.items()
                    if c.path and c.path[0] == index
                },
            )
            for index, factor in enumerate(space.factors)
        )
    present = sorted(c.label for c, value in values.items() if value)
    if isinstance(space, HatSpace):
        if len(present) > 1:
            raise GroundMismatchError(f"a point of X̂ has at most one label, got {present}")
        return HatPoint(label=present[0]) if present else INFINITY
    if isinstance(space, SigmaSpace):
        return frozenset(present)
    return FiniteSupportVector.model_validate({c.label: value for c, value in values.items()})


def parse_point(space: SpaceDescriptor, data: Any) -> Any:
    """Read a concrete point of `space` from its document form."""
    try:
        if isinstance(space, HatSpace):
            return data if isinstance(data, HatPoint) else HatPoint.model_validate(data)
        if isinstance(space, SigmaSpace):
            if isinstance(data, str) or not isinstance(data, (list, tuple, set, frozenset)):
                raise ParseError(f"sigma point must be a list of labels, got {data!r}")
            return frozenset(as_label(label) for label in data)
        if isinstance(space, ProductSpace):
            if not isinstance(data, (list, tuple)) or len(data) != len(space.factors):
                raise ParseError(f"product point must be a list of {len(space.factors)} parts")
            return tuple(parse_point(factor, part) for factor, part in zip(space.factors, data))
        if isinstance(data, FiniteSupportVector):
            return data
        return FiniteSupportVector.model_validate(data)
    except ValidationError as e:
        raise ParseError(f"invalid {space.kind} point {data!r}: {e.errors()[0]['msg']}") from e


def dump_point(space: SpaceDescriptor, point: Any) -> Any:
    """Document form of a point; sets are dumped sorted."""
    if isinstance(space, HatSpace):
        return str(point)
    if isinstance(space, SigmaSpace):
        return dump_labels(point)
    if isinstance(space, ProductSpace):
        return [dump_point(factor, part) for factor, part in zip(space.factors, point)]
    return point.model_dump()
