"""Finitely presented sequences (FPS) and black-box streams."""

import logging
from dataclasses import dataclass
from functools import partial
from typing import Annotated, Any, Callable, Literal, Union

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    field_serializer,
    field_validator,
    model_validator,
)

from .constants import DEFAULT_PRECISION_BITS
from .core import (
    ONE,
    ZERO,
    DyadicRational,
    FiniteSupportVector,
    HatPoint,
    IndexLabel,
    INFINITY,
    dump_labels,
    fresh,
    named,
    vector,
)
from .errors import (
    GroundMismatchError,
    IncompatibleModulusError,
    InvalidSelectionError,
    SpaceViolationError,
)
from .spaces import (
    Coordinate,
    CubeSpace,
    HatSpace,
    MembershipStatus,
    ProductSpace,
    SigmaSpace,
    SpaceDescriptor,
    dump_point,
    member,
    parse_space,
    parse_point,
)

logger = logging.getLogger(__name__)


class Const(BaseModel):
    """k ↦ q."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["const"] = "const"
    q: DyadicRational

    @field_validator("q")
    @classmethod
    def _check_range(cls, value: DyadicRational) -> DyadicRational:
        if abs(value) > ONE:
            raise ValueError(f"|q| must be at most 1, got {value}")
        return value

    def at(self, k: int) -> DyadicRational:
        return self.q

    def limit(self) -> DyadicRational:
        return self.q

    def shifted(self, first: int, step: int) -> "Const":
        return self


class Geom(BaseModel):
    """k ↦ q·r^k with 0 ≤ r < 1 (and 0^0 = 1)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["geom"] = "geom"
    q: DyadicRational
    r: DyadicRational

    @model_validator(mode="after")
    def _check_range(self) -> "Geom":
        if abs(self.q) > ONE:
            raise ValueError(f"|q| must be at most 1, got {self.q}")
        if self.r < ZERO or self.r >= ONE:
            raise ValueError(f"r must satisfy 0 <= r < 1, got {self.r}")
        return self

    def at(self, k: int) -> DyadicRational:
        return self.q * self.r**k

    def limit(self) -> DyadicRational:
        return ZERO

    def shifted(self, first: int, step: int) -> "Geom":
        return Geom(q=self.q * self.r**first, r=self.r**step)

    def settle(self, threshold: DyadicRational) -> int:
        """Least k with |q|·r^k < threshold."""
        return geometric_settle(abs(self.q), self.r, threshold)


def geometric_settle(q: DyadicRational, r: DyadicRational, threshold: DyadicRational) -> int:
    """Least k ≥ 0 with q·r^k < threshold, for q ≥ 0, 0 ≤ r < 1 and threshold > 0.

    Doubles an upper bound, then bisects, so only O(log k) powers are taken.
    """
    if threshold <= ZERO:
        raise ValueError(f"threshold must be positive, got {threshold}")
    if q < threshold:
        return 0
    if not r:
        return 1
    low, high = 0, 1
    while q * r**high >= threshold:
        low, high = high, high * 2
    while high - low > 1:
        middle = (low + high) // 2
        if q * r**middle >= threshold:
            low = middle
        else:
            high = middle
    return high


ValueExpr = Annotated[Union[Const, Geom], Field(discriminator="kind")]


def _value_expr_data(value: Any) -> Any:
    """A bare scalar stands for Const(scalar)."""
    if isinstance(value, (str, int, DyadicRational)) and not isinstance(value, bool):
        return {"kind": "const", "q": value}
    return value


class FreshFamily(BaseModel):
    """The injective label family k ↦ tag#(offset + stride·k)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    tag: str
    offset: int = Field(default=0, ge=0)
    stride: int = Field(default=1, ge=1)

    @model_validator(mode="before")
    @classmethod
    def _from_text(cls, data: Any) -> Any:
        if isinstance(data, str):
            return {"tag": data}
        return data

    @field_validator("tag")
    @classmethod
    def _check_tag(cls, value: str) -> str:
        named(value)
        return value

    def label(self, k: int) -> IndexLabel:
        return fresh(self.tag, self.offset + self.stride * k)

    def owns(self, label: IndexLabel) -> bool:
        """Whether `label` is an instance of this family."""
        if label.rank is None or label.name != self.tag:
            return False
        return label.rank >= self.offset and (label.rank - self.offset) % self.stride == 0

    def index_of(self, label: IndexLabel) -> int:
        return (label.rank - self.offset) // self.stride

    def shifted(self, first: int, step: int) -> "FreshFamily":
        return FreshFamily(
            tag=self.tag, offset=self.offset + self.stride * first, stride=self.stride * step
        )


class FreshCoordinate(FreshFamily):
    """A fresh family carrying a constant nonzero value."""

    value: DyadicRational

    @model_validator(mode="before")
    @classmethod
    def _from_pair(cls, data: Any) -> Any:
        if isinstance(data, (list, tuple)) and len(data) == 2:
            return {"tag": data[0], "value": data[1]}
        return data

    @field_validator("value")
    @classmethod
    def _check_value(cls, value: DyadicRational) -> DyadicRational:
        if not value:
            raise ValueError("fresh coordinates must carry a nonzero value")
        if abs(value) > ONE:
            raise ValueError(f"fresh value must lie in [-1, 1], got {value}")
        return value

    def shifted(self, first: int, step: int) -> "FreshCoordinate":
        family = super().shifted(first, step)
        return FreshCoordinate(
            tag=family.tag, offset=family.offset, stride=family.stride, value=self.value
        )


def _check_fresh_tags(fixed: Any, families: tuple[FreshFamily, ...]) -> None:
    tags = [family.tag for family in families]
    if len(set(tags)) != len(tags):
        raise ValueError(f"fresh family tags must be distinct, got {tags}")
    for label in fixed:
        if label.is_fresh and label.name in tags:
            raise ValueError(f"fixed label {label} collides with fresh family {label.name}")


class SetTermCase(BaseModel):
    """F_k = fixed ∪ {fresh instances at k}."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["set"] = "set"
    fixed: frozenset[IndexLabel] = frozenset()
    fresh_families: tuple[FreshFamily, ...] = ()

    @model_validator(mode="after")
    def _check_families(self) -> "SetTermCase":
        _check_fresh_tags(self.fixed, self.fresh_families)
        return self

    @field_serializer("fixed")
    def _dump_fixed(self, fixed: frozenset[IndexLabel]) -> list[str]:
        return dump_labels(fixed)

    def at(self, k: int) -> frozenset[IndexLabel]:
        return self.fixed | {family.label(k) for family in self.fresh_families}

    def shifted(self, first: int, step: int) -> "SetTermCase":
        return SetTermCase(
            fixed=self.fixed,
            fresh_families=tuple(family.shifted(first, step) for family in self.fresh_families),
        )


class VectorTermCase(BaseModel):
    """y_k: fixed coordinates follow value expressions, fresh ones carry constants."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["vector"] = "vector"
    fixed_coords: dict[IndexLabel, ValueExpr] = Field(default_factory=dict)
    fresh_coords: tuple[FreshCoordinate, ...] = ()

    @field_validator("fixed_coords", mode="before")
    @classmethod
    def _read_fixed(cls, value: Any) -> Any:
        if isinstance(value, dict):
            return {key: _value_expr_data(expr) for key, expr in value.items()}
        return value

    @model_validator(mode="after")
    def _check_families(self) -> "VectorTermCase":
        _check_fresh_tags(self.fixed_coords.keys(), self.fresh_coords)
        return self

    @field_serializer("fixed_coords")
    def _dump_fixed(self, fixed: dict[IndexLabel, Any]) -> dict[str, Any]:
        return {str(label): fixed[label].model_dump() for label in sorted(fixed)}

    def __hash__(self) -> int:
        return hash((frozenset(self.fixed_coords.items()), self.fresh_coords))

    def at(self, k: int) -> FiniteSupportVector:
        entries = {label: expr.at(k) for label, expr in self.fixed_coords.items()}
        for coordinate in self.fresh_coords:
            entries[coordinate.label(k)] = coordinate.value
        return vector(entries)

    def shifted(self, first: int, step: int) -> "VectorTermCase":
        return VectorTermCase(
            fixed_coords={
                label: expr.shifted(first, step) for label, expr in self.fixed_coords.items()
            },
            fresh_coords=tuple(item.shifted(first, step) for item in self.fresh_coords),
        )


class ProductTermCase(BaseModel):
    """One term case per factor of a product space."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["product"] = "product"
    parts: tuple["TermCase", ...]

    def shifted(self, first: int, step: int) -> "ProductTermCase":
        return ProductTermCase(parts=tuple(part.shifted(first, step) for part in self.parts))


TermCase = Annotated[
    Union[SetTermCase, VectorTermCase, ProductTermCase], Field(discriminator="kind")
]

ProductTermCase.model_rebuild()


def _tag_case(space: SpaceDescriptor, case: Any) -> Any:
    """Fill in the case kind implied by the space when a document omits it."""
    if not isinstance(case, dict):
        return case
    case = dict(case)
    if isinstance(space, ProductSpace):
        case.setdefault("kind", "product")
        parts = case.get("parts")
        if isinstance(parts, (list, tuple)) and len(parts) == len(space.factors):
            case["parts"] = [_tag_case(f, part) for f, part in zip(space.factors, parts)]
    elif isinstance(space, (HatSpace, SigmaSpace)):
        case.setdefault("kind", "set")
    else:
        case.setdefault("kind", "vector")
    return case


def _check_case_fits(space: SpaceDescriptor, case: Any) -> None:
    if isinstance(space, ProductSpace):
        if not isinstance(case, ProductTermCase) or len(case.parts) != len(space.factors):
            raise ValueError(f"product of {len(space.factors)} factors needs a product case")
        for factor, part in zip(space.factors, case.parts):
            _check_case_fits(factor, part)
        return
    if isinstance(space, (HatSpace, SigmaSpace)):
        if not isinstance(case, SetTermCase):
            raise ValueError(f"{space.kind} streams need set cases, got {case.kind}")
        if isinstance(space, HatSpace) and len(case.fixed) + len(case.fresh_families) > 1:
            raise ValueError("a hat case denotes a single point or ∞")
        return
    if not isinstance(case, VectorTermCase):
        raise ValueError(f"{space.kind} streams need vector cases, got {case.kind}")
    if isinstance(space, CubeSpace):
        if case.fresh_coords:
            raise ValueError("cube streams cannot use fresh coordinates")
        stray = set(case.fixed_coords) - set(space.coords)
        if stray:
            raise ValueError(f"labels {dump_labels(stray)} are not in the cube enumeration")


class FPS(BaseModel):
    """A finitely presented sequence: preamble, then case[k mod modulus] at k."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    modulus: int = Field(ge=1)
    preamble: tuple[Any, ...] = ()
    cases: tuple[TermCase, ...]
    space: SpaceDescriptor

    @model_validator(mode="before")
    @classmethod
    def _read_points(cls, data: Any) -> Any:
        if not isinstance(data, dict) or "space" not in data:
            return data
        data = dict(data)
        space = parse_space(data["space"])
        data["space"] = space
        if isinstance(data.get("cases"), (list, tuple)):
            data["cases"] = [_tag_case(space, case) for case in data["cases"]]
        data["preamble"] = tuple(parse_point(space, point) for point in data.get("preamble", ()))
        return data

    @model_validator(mode="after")
    def _check_shape(self) -> "FPS":
        if len(self.cases) != self.modulus:
            raise ValueError(
                f"modulus {self.modulus} needs {self.modulus} cases, got {len(self.cases)}"
            )
        for case in self.cases:
            _check_case_fits(self.space, case)
        return self

    @field_serializer("preamble")
    def _dump_preamble(self, preamble: tuple[Any, ...]) -> list[Any]:
        return [dump_point(self.space, point) for point in preamble]


class Progression(BaseModel):
    """The indices k ≥ start with k ≡ residue (mod modulus)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    start: int = Field(default=0, ge=0)
    residue: int = Field(ge=0)
    modulus: int = Field(ge=1)

    @model_validator(mode="after")
    def _check_residue(self) -> "Progression":
        if self.residue >= self.modulus:
            raise ValueError(f"residue {self.residue} must be below modulus {self.modulus}")
        return self

    def first(self) -> int:
        return self.start + (self.residue - self.start) % self.modulus

    def at(self, j: int) -> int:
        return self.first() + j * self.modulus


def class_start(s: FPS, residue: int) -> int:
    """First index past the preamble in residue class `residue`."""
    return Progression(start=len(s.preamble), residue=residue, modulus=s.modulus).first()


def _instantiate(space: SpaceDescriptor, case: Any, k: int) -> Any:
    if isinstance(case, ProductTermCase):
        return tuple(_instantiate(f, part, k) for f, part in zip(space.factors, case.parts))
    if isinstance(case, SetTermCase):
        labels = case.at(k)
        if isinstance(space, HatSpace):
            return INFINITY if not labels else HatPoint(label=next(iter(labels)))
        return labels
    return case.at(k)


def fps_eval(s: FPS, k: int) -> Any:
    """Term k of the sequence."""
    if k < len(s.preamble):
        return s.preamble[k]
    return _instantiate(s.space, s.cases[k % s.modulus], k)


def fps_restrict(s: FPS, progression: Progression) -> FPS:
    """The subsequence j ↦ s(progression.at(j)), again as an FPS of modulus 1."""
    if progression.modulus % s.modulus:
        raise IncompatibleModulusError(
            f"modulus {progression.modulus} is not a multiple of {s.modulus}"
        )
    if progression.start < len(s.preamble):
        raise InvalidSelectionError(
            f"selection starts at {progression.start}, inside a preamble of {len(s.preamble)}"
        )
    first = progression.first()
    case = s.cases[first % s.modulus].shifted(first, progression.modulus)
    return FPS(modulus=1, preamble=(), cases=(case,), space=s.space)


def fps_project(s: FPS, index: int) -> FPS:
    """Factor `index` of a stream over a product space."""
    if not isinstance(s.space, ProductSpace):
        raise GroundMismatchError(f"cannot project a {s.space.kind} stream")
    return FPS(
        modulus=s.modulus,
        preamble=tuple(point[index] for point in s.preamble),
        cases=tuple(case.parts[index] for case in s.cases),
        space=s.space.factors[index],
    )


class ValidationReport(BaseModel):
    ok: bool
    violations: list[str] = Field(default_factory=list)


def fps_validate(s: FPS, precision: int = DEFAULT_PRECISION_BITS) -> ValidationReport:
    """Check every term of `s` against its space.

    Values are non-increasing in magnitude along each class and fresh parts
    never meet the fixed ones, so the first index of each class dominates
    the rest of it.
    """
    violations = []
    for k, point in enumerate(s.preamble):
        report = member(s.space, point, precision)
        if report.status != MembershipStatus.INSIDE:
            violations.append(f"preamble[{k}]: {report.witness_constraint}")
    for residue in range(s.modulus):
        k = class_start(s, residue)
        report = member(s.space, fps_eval(s, k), precision)
        if report.status != MembershipStatus.INSIDE:
            violations.append(f"class {residue} (k={k}): {report.witness_constraint}")
    if violations:
        logger.debug(f"stream violates its space: {violations}")
    return ValidationReport(ok=not violations, violations=violations)


def require_valid(s: FPS) -> FPS:
    report = fps_validate(s)
    if not report.ok:
        raise SpaceViolationError(report.violations[0])
    return s


def _case_labels(space: SpaceDescriptor, case: Any, path: tuple[int, ...]) -> set[Coordinate]:
    if isinstance(case, ProductTermCase):
        found = set()
        for index, (factor, part) in enumerate(zip(space.factors, case.parts)):
            found |= _case_labels(factor, part, path + (index,))
        return found
    labels = case.fixed if isinstance(case, SetTermCase) else case.fixed_coords.keys()
    return {Coordinate(path=path, label=label) for label in labels}


def _point_labels(space: SpaceDescriptor, point: Any, path: tuple[int, ...]) -> set[Coordinate]:
    if isinstance(space, ProductSpace):
        found = set()
        for index, (factor, part) in enumerate(zip(space.factors, point)):
            found |= _point_labels(factor, part, path + (index,))
        return found
    if isinstance(space, HatSpace):
        labels = [] if point.is_infinity else [point.label]
    elif isinstance(space, SigmaSpace):
        labels = point
    else:
        labels = point.support()
    return {Coordinate(path=path, label=label) for label in labels}


def mentioned_labels(s: FPS) -> frozenset[Coordinate]:
    """Coordinates named explicitly by the preamble or the fixed parts of the cases."""
    found = set()
    for point in s.preamble:
        found |= _point_labels(s.space, point, ())
    for case in s.cases:
        found |= _case_labels(s.space, case, ())
    return frozenset(found)


def _case_families(case: Any, path: tuple[int, ...]) -> list[tuple[tuple[int, ...], FreshFamily]]:
    if isinstance(case, ProductTermCase):
        found = []
        for index, part in enumerate(case.parts):
            found.extend(_case_families(part, path + (index,)))
        return found
    families = case.fresh_families if isinstance(case, SetTermCase) else case.fresh_coords
    return [(path, FreshFamily(tag=f.tag, offset=f.offset, stride=f.stride)) for f in families]


def fresh_tags(s: FPS) -> list[tuple[tuple[int, ...], FreshFamily]]:
    """Every fresh family of every case, with its factor path, without repeats."""
    found = {}
    for case in s.cases:
        for path, family in _case_families(case, ()):
            found[(path, family.tag, family.offset, family.stride)] = (path, family)
    return [found[key] for key in sorted(found)]


@dataclass(frozen=True)
class BlackBoxStream:
    """A pure, re-queryable k ↦ point function with its declared space."""

    evaluate: Callable[[int], Any]
    space: Any

    def __call__(self, k: int) -> Any:
        return self.evaluate(k)

    @classmethod
    def from_fps(cls, s: FPS) -> "BlackBoxStream":
        return cls(evaluate=partial(fps_eval, s), space=s.space)
