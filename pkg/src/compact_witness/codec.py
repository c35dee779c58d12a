"""Dyadic representation: binary expansion, the level encoding of B⁺₁ and the h_p maps."""

import logging
from fractions import Fraction
from typing import Any, Mapping, Optional, Sequence, Union

from pydantic import BaseModel, ConfigDict, Field, model_serializer, model_validator

from .constants import DEFAULT_GROUND, DEFAULT_PRECISION_BITS
from .core import (
    ONE,
    ZERO,
    DyadicInterval,
    DyadicRational,
    FiniteSupportVector,
    IndexLabel,
    as_label,
    dump_labels,
    dyadic,
    root_interval,
    two_to_minus,
    vector,
)
from .errors import InvalidExponentError, NotInBallError, OutOfRangeError
from .spaces import B1PlusSpace, B1Space, SigmaSpace, member
from .streams import (
    FPS,
    Const,
    FreshCoordinate,
    FreshFamily,
    Geom,
    SetTermCase,
    VectorTermCase,
    class_start,
)

logger = logging.getLogger(__name__)


def phi_partial(bits: Sequence[int]) -> tuple[DyadicRational, DyadicRational]:
    """Partial sum Σ bitₙ/2^(n+1) and the tail bound 2^-len(bits)."""
    numerator = 0
    for digit in bits:
        numerator = (numerator << 1) | (1 if digit else 0)
    return dyadic(numerator, len(bits)), two_to_minus(len(bits))


class BitExpansion(BaseModel):
    """Positions of the one bits of a terminating expansion, or the all-ones marker for 1."""

    model_config = ConfigDict(frozen=True)

    positions: tuple[int, ...] = ()
    all_ones: bool = False

    def bits(self, length: int) -> list[int]:
        if self.all_ones:
            return [1] * length
        ones = set(self.positions)
        return [1 if n in ones else 0 for n in range(length)]


def phi_section(q: DyadicRational) -> BitExpansion:
    """The terminating binary expansion of q in [0, 1]; q = 1 gets the all-ones marker."""
    if q < ZERO or q > ONE:
        raise OutOfRangeError(f"{q} is outside [0, 1]")
    if q == ONE:
        return BitExpansion(all_ones=True)
    k = q.exponent
    return BitExpansion(
        positions=tuple(n for n in range(k) if (q.numerator >> (k - 1 - n)) & 1)
    )


def bit(q: DyadicRational, n: int) -> int:
    """Bit n of the chosen expansion of q in [0, 1]."""
    if q == ONE:
        return 1
    k = q.exponent
    if n >= k:
        return 0
    return (q.numerator >> (k - 1 - n)) & 1


class BitLevelFamily(BaseModel):
    """The level sets Zₙ of an encoded point.

    Only nonempty levels are stored. Coordinates equal to 1 sit in `ones`:
    their bit column is all ones, so they belong to every level.
    """

    model_config = ConfigDict(frozen=True)

    levels: dict[int, frozenset[IndexLabel]] = Field(default_factory=dict)
    ones: frozenset[IndexLabel] = frozenset()
    source_ground: str = DEFAULT_GROUND

    @model_validator(mode="before")
    @classmethod
    def _read_levels(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        raw = data.get("levels", {})
        pairs = raw.items() if isinstance(raw, Mapping) else raw
        levels = {}
        for n, labels in pairs:
            n = int(n)
            if n < 0:
                raise ValueError(f"level index must be non-negative, got {n}")
            found = frozenset(as_label(label) for label in labels)
            if found:
                levels[n] = levels.get(n, frozenset()) | found
        data["levels"] = dict(sorted(levels.items()))
        data["ones"] = frozenset(as_label(label) for label in data.get("ones", ()))
        return data

    @model_serializer
    def _to_document(self) -> dict[str, Any]:
        return {
            "levels": [[n, dump_labels(self.levels[n])] for n in sorted(self.levels)],
            "ones": dump_labels(self.ones),
            "source_ground": self.source_ground,
        }

    def __hash__(self) -> int:
        return hash((frozenset(self.levels.items()), self.ones, self.source_ground))

    def level(self, n: int) -> frozenset[IndexLabel]:
        """Zₙ, including the all-ones coordinates."""
        return self.levels.get(n, frozenset()) | self.ones

    @property
    def max_level(self) -> int:
        return max(self.levels, default=-1)


def encode_b1plus(v: FiniteSupportVector, ground: str = DEFAULT_GROUND) -> BitLevelFamily:
    """Level n holds the coordinates whose n-th bit is set."""
    report = member(B1PlusSpace(ground=ground), v)
    if not report.member:
        raise NotInBallError(f"cannot encode a point outside B1+: {report.witness_constraint}")
    levels: dict[int, set[IndexLabel]] = {}
    ones = set()
    for label, value in v.items():
        expansion = phi_section(value)
        if expansion.all_ones:
            ones.add(label)
            continue
        for n in expansion.positions:
            levels.setdefault(n, set()).add(label)
    return BitLevelFamily(
        levels={n: frozenset(labels) for n, labels in levels.items()},
        ones=frozenset(ones),
        source_ground=ground,
    )


class DecodedVector(BaseModel):
    vector: FiniteSupportVector
    error_bound: DyadicRational
    exact: bool


def decode(family: BitLevelFamily, up_to: Optional[int] = None) -> DecodedVector:
    """g applied to a level family, truncated at `up_to` levels when given.

    Without `up_to` the whole (finite) family is summed and the all-ones
    coordinates decode to 1.
    """
    totals: dict[IndexLabel, DyadicRational] = {}
    for n, labels in family.levels.items():
        if up_to is not None and n >= up_to:
            continue
        for label in labels:
            totals[label] = totals.get(label, ZERO) + two_to_minus(n + 1)
    if up_to is None:
        top, bound, exact = ONE, ZERO, True
    else:
        top, bound = ONE - two_to_minus(up_to), two_to_minus(up_to)
        exact = not family.ones and family.max_level < up_to
    for label in family.ones:
        totals[label] = totals.get(label, ZERO) + top
    return DecodedVector(vector=vector(totals), error_bound=bound, exact=exact)


def level_mass(family: BitLevelFamily) -> DyadicRational:
    """Σₙ εₙ·|level n|; each all-ones coordinate contributes Σₙ εₙ = 1."""
    total = dyadic(len(family.ones))
    for n, labels in family.levels.items():
        total = total + dyadic(len(labels - family.ones), n + 1)
    return total


class SignedSplit(BaseModel):
    plus: FiniteSupportVector
    minus: FiniteSupportVector


def split_signed(v: FiniteSupportVector) -> SignedSplit:
    """Positive and negative parts, both in B⁺₁."""
    report = member(B1Space(), v)
    if not report.member:
        raise NotInBallError(f"cannot split a point outside B1: {report.witness_constraint}")
    plus = {label: value for label, value in v.items() if value > ZERO}
    minus = {label: -value for label, value in v.items() if value < ZERO}
    return SignedSplit(plus=vector(plus), minus=vector(minus))


class IntervalVector(BaseModel):
    """Finitely many coordinates, each enclosed in a dyadic interval."""

    model_config = ConfigDict(frozen=True)

    entries: dict[IndexLabel, DyadicInterval] = Field(default_factory=dict)

    @model_serializer
    def _to_document(self) -> dict[str, list[str]]:
        return {str(label): self.entries[label].model_dump() for label in sorted(self.entries)}

    def items(self) -> list[tuple[IndexLabel, DyadicInterval]]:
        return sorted(self.entries.items())

    def get(self, label: Union[str, IndexLabel]) -> DyadicInterval:
        return self.entries.get(as_label(label), DyadicInterval.exact(ZERO))

    def contains(self, v: FiniteSupportVector) -> bool:
        labels = set(self.entries) | v.support()
        return all(self.get(label).contains(v[label]) for label in labels)

    def max_width(self) -> DyadicRational:
        return max((interval.width for interval in self.entries.values()), default=ZERO)


def _exponent(p: Union[int, str, Fraction]) -> Fraction:
    try:
        exponent = Fraction(str(p))
    except (ValueError, ZeroDivisionError) as e:
        raise InvalidExponentError(f"p must be rational, got {p!r}") from e
    if exponent < 1:
        raise InvalidExponentError(f"p must be at least 1, got {exponent}")
    return exponent


def _signed_power(x: DyadicRational, power: Fraction, precision: int) -> DyadicInterval:
    """Enclosure of sgn(x)·|x|^power."""
    if x < ZERO:
        return -root_interval(-x, power, precision)
    return root_interval(x, power, precision)


def h_p(
    v: FiniteSupportVector,
    p: Union[int, str, Fraction],
    precision: int = DEFAULT_PRECISION_BITS,
) -> IntervalVector:
    """Coordinatewise sgn(xᵢ)|xᵢ|^(1/p), carrying B₁ onto B_p."""
    exponent = _exponent(p)
    report = member(B1Space(), v)
    if not report.member:
        raise NotInBallError(f"h_p needs a point of B1: {report.witness_constraint}")
    if exponent == 1:
        return IntervalVector(entries={label: DyadicInterval.exact(x) for label, x in v.items()})
    power = 1 / exponent
    return IntervalVector(
        entries={label: _signed_power(x, power, precision) for label, x in v.items()}
    )


def h_p_inverse(
    intervals: IntervalVector,
    p: Union[int, str, Fraction],
    precision: int = DEFAULT_PRECISION_BITS,
) -> IntervalVector:
    """Coordinatewise sgn·|·|^p on an interval vector, rounded outward."""
    exponent = _exponent(p)
    entries = {}
    for label, interval in intervals.items():
        lo = _signed_power(interval.lo, exponent, precision).lo
        hi = _signed_power(interval.hi, exponent, precision).hi
        if lo or hi:
            entries[label] = DyadicInterval(lo=lo, hi=hi)
    return IntervalVector(entries=entries)


def _signed_part(expr: Any, sign: int) -> Optional[Any]:
    """The part of a value expression with the given sign, made non-negative."""
    if expr.q.sign() != sign:
        return None
    if isinstance(expr, Const):
        return Const(q=abs(expr.q))
    return Geom(q=abs(expr.q), r=expr.r)


def _split_case(case: VectorTermCase, sign: int) -> VectorTermCase:
    fixed = {}
    for label, expr in case.fixed_coords.items():
        part = _signed_part(expr, sign)
        if part is not None:
            fixed[label] = part
    fresh = tuple(
        FreshCoordinate(tag=f.tag, offset=f.offset, stride=f.stride, value=abs(f.value))
        for f in case.fresh_coords
        if f.value.sign() == sign
    )
    return VectorTermCase(fixed_coords=fixed, fresh_coords=fresh)


def split_stream(s: FPS) -> tuple[FPS, FPS]:
    """The signed split applied to every term of a stream over B₁."""
    if not isinstance(s.space, B1Space):
        raise NotInBallError(f"split_stream needs a b1 stream, got {s.space.kind}")
    halves = [split_signed(point) for point in s.preamble]
    target = B1PlusSpace(ground=s.space.ground)
    plus = FPS(
        modulus=s.modulus,
        preamble=tuple(half.plus for half in halves),
        cases=tuple(_split_case(case, 1) for case in s.cases),
        space=target,
    )
    minus = FPS(
        modulus=s.modulus,
        preamble=tuple(half.minus for half in halves),
        cases=tuple(_split_case(case, -1) for case in s.cases),
        space=target,
    )
    return plus, minus


def _deepest_bit(q: DyadicRational) -> int:
    if q == ONE or q.exponent == 0:
        return -1
    return q.exponent - 1


def active_depth(s: FPS) -> int:
    """Highest finite bit level of any constant or fresh value of a B⁺₁ stream.

    Above it every level stream has the same cases: the all-ones constants
    as fixed labels and the fresh families of value 1.
    """
    depth = -1
    for case in s.cases:
        for expr in case.fixed_coords.values():
            if isinstance(expr, Const):
                depth = max(depth, _deepest_bit(expr.q))
        for coordinate in case.fresh_coords:
            depth = max(depth, _deepest_bit(coordinate.value))
    return depth


def level_space(s: FPS, n: int) -> SigmaSpace:
    return SigmaSpace(n=2 ** (n + 1), ground=f"{s.space.ground}@{n}")


def _term_level(point: FiniteSupportVector, n: int) -> frozenset[IndexLabel]:
    return frozenset(label for label, value in point.items() if bit(value, n))


def _geometric_bits(expr: Geom, indices: range, n: int) -> list[bool]:
    """Bit n of q·r^k along an arithmetic run of indices, one multiplication per step."""
    if not indices:
        return []
    value, ratio = expr.at(indices[0]), expr.r**indices.step
    bits = []
    for _ in indices:
        bits.append(bool(bit(value, n)))
        value = value * ratio
    return bits


def level_stream(s: FPS, n: int) -> FPS:
    """Level n of the encoding of every term of a B⁺₁ stream.

    Geometric coordinates drop below 2^-(n+1) after finitely many terms;
    those terms are computed directly and become the preamble.
    """
    if not isinstance(s.space, B1PlusSpace):
        raise NotInBallError(f"level_stream needs a b1plus stream, got {s.space.kind}")
    threshold = two_to_minus(n + 1)
    horizon = len(s.preamble)
    for case in s.cases:
        for expr in case.fixed_coords.values():
            if isinstance(expr, Geom):
                horizon = max(horizon, expr.settle(threshold))
    cases = []
    for case in s.cases:
        fixed = frozenset(
            label
            for label, expr in case.fixed_coords.items()
            if isinstance(expr, Const) and bit(expr.q, n)
        )
        families = tuple(
            FreshFamily(tag=f.tag, offset=f.offset, stride=f.stride)
            for f in case.fresh_coords
            if bit(f.value, n)
        )
        cases.append(SetTermCase(fixed=fixed, fresh_families=families))

    preamble = [_term_level(point, n) for point in s.preamble]
    generated: dict[int, set[IndexLabel]] = {}
    for residue, case in enumerate(s.cases):
        indices = range(class_start(s, residue), horizon, s.modulus)
        for k in indices:
            generated[k] = set(cases[residue].at(k))
        for label, expr in case.fixed_coords.items():
            if isinstance(expr, Geom):
                for k, is_set in zip(indices, _geometric_bits(expr, indices, n)):
                    if is_set:
                        generated[k].add(label)
    preamble.extend(frozenset(generated[k]) for k in range(len(s.preamble), horizon))
    return FPS(
        modulus=s.modulus, preamble=tuple(preamble), cases=tuple(cases), space=level_space(s, n)
    )
