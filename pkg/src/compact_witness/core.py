"""Exact scalars, index labels, finite-support vectors and points of X̂."""

import logging
import re
from fractions import Fraction
from typing import Any, Iterable, Mapping, Optional, Union

import gmpy2
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    field_validator,
    model_serializer,
    model_validator,
)

from .constants import FRESH_SEPARATOR, INFINITY_TEXT
from .errors import EmptySetError, OutOfRangeError

logger = logging.getLogger(__name__)

_DYADIC_TEXT = re.compile(r"^\s*(-?\d+)\s*(?:/\s*2\^(\d+))?\s*$")
_LABEL_NAME = re.compile(r"^[^#:\s]+$")


class DyadicRational(BaseModel):
    """Exact value numerator / 2^exponent.

    Canonical form: the numerator is odd whenever the exponent is positive,
    and zero is 0/2^0. Input in any other form is rejected; use `dyadic()`
    to normalise computed values.
    """

    model_config = ConfigDict(frozen=True)

    numerator: int
    exponent: int = Field(default=0, ge=0)

    @model_validator(mode="before")
    @classmethod
    def _from_text(cls, data: Any) -> Any:
        if isinstance(data, bool):
            raise ValueError("booleans are not dyadic rationals")
        if isinstance(data, int):
            return {"numerator": data, "exponent": 0}
        if isinstance(data, str):
            match = _DYADIC_TEXT.match(data)
            if not match:
                raise ValueError(f"not a dyadic rational: {data!r}")
            return {"numerator": int(match.group(1)), "exponent": int(match.group(2) or 0)}
        return data

    @model_validator(mode="after")
    def _check_canonical(self) -> "DyadicRational":
        if self.numerator == 0 and self.exponent != 0:
            raise ValueError("zero must be written 0/2^0")
        if self.exponent > 0 and self.numerator % 2 == 0:
            raise ValueError(f"{self.numerator}/2^{self.exponent} is not in canonical form")
        return self

    @model_serializer
    def _to_text(self) -> str:
        return str(self)

    def __str__(self) -> str:
        return f"{self.numerator}/2^{self.exponent}"

    def __repr__(self) -> str:
        return f"DyadicRational({self})"

    # Arithmetic is exact: align exponents, operate on integers, renormalise.

    def _aligned(self, other: "DyadicRational") -> tuple[int, int, int]:
        exponent = max(self.exponent, other.exponent)
        return (
            self.numerator << (exponent - self.exponent),
            other.numerator << (exponent - other.exponent),
            exponent,
        )

    def __add__(self, other: Any) -> "DyadicRational":
        other = as_dyadic(other)
        left, right, exponent = self._aligned(other)
        return dyadic(left + right, exponent)

    __radd__ = __add__

    def __sub__(self, other: Any) -> "DyadicRational":
        return self + (-as_dyadic(other))

    def __rsub__(self, other: Any) -> "DyadicRational":
        return as_dyadic(other) - self

    def __neg__(self) -> "DyadicRational":
        return dyadic(-self.numerator, self.exponent)

    def __abs__(self) -> "DyadicRational":
        return self if self.numerator >= 0 else -self

    def __mul__(self, other: Any) -> "DyadicRational":
        other = as_dyadic(other)
        return dyadic(self.numerator * other.numerator, self.exponent + other.exponent)

    __rmul__ = __mul__

    def __pow__(self, power: int) -> "DyadicRational":
        if power < 0:
            raise ValueError("negative powers leave the dyadic rationals")
        return dyadic(self.numerator**power, self.exponent * power)

    def _compare(self, other: Any) -> int:
        other = as_dyadic(other)
        left, right, _ = self._aligned(other)
        return (left > right) - (left < right)

    def __eq__(self, other: Any) -> bool:
        if isinstance(other, bool) or not isinstance(other, (int, DyadicRational)):
            return NotImplemented
        other = as_dyadic(other)
        return self.numerator == other.numerator and self.exponent == other.exponent

    def __hash__(self) -> int:
        return hash((self.numerator, self.exponent))

    def __lt__(self, other: Any) -> bool:
        return self._compare(other) < 0

    def __le__(self, other: Any) -> bool:
        return self._compare(other) <= 0

    def __gt__(self, other: Any) -> bool:
        return self._compare(other) > 0

    def __ge__(self, other: Any) -> bool:
        return self._compare(other) >= 0

    def __bool__(self) -> bool:
        return self.numerator != 0

    def sign(self) -> int:
        return (self.numerator > 0) - (self.numerator < 0)

    def to_fraction(self) -> Fraction:
        return Fraction(self.numerator, 1 << self.exponent)


def dyadic(numerator: int, exponent: int = 0) -> DyadicRational:
    """Build numerator / 2^exponent in canonical form."""
    if numerator == 0:
        return DyadicRational(numerator=0, exponent=0)
    if exponent < 0:
        return DyadicRational(numerator=numerator << -exponent, exponent=0)
    shift = min(exponent, (numerator & -numerator).bit_length() - 1)
    return DyadicRational(numerator=numerator >> shift, exponent=exponent - shift)


def as_dyadic(value: Any) -> DyadicRational:
    """Coerce an int, text or DyadicRational to a DyadicRational."""
    if isinstance(value, DyadicRational):
        return value
    if isinstance(value, int) and not isinstance(value, bool):
        return dyadic(value)
    if isinstance(value, Fraction):
        return from_fraction(value)
    return DyadicRational.model_validate(value)


def from_fraction(value: Fraction) -> DyadicRational:
    denominator = value.denominator
    if denominator & (denominator - 1):
        raise ValueError(f"{value} is not a dyadic rational")
    return dyadic(value.numerator, denominator.bit_length() - 1)


def two_to_minus(k: int) -> DyadicRational:
    """Return 1 / 2^k."""
    return dyadic(1, k)


ZERO = dyadic(0)
ONE = dyadic(1)


class IndexLabel(BaseModel):
    """An index of the ground set.

    Named(text) when `rank` is None, FreshInstance(family_tag, rank) otherwise;
    the text forms are "text" and "tag#rank". Labels are totally ordered:
    named labels first, then componentwise.
    """

    model_config = ConfigDict(frozen=True)

    name: str
    rank: Optional[int] = Field(default=None, ge=0)

    @model_validator(mode="before")
    @classmethod
    def _from_text(cls, data: Any) -> Any:
        if isinstance(data, str):
            if FRESH_SEPARATOR in data:
                tag, rank = data.rsplit(FRESH_SEPARATOR, 1)
                return {"name": tag, "rank": int(rank)}
            return {"name": data}
        return data

    @field_validator("name")
    @classmethod
    def _check_name(cls, value: str) -> str:
        if not _LABEL_NAME.match(value):
            raise ValueError(f"invalid label name {value!r}: no '#', ':' or whitespace allowed")
        return value

    @model_validator(mode="after")
    def _check_reserved(self) -> "IndexLabel":
        if self.rank is None and self.name == INFINITY_TEXT:
            raise ValueError(f"{INFINITY_TEXT!r} is reserved for the point at infinity")
        return self

    @model_serializer
    def _to_text(self) -> str:
        return str(self)

    def __str__(self) -> str:
        if self.rank is None:
            return self.name
        return f"{self.name}{FRESH_SEPARATOR}{self.rank}"

    def __repr__(self) -> str:
        return f"IndexLabel({self})"

    @property
    def is_fresh(self) -> bool:
        return self.rank is not None

    def sort_key(self) -> tuple[int, str, int]:
        return (1 if self.is_fresh else 0, self.name, self.rank or 0)

    def __lt__(self, other: "IndexLabel") -> bool:
        return self.sort_key() < other.sort_key()

    def __le__(self, other: "IndexLabel") -> bool:
        return self.sort_key() <= other.sort_key()

    def __gt__(self, other: "IndexLabel") -> bool:
        return self.sort_key() > other.sort_key()

    def __ge__(self, other: "IndexLabel") -> bool:
        return self.sort_key() >= other.sort_key()


def named(text: str) -> IndexLabel:
    return IndexLabel(name=text)


def fresh(tag: str, rank: int) -> IndexLabel:
    return IndexLabel(name=tag, rank=rank)


def as_label(value: Union[str, IndexLabel]) -> IndexLabel:
    if isinstance(value, IndexLabel):
        return value
    return IndexLabel.model_validate(value)


def label_set(values: Iterable[Union[str, IndexLabel]]) -> frozenset[IndexLabel]:
    return frozenset(as_label(value) for value in values)


def dump_labels(labels: Iterable[IndexLabel]) -> list[str]:
    """Sorted text form of a finite label set."""
    return [str(label) for label in sorted(labels)]


class FiniteSupportVector(BaseModel):
    """An element of R^(I): finitely many nonzero dyadic coordinates."""

    model_config = ConfigDict(frozen=True)

    entries: dict[IndexLabel, DyadicRational] = Field(default_factory=dict)

    @model_validator(mode="before")
    @classmethod
    def _normalise(cls, data: Any) -> Any:
        if isinstance(data, Mapping):
            raw = data
            if set(data.keys()) == {"entries"} and isinstance(data["entries"], Mapping):
                raw = data["entries"]
            entries = {}
            for key, value in raw.items():
                amount = as_dyadic(value)
                if amount:
                    entries[as_label(key)] = amount
            return {"entries": dict(sorted(entries.items()))}
        return data

    @model_validator(mode="after")
    def _check_nonzero(self) -> "FiniteSupportVector":
        if any(not value for value in self.entries.values()):
            raise ValueError("zero coordinates must not be stored")
        return self

    @model_serializer
    def _to_text(self) -> dict[str, str]:
        return {str(label): str(value) for label, value in self.items()}

    def __hash__(self) -> int:
        return hash(frozenset(self.entries.items()))

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, label: Union[str, IndexLabel]) -> DyadicRational:
        return self.entries.get(as_label(label), ZERO)

    def items(self) -> list[tuple[IndexLabel, DyadicRational]]:
        return sorted(self.entries.items())

    def support(self) -> frozenset[IndexLabel]:
        return frozenset(self.entries)

    def __neg__(self) -> "FiniteSupportVector":
        return FiniteSupportVector(entries={label: -value for label, value in self.entries.items()})

    def __sub__(self, other: "FiniteSupportVector") -> "FiniteSupportVector":
        merged = dict(self.entries)
        for label, value in other.entries.items():
            merged[label] = merged.get(label, ZERO) - value
        return vector(merged)


def vector(entries: Optional[Mapping[Any, Any]] = None) -> FiniteSupportVector:
    """Build a vector from a label → value mapping, dropping zero values."""
    return FiniteSupportVector.model_validate(dict(entries or {}))


class HatPoint(BaseModel):
    """A point of X̂ = X ∪ {∞}; `label` None is ∞."""

    model_config = ConfigDict(frozen=True)

    label: Optional[IndexLabel] = None

    @model_validator(mode="before")
    @classmethod
    def _from_text(cls, data: Any) -> Any:
        if isinstance(data, str):
            return {"label": None if data == INFINITY_TEXT else data}
        if isinstance(data, IndexLabel):
            return {"label": data}
        return data

    @model_serializer
    def _to_text(self) -> str:
        return str(self)

    def __str__(self) -> str:
        return INFINITY_TEXT if self.label is None else str(self.label)

    @property
    def is_infinity(self) -> bool:
        return self.label is None


INFINITY = HatPoint()


def hat_point(label: Union[str, IndexLabel]) -> HatPoint:
    return HatPoint(label=as_label(label))


class DyadicInterval(BaseModel):
    """Closed interval [lo, hi] with dyadic endpoints."""

    model_config = ConfigDict(frozen=True)

    lo: DyadicRational
    hi: DyadicRational

    @model_validator(mode="before")
    @classmethod
    def _from_pair(cls, data: Any) -> Any:
        if isinstance(data, (list, tuple)) and len(data) == 2:
            return {"lo": data[0], "hi": data[1]}
        return data

    @model_validator(mode="after")
    def _check_order(self) -> "DyadicInterval":
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")
        return self

    @model_serializer
    def _to_text(self) -> list[str]:
        return [str(self.lo), str(self.hi)]

    @classmethod
    def exact(cls, value: Any) -> "DyadicInterval":
        value = as_dyadic(value)
        return cls(lo=value, hi=value)

    @property
    def width(self) -> DyadicRational:
        return self.hi - self.lo

    @property
    def is_exact(self) -> bool:
        return self.lo == self.hi

    def contains(self, value: Any) -> bool:
        return self.lo <= as_dyadic(value) <= self.hi

    def __add__(self, other: "DyadicInterval") -> "DyadicInterval":
        return DyadicInterval(lo=self.lo + other.lo, hi=self.hi + other.hi)

    def __neg__(self) -> "DyadicInterval":
        return DyadicInterval(lo=-self.hi, hi=-self.lo)

    def __abs__(self) -> "DyadicInterval":
        if self.lo >= 0:
            return self
        if self.hi <= 0:
            return -self
        return DyadicInterval(lo=ZERO, hi=max(-self.lo, self.hi))

    def abs_pow(self, power: int) -> "DyadicInterval":
        """Enclosure of {|x|^power : x in self} (exact endpoints)."""
        magnitude = abs(self)
        return DyadicInterval(lo=magnitude.lo**power, hi=magnitude.hi**power)


def root_interval(value: DyadicRational, power: Fraction, precision: int) -> DyadicInterval:
    """Enclose value^power for rational power a/b > 0.

    The result has width at most 2^-precision and is degenerate when the
    b-th root is exact at that precision.
    """
    power = Fraction(power)
    if value < 0:
        raise OutOfRangeError(f"cannot take a real root of {value}")
    if power <= 0:
        raise ValueError(f"power must be positive, got {power}")
    base = value**power.numerator
    degree = power.denominator
    if degree == 1:
        return DyadicInterval.exact(base)
    shift = precision * degree - base.exponent
    if shift >= 0:
        scaled, remainder = base.numerator << shift, 0
    else:
        scaled = base.numerator >> -shift
        remainder = base.numerator & ((1 << -shift) - 1)
    root, exact = gmpy2.iroot(gmpy2.mpz(scaled), degree)
    lower = dyadic(int(root), precision)
    if exact and remainder == 0:
        return DyadicInterval(lo=lower, hi=lower)
    return DyadicInterval(lo=lower, hi=dyadic(int(root) + 1, precision))


def support(v: FiniteSupportVector) -> frozenset[IndexLabel]:
    """Indices with nonzero value."""
    return v.support()


def l1_mass(v: FiniteSupportVector) -> DyadicRational:
    """Σ |v_i|, exactly."""
    total = ZERO
    for _, value in v.items():
        total = total + abs(value)
    return total


def choice_least(labels: Iterable[IndexLabel]) -> IndexLabel:
    """The canonical choice function: least label in the lexicographic order."""
    pool = list(labels)
    if not pool:
        raise EmptySetError("choice_least needs a non-empty set of labels")
    return min(pool)
