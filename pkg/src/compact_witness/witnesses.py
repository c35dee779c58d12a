"""Sequential-compactness witnesses: subsequence selections with certified limits."""

import logging
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable, Iterable, Optional, Protocol, Union

from pydantic import BaseModel, ConfigDict, field_serializer, model_serializer

from .codec import BitLevelFamily, active_depth, decode, level_stream, split_stream
from .constants import DEFAULT_HORIZON, DEFAULT_TOLERANCE_BITS, WitnessMode
from .core import (
    ZERO,
    DyadicInterval,
    DyadicRational,
    HatPoint,
    INFINITY,
    two_to_minus,
    vector,
)
from .errors import (
    GroundMismatchError,
    HorizonTooSmallError,
    NotAnFPSError,
    SpaceViolationError,
    UnregisteredFactorError,
)
from .spaces import (
    B1PlusSpace,
    B1Space,
    Coordinate,
    CubeSpace,
    HatSpace,
    MembershipStatus,
    ProductSpace,
    SigmaSpace,
    SpaceDescriptor,
    coordinate_values,
    dump_point,
    member,
    point_from_coordinates,
)
from .streams import (
    FPS,
    BlackBoxStream,
    Const,
    FreshFamily,
    Geom,
    ProductTermCase,
    Progression,
    SetTermCase,
    fps_project,
    fps_restrict,
    geometric_settle,
    require_valid,
)

logger = logging.getLogger(__name__)


class Selection(BaseModel):
    """A composition stack of arithmetic progressions; empty means all of ℕ.

    steps[0] selects from the original stream, steps[1] from the result, and
    so on.
    """

    model_config = ConfigDict(frozen=True)

    steps: tuple[Progression, ...] = ()

    def index(self, j: int) -> int:
        """Index in the original stream of the j-th selected term."""
        for step in reversed(self.steps):
            j = step.at(j)
        return j

    def apply(self, s: FPS) -> FPS:
        for step in self.steps:
            s = fps_restrict(s, step)
        return s


class TraceStep(BaseModel):
    """One extraction step; only the fields that apply are set."""

    model_config = ConfigDict(frozen=True)

    step: str
    depth: Optional[int] = None
    factor: Optional[int] = None
    level: Optional[int] = None
    coordinate: Optional[str] = None
    residue: Optional[int] = None
    modulus: Optional[int] = None
    nu0: Optional[int] = None
    support: Optional[int] = None
    branch: Optional[str] = None
    deviations: Optional[int] = None

    @model_serializer(mode="wrap")
    def _drop_unset(self, handler: Callable[[Any], dict[str, Any]]) -> dict[str, Any]:
        return {key: value for key, value in handler(self).items() if value is not None}


class GeometricRate(BaseModel):
    model_config = ConfigDict(frozen=True)

    coordinate: Coordinate
    q: DyadicRational
    r: DyadicRational

    def settle(self, epsilon: DyadicRational) -> int:
        """Least j with q·r^j < epsilon."""
        return geometric_settle(self.q, self.r, epsilon)


class FreshRate(BaseModel):
    model_config = ConfigDict(frozen=True)

    path: tuple[int, ...] = ()
    family: FreshFamily


class ConvergenceModulus(BaseModel):
    """How fast the selected subsequence reaches its limit, coordinate by coordinate.

    Past the preamble, constant coordinates agree with the limit exactly,
    geometric ones shrink at a known rate and each fresh label is hit by at
    most one term.
    """

    model_config = ConfigDict(frozen=True)

    preamble: int = 0
    geometric: tuple[GeometricRate, ...] = ()
    fresh: tuple[FreshRate, ...] = ()

    def settle_index(self, coords: Iterable[Coordinate], epsilon: DyadicRational) -> int:
        """First selected index from which every coordinate in `coords` is within epsilon."""
        coords = set(coords)
        threshold = self.preamble
        for rate in self.geometric:
            if rate.coordinate in coords:
                threshold = max(threshold, rate.settle(epsilon))
        for rate in self.fresh:
            for coordinate in coords:
                if coordinate.path == rate.path and rate.family.owns(coordinate.label):
                    threshold = max(threshold, rate.family.index_of(coordinate.label) + 1)
        return threshold


def _collect_rates(
    case: Any, path: tuple[int, ...], geometric: list[GeometricRate], fresh: list[FreshRate]
) -> None:
    if isinstance(case, ProductTermCase):
        for index, part in enumerate(case.parts):
            _collect_rates(part, path + (index,), geometric, fresh)
        return
    if isinstance(case, SetTermCase):
        families = case.fresh_families
    else:
        for label, expr in case.fixed_coords.items():
            if isinstance(expr, Geom) and expr.q:
                geometric.append(
                    GeometricRate(
                        coordinate=Coordinate(path=path, label=label), q=abs(expr.q), r=expr.r
                    )
                )
        families = case.fresh_coords
    for family in families:
        fresh.append(
            FreshRate(
                path=path,
                family=FreshFamily(tag=family.tag, offset=family.offset, stride=family.stride),
            )
        )


def convergence_modulus(selected: FPS) -> ConvergenceModulus:
    """Modulus of the stream a selection produces."""
    geometric: list[GeometricRate] = []
    fresh: list[FreshRate] = []
    for case in selected.cases:
        _collect_rates(case, (), geometric, fresh)
    return ConvergenceModulus(
        preamble=len(selected.preamble), geometric=tuple(geometric), fresh=tuple(fresh)
    )


class WitnessResult(BaseModel):
    """A selection together with the limit of the selected subsequence."""

    selection: Selection
    limit: Any
    space: SpaceDescriptor
    mode: WitnessMode = WitnessMode.CERTIFIED
    horizon: Optional[int] = None
    trace: tuple[TraceStep, ...] = ()
    modulus: Optional[ConvergenceModulus] = None
    limit_bounds: Optional[dict[str, DyadicInterval]] = None

    @field_serializer("limit")
    def _dump_limit(self, limit: Any) -> Any:
        return dump_point(self.space, limit)


def _require_space(s: Any, kind: type) -> FPS:
    if not isinstance(s, FPS):
        raise NotAnFPSError(
            f"certified extraction needs a finitely presented stream, got {type(s).__name__}"
        )
    if not isinstance(s.space, kind):
        raise GroundMismatchError(f"expected a {kind.__name__} stream, got {s.space.kind}")
    return s


def _class_selection(s: FPS, residue: int) -> Selection:
    if s.modulus == 1:
        return Selection()
    return Selection(
        steps=(Progression(start=len(s.preamble), residue=residue, modulus=s.modulus),)
    )


def _certified(s: FPS, selection: Selection, limit: Any, trace: list[TraceStep]) -> WitnessResult:
    report = member(s.space, limit)
    if report.status != MembershipStatus.INSIDE:
        raise SpaceViolationError(f"limit left the space: {report.witness_constraint}")
    return WitnessResult(
        selection=selection,
        limit=limit,
        space=s.space,
        trace=tuple(trace),
        modulus=convergence_modulus(selection.apply(s)),
    )


def hat_witness(s: FPS) -> WitnessResult:
    """Prefer the lowest class whose term is constant; otherwise an injective class tends to ∞."""
    _require_space(s, HatSpace)
    require_valid(s)
    constant = [c for c, case in enumerate(s.cases) if not case.fresh_families]
    if constant:
        residue = constant[0]
        fixed = s.cases[residue].fixed
        limit = HatPoint(label=next(iter(fixed))) if fixed else INFINITY
        branch = "constant"
    else:
        residue, limit, branch = 0, INFINITY, "injective"
    logger.debug(f"hat witness: class {residue} mod {s.modulus} is {branch}, limit {limit}")
    trace = [TraceStep(step="hat", residue=residue, modulus=s.modulus, branch=branch)]
    return _certified(s, _class_selection(s, residue), limit, trace)


def _scalar_step(s: FPS, label: Any) -> tuple[Selection, DyadicRational, TraceStep]:
    selection = _class_selection(s, 0)
    expr = s.cases[0].fixed_coords.get(label, Const(q=ZERO))
    if isinstance(expr, Const) or not expr.q:
        branch = "constant"
    elif expr.q > ZERO:
        branch = "descending"
    else:
        branch = "ascending"
    step = TraceStep(
        step="scalar", coordinate=str(label), residue=0, modulus=s.modulus, branch=branch
    )
    return selection, expr.limit(), step


def cube_witness(s: FPS) -> WitnessResult:
    """Diagonal extraction over [0,1]^D, one coordinate at a time in the order of D."""
    _require_space(s, CubeSpace)
    require_valid(s)
    current, steps, limits, trace = s, [], {}, []
    for label in s.space.coords:
        selection, value, step = _scalar_step(current, label)
        current = selection.apply(current)
        steps.extend(selection.steps)
        limits[label] = value
        trace.append(step)
    return _certified(s, Selection(steps=tuple(steps)), vector(limits), trace)


def scalar_witness(s: FPS) -> WitnessResult:
    """The one-coordinate cube: a value stream in [0,1]."""
    _require_space(s, CubeSpace)
    if len(s.space.coords) != 1:
        raise GroundMismatchError(f"scalar streams have one coordinate, got {len(s.space.coords)}")
    return cube_witness(s)


def _sigma_descent(n: int, fixed: frozenset, depth: int, trace: list[TraceStep]) -> frozenset:
    """Peel off the common part R, then recurse on the disjoint residue in σ_{n-|R|}."""
    nu = len(fixed)
    trace.append(TraceStep(step="sigma", depth=depth, nu0=nu, support=n))
    if nu == 0:
        # pairwise disjoint terms converge to ∅
        return frozenset()
    return fixed | _sigma_descent(n - nu, frozenset(), depth + 1, trace)


def sigma_witness(s: FPS) -> WitnessResult:
    """Pick the class with the least intersection size ν₀; its fixed part is the limit."""
    _require_space(s, SigmaSpace)
    require_valid(s)
    sizes = [len(case.fixed) for case in s.cases]
    nu0 = min(sizes)
    residue = sizes.index(nu0)
    case = s.cases[residue]
    logger.debug(f"sigma witness: nu0={nu0} at class {residue} mod {s.modulus}")
    trace = [TraceStep(step="sigma-class", residue=residue, modulus=s.modulus, nu0=nu0)]
    limit = _sigma_descent(s.space.n, case.fixed, 0, trace)
    return _certified(s, _class_selection(s, residue), limit, trace)


class ProductStream(Protocol):
    """A stream over a product, seen factor by factor."""

    def factor_count(self) -> int: ...

    def factor(self, index: int) -> FPS: ...

    def restrict(self, progression: Progression) -> "ProductStream": ...


@dataclass(frozen=True)
class FPSProduct:
    stream: FPS

    def factor_count(self) -> int:
        return len(self.stream.space.factors)

    def factor(self, index: int) -> FPS:
        return fps_project(self.stream, index)

    def restrict(self, progression: Progression) -> "FPSProduct":
        return FPSProduct(fps_restrict(self.stream, progression))


@dataclass(frozen=True)
class LevelProduct:
    """The level streams 0..count-1 of a B⁺₁ stream; higher levels repeat the last one."""

    source: FPS
    count: int

    def factor_count(self) -> int:
        return self.count

    def factor(self, index: int) -> FPS:
        return level_stream(self.source, index)

    def restrict(self, progression: Progression) -> "LevelProduct":
        return LevelProduct(fps_restrict(self.source, progression), self.count)


def _diagonal(
    stream: ProductStream, key: str = "factor"
) -> tuple[list[Progression], list[Any], list[TraceStep]]:
    """Witness each factor in turn, restricting the whole stream after each one."""
    steps, limits, trace = [], [], []
    for index in range(stream.factor_count()):
        factor = stream.factor(index)
        witness = _witness_for(factor.space)(factor)
        for progression in witness.selection.steps:
            stream = stream.restrict(progression)
        steps.extend(witness.selection.steps)
        limits.append(witness.limit)
        trace.extend(
            step.model_copy(update={key: index, "depth": (step.depth or 0) + 1})
            for step in witness.trace
        )
    return steps, limits, trace


def product_witness(s: FPS) -> WitnessResult:
    _require_space(s, ProductSpace)
    require_valid(s)
    steps, limits, trace = _diagonal(FPSProduct(s))
    trace.insert(0, TraceStep(step="product", modulus=s.modulus, support=len(limits)))
    return _certified(s, Selection(steps=tuple(steps)), tuple(limits), trace)


def b1plus_witness(s: FPS) -> WitnessResult:
    """Witness the level streams of the dyadic encoding, then decode their limits."""
    _require_space(s, B1PlusSpace)
    require_valid(s)
    depth = active_depth(s)
    steps, levels, trace = _diagonal(LevelProduct(s, depth + 2), key="level")
    ones = levels[-1]
    family = BitLevelFamily(
        levels={n: level - ones for n, level in enumerate(levels[:-1])},
        ones=ones,
        source_ground=s.space.ground,
    )
    limit = decode(family).vector
    logger.debug(f"b1plus witness: {depth + 2} levels processed, limit {limit.model_dump()}")
    trace.insert(0, TraceStep(step="b1plus", level=depth + 1, support=len(ones)))
    return _certified(s, Selection(steps=tuple(steps)), limit, trace)


def b1_witness(s: FPS) -> WitnessResult:
    """Split into positive and negative parts, witness both, subtract the limits."""
    _require_space(s, B1Space)
    require_valid(s)
    plus, minus = split_stream(s)
    positive = b1plus_witness(plus)
    negative = b1plus_witness(positive.selection.apply(minus))
    selection = Selection(steps=positive.selection.steps + negative.selection.steps)
    trace = (
        [TraceStep(step="b1", branch="plus")]
        + list(positive.trace)
        + [TraceStep(step="b1", branch="minus")]
        + list(negative.trace)
    )
    return _certified(s, selection, positive.limit - negative.limit, trace)


WITNESSES: dict[str, Callable[[FPS], WitnessResult]] = {
    "hat": hat_witness,
    "sigma": sigma_witness,
    "cube": cube_witness,
    "b1plus": b1plus_witness,
    "b1": b1_witness,
    "product": product_witness,
}


def _witness_for(space: SpaceDescriptor) -> Callable[[FPS], WitnessResult]:
    witness = WITNESSES.get(space.kind)
    if witness is None:
        raise UnregisteredFactorError(f"no witness registered for {space.kind} spaces")
    return witness


def _mode_estimate(
    rows: list[dict[Coordinate, DyadicRational]],
) -> dict[Coordinate, DyadicRational]:
    """Most frequent value per coordinate; ties go to the smaller value."""
    coords = sorted({coordinate for row in rows for coordinate in row})
    estimate = {}
    for coordinate in coords:
        counts = Counter(row.get(coordinate, ZERO) for row in rows)
        value, _ = min(counts.items(), key=lambda item: (-item[1], item[0]))
        if value:
            estimate[coordinate] = value
    return estimate


def _recurring(rows: list[dict[Coordinate, DyadicRational]]) -> set[Coordinate]:
    """Coordinates nonzero in at least two rows; a single hit is fresh support."""
    hits = Counter(coordinate for row in rows for coordinate in row)
    return {coordinate for coordinate, count in hits.items() if count >= 2}


def _deviates(
    row: dict[Coordinate, DyadicRational],
    estimate: dict[Coordinate, DyadicRational],
    coords: set[Coordinate],
    tolerance: DyadicRational,
) -> bool:
    return any(
        abs(row.get(c, ZERO) - estimate.get(c, ZERO)) > tolerance for c in coords
    )


def empirical_extract(
    stream: BlackBoxStream, horizon: int, tolerance: Optional[DyadicRational] = None
) -> WitnessResult:
    """Best-effort selection from the first `horizon` terms; never certified.

    Every progression with modulus up to horizon/2 is scored on the second
    half of its terms, which must hold at least two terms and a tenth of the
    horizon. A term strays when a coordinate seen in two or more tail terms
    differs from the coordinatewise mode by more than the tolerance. The
    fewest strays win, then the longest tail, then the smaller residue.
    """
    if horizon < 2:
        raise HorizonTooSmallError(f"horizon must be at least 2, got {horizon}")
    if tolerance is None:
        tolerance = two_to_minus(DEFAULT_TOLERANCE_BITS)
    rows = [coordinate_values(stream.space, stream(k)) for k in range(horizon)]
    min_tail = min(max(2, horizon // 10), horizon - horizon // 2)

    best = None
    for modulus in range(1, horizon // 2 + 1):
        for residue in range(modulus):
            indices = list(range(residue, horizon, modulus))
            tail = indices[len(indices) // 2 :]
            if len(tail) < min_tail:
                continue
            tail_rows = [rows[k] for k in tail]
            estimate = _mode_estimate(tail_rows)
            coords = _recurring(tail_rows) | set(estimate)
            deviations = sum(
                1 for row in tail_rows if _deviates(row, estimate, coords, tolerance)
            )
            key = (Fraction(deviations, len(tail)), -len(tail), modulus, residue)
            if best is None or key < best[0]:
                best = (key, tail, estimate, coords, deviations)

    (_, _, modulus, residue), tail, estimate, coords, deviations = best
    bounds = {}
    for coordinate in sorted(coords):
        seen = [rows[k].get(coordinate, ZERO) for k in tail]
        bounds[str(coordinate)] = DyadicInterval(lo=min(seen), hi=max(seen))
    logger.debug(
        f"empirical witness: class {residue} mod {modulus},"
        f" {deviations} of {len(tail)} tail terms stray"
    )
    return WitnessResult(
        selection=Selection(steps=(Progression(start=tail[0], residue=residue, modulus=modulus),)),
        limit=point_from_coordinates(stream.space, estimate),
        space=stream.space,
        mode=WitnessMode.EMPIRICAL,
        horizon=horizon,
        trace=(
            TraceStep(step="empirical", residue=residue, modulus=modulus, deviations=deviations),
        ),
        limit_bounds=bounds,
    )


def extract(
    s: Union[FPS, BlackBoxStream],
    mode: WitnessMode = WitnessMode.CERTIFIED,
    horizon: Optional[int] = None,
    tolerance: Optional[DyadicRational] = None,
) -> WitnessResult:
    """Dispatch on the space of `s`; empirical mode also accepts black-box streams."""
    if WitnessMode(mode) == WitnessMode.EMPIRICAL:
        stream = s if isinstance(s, BlackBoxStream) else BlackBoxStream.from_fps(s)
        return empirical_extract(stream, horizon or DEFAULT_HORIZON, tolerance)
    if not isinstance(s, FPS):
        raise NotAnFPSError("certified extraction needs a finitely presented stream")
    return _witness_for(s.space)(s)
