"""
Parameter spaces and input domains.

Every parameter slot of an inverse primitive, and every input of every
operator, is described by a :class:`ParamSpace`. A space knows whether a value
belongs to it, how far a value is from it, how to sample it and how to map an
arbitrary value onto a member (the contraction used by totalization).

Tensors are handled elementwise: a tensor belongs to a space when every
element does, its distance is the Euclidean norm of the elementwise distances
and contraction is applied per element.
"""

import math
from dataclasses import dataclass
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np

from .values import UNDEFINED, is_tensor
from .utils.validation import ParseError

# Half-width of the excluded neighbourhood around removed points (0 for ℝ\0, 1 for ℝ>0\1)
EPSILON = 1e-9

# Default bound K used when integer slots are sampled or searched
DEFAULT_INTEGER_BOUND = 4

# Largest finite float, used to clamp overflowed values back into ℝ
MAX_FINITE = float(np.finfo(np.float64).max)


def _as_float(v: Any) -> float:
    try:
        return float(v)
    except (TypeError, ValueError):
        return math.nan


def round_half_even(v: float) -> float:
    """Round to the nearest integer, ties to even (2.5 -> 2, 3.5 -> 4)."""
    return float(round(v))


class ParamSpace:
    """
    Base class of all spaces.

    Subclasses implement the scalar hooks ``_contains1``, ``_distance1``,
    ``_contract1`` and ``_sample1``; the public methods lift them to tensors and
    handle undefined values.
    """

    discrete = False

    @property
    def code(self) -> str:
        raise NotImplementedError

    def _contains1(self, x: float) -> bool:
        raise NotImplementedError

    def _distance1(self, x: float) -> float:
        raise NotImplementedError

    def _contract1(self, x: float) -> float:
        raise NotImplementedError

    def _sample1(self, rng: np.random.Generator) -> float:
        raise NotImplementedError

    def default(self) -> float:
        """A fixed member used when contracting undefined or NaN values."""
        return self._contract1(0.0)

    def contains(self, v: Any) -> bool:
        if v is UNDEFINED:
            return False
        if is_tensor(v):
            return all(self._contains1(float(x)) for x in v.flat)
        x = _as_float(v)
        return not math.isnan(x) and self._contains1(x)

    def distance_to(self, v: Any) -> float:
        """Distance from ``v`` to the space; 0 exactly for members, ``inf`` for undefined."""
        if v is UNDEFINED:
            return math.inf
        if is_tensor(v):
            total = 0.0
            for x in v.flat:
                d = self._scalar_distance(float(x))
                total += d * d
            return math.sqrt(total)
        return self._scalar_distance(_as_float(v))

    def _scalar_distance(self, x: float) -> float:
        if math.isnan(x):
            return math.inf
        if self._contains1(x):
            return 0.0
        return self._distance1(x)

    def contract(self, v: Any) -> Any:
        """Map ``v`` to a member; identity on members."""
        if v is UNDEFINED:
            return self.default()
        if is_tensor(v):
            return np.array([self._scalar_contract(float(x)) for x in v.flat]).reshape(v.shape)
        x = _as_float(v)
        if not math.isnan(x) and self._contains1(x):
            return v
        return self._scalar_contract(x)

    def _scalar_contract(self, x: float) -> float:
        if math.isnan(x):
            return self.default()
        if self._contains1(x):
            return x
        return self._contract1(x)

    def sample(self, rng: np.random.Generator, shape: Optional[Tuple[int, ...]] = None) -> Any:
        """Draw a member; a tensor of members when ``shape`` is a non-empty tuple."""
        if shape:
            count = int(np.prod(shape))
            return np.array([self._sample1(rng) for _ in range(count)]).reshape(shape)
        return self._sample1(rng)

    def members(self, bound: int = DEFAULT_INTEGER_BOUND) -> List[float]:
        """Enumerate a discrete space (integers are cut to ``[-bound, bound]``)."""
        raise TypeError(f"{self.code} is not discrete")

    def __str__(self) -> str:
        return self.code


@dataclass(frozen=True)
class RealLine(ParamSpace):
    """All finite reals."""

    @property
    def code(self) -> str:
        return "real"

    def _contains1(self, x):
        return math.isfinite(x)

    def _distance1(self, x):
        return math.inf

    def _contract1(self, x):
        if math.isinf(x):
            return math.copysign(MAX_FINITE, x)
        return 0.0

    def _sample1(self, rng):
        return float(rng.standard_normal())


@dataclass(frozen=True)
class RealNonzero(ParamSpace):
    """Reals with the open ε-ball around 0 removed."""

    @property
    def code(self) -> str:
        return "nonzero"

    def _contains1(self, x):
        return math.isfinite(x) and abs(x) >= EPSILON

    def _distance1(self, x):
        if math.isinf(x):
            return math.inf
        return max(EPSILON - abs(x), 0.0)

    def _contract1(self, x):
        if math.isinf(x):
            return math.copysign(MAX_FINITE, x)
        if x < 0:
            return -EPSILON
        return EPSILON

    def _sample1(self, rng):
        return self._scalar_contract(float(rng.standard_normal()))


@dataclass(frozen=True)
class RealPositive(ParamSpace):
    """Reals ≥ ε."""

    @property
    def code(self) -> str:
        return "positive"

    def _contains1(self, x):
        return math.isfinite(x) and x >= EPSILON

    def _distance1(self, x):
        if math.isinf(x):
            return math.inf
        return max(EPSILON - x, 0.0)

    def _contract1(self, x):
        if x == math.inf:
            return MAX_FINITE
        return EPSILON

    def _sample1(self, rng):
        return self._scalar_contract(float(np.exp(rng.standard_normal())))


@dataclass(frozen=True)
class RealNonneg(ParamSpace):
    """Reals ≥ 0."""

    @property
    def code(self) -> str:
        return "nonneg"

    def _contains1(self, x):
        return math.isfinite(x) and x >= 0.0

    def _distance1(self, x):
        if math.isinf(x):
            return math.inf
        return -x

    def _contract1(self, x):
        if x == math.inf:
            return MAX_FINITE
        return 0.0

    def _sample1(self, rng):
        return abs(float(rng.standard_normal()))


@dataclass(frozen=True)
class RealPositiveNotOne(ParamSpace):
    """Reals ≥ ε with the open ε-ball around 1 removed (logarithm bases)."""

    @property
    def code(self) -> str:
        return "posnotone"

    def _contains1(self, x):
        return math.isfinite(x) and x >= EPSILON and abs(x - 1.0) >= EPSILON

    def _distance1(self, x):
        if math.isinf(x):
            return math.inf
        return max(EPSILON - x, 0.0) + max(EPSILON - abs(x - 1.0), 0.0)

    def _contract1(self, x):
        if x == math.inf:
            return MAX_FINITE
        x = max(x, EPSILON)
        if abs(x - 1.0) < EPSILON:
            return 1.0 + EPSILON if x >= 1.0 else 1.0 - EPSILON
        return x

    def _sample1(self, rng):
        return self._scalar_contract(float(np.exp(rng.standard_normal())))


@dataclass(frozen=True)
class Interval(ParamSpace):
    """Closed interval ``[lo, hi]``; either bound may be infinite."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def code(self) -> str:
        return f"interval:{_num(self.lo)}:{_num(self.hi)}"

    def _contains1(self, x):
        return math.isfinite(x) and self.lo <= x <= self.hi

    def _distance1(self, x):
        if math.isinf(x) and not (self.lo <= x <= self.hi):
            return math.inf
        return max(self.lo - x, x - self.hi, 0.0)

    def _contract1(self, x):
        x = min(max(x, self.lo), self.hi)
        if math.isinf(x):
            return math.copysign(MAX_FINITE, x)
        return x

    def _sample1(self, rng):
        lo, hi = self.lo, self.hi
        if math.isfinite(lo) and math.isfinite(hi):
            return float(rng.uniform(lo, hi))
        if math.isfinite(lo):
            return lo + abs(float(rng.standard_normal()))
        if math.isfinite(hi):
            return hi - abs(float(rng.standard_normal()))
        return float(rng.standard_normal())

    def default(self) -> float:
        return self._contract1(0.0) if not (self.lo <= 0.0 <= self.hi) else 0.0


@dataclass(frozen=True)
class IntegerLine(ParamSpace):
    """The integers, sampled and searched within ``[-bound, bound]``."""

    bound: int = DEFAULT_INTEGER_BOUND
    discrete = True

    @property
    def code(self) -> str:
        return "int"

    def _contains1(self, x):
        return math.isfinite(x) and x == math.floor(x)

    def _distance1(self, x):
        if math.isinf(x):
            return math.inf
        return abs(x - round_half_even(x))

    def _contract1(self, x):
        if math.isinf(x):
            return math.copysign(float(2 ** 53), x)
        return round_half_even(x)

    def _sample1(self, rng):
        return float(rng.integers(-self.bound, self.bound + 1))

    def members(self, bound: int = DEFAULT_INTEGER_BOUND) -> List[float]:
        return [float(k) for k in range(-bound, bound + 1)]


@dataclass(frozen=True)
class FiniteSet(ParamSpace):
    """A finite set of reals; contraction picks the nearest member, ties to the smaller."""

    values: Tuple[float, ...]
    discrete = True

    def __post_init__(self):
        if not self.values:
            raise ValueError("empty finite set")
        object.__setattr__(self, "values", tuple(sorted(float(v) for v in self.values)))

    @property
    def code(self) -> str:
        return "finite:" + ":".join(_num(v) for v in self.values)

    def _contains1(self, x):
        return x in self.values

    def _distance1(self, x):
        return min(abs(x - v) for v in self.values)

    def _contract1(self, x):
        best = self.values[0]
        best_d = abs(x - best)
        for v in self.values[1:]:
            d = abs(x - v)
            if d < best_d:
                best, best_d = v, d
        return best

    def _sample1(self, rng):
        return self.values[int(rng.integers(0, len(self.values)))]

    def members(self, bound: int = DEFAULT_INTEGER_BOUND) -> List[float]:
        return list(self.values)


@dataclass(frozen=True)
class AnyValue(ParamSpace):
    """Any defined value (no domain restriction beyond being defined)."""

    @property
    def code(self) -> str:
        return "any"

    def contains(self, v):
        if v is UNDEFINED:
            return False
        if is_tensor(v):
            return not bool(np.any(np.isnan(v)))
        return not math.isnan(_as_float(v))

    def _contains1(self, x):
        return not math.isnan(x)

    def _distance1(self, x):
        return math.inf

    def _contract1(self, x):
        return 0.0

    def _sample1(self, rng):
        return float(rng.standard_normal())


def _num(v: float) -> str:
    if v == math.inf:
        return "inf"
    if v == -math.inf:
        return "-inf"
    if float(v).is_integer():
        return str(int(v))
    return repr(float(v))


def _parse_num(text: str) -> float:
    try:
        return float(text)
    except ValueError as e:
        raise ParseError(f"invalid number {text!r} in space spelling") from e


# Shared instances
REAL = RealLine()
NONZERO = RealNonzero()
POSITIVE = RealPositive()
NONNEG = RealNonneg()
POS_NOT_ONE = RealPositiveNotOne()
INTEGERS = IntegerLine()
BOOL = FiniteSet((0.0, 1.0))
SIGN = FiniteSet((-1.0, 1.0))
UNIT_INTERVAL = Interval(-1.0, 1.0)
ANY = AnyValue()

_SIMPLE = {s.code: s for s in (REAL, NONZERO, POSITIVE, NONNEG, POS_NOT_ONE, INTEGERS, ANY)}


def parse_space(code: str) -> ParamSpace:
    """
    Parse a space spelling such as ``real``, ``interval:-1:1`` or ``finite:-1:1``.

    Raises:
        ParseError: For unknown spellings.
    """
    if code in _SIMPLE:
        return _SIMPLE[code]
    head, _, rest = code.partition(":")
    if head == "interval":
        parts = rest.split(":")
        if len(parts) != 2:
            raise ParseError(f"interval space needs two bounds: {code!r}")
        lo, hi = (_parse_num(p) for p in parts)
        if not lo <= hi:
            raise ParseError(f"empty interval in {code!r}")
        return Interval(lo, hi)
    if head == "finite":
        if not rest:
            raise ParseError(f"finite space needs members: {code!r}")
        return FiniteSet(tuple(_parse_num(p) for p in rest.split(":")))
    raise ParseError(f"unknown parameter space {code!r}")


def spaces_to_codes(spaces: Sequence[ParamSpace]) -> List[str]:
    return [s.code for s in spaces]
