"""
Primitive operators: forward semantics, parametric inverses and contractions.

Three families of operators can appear on op nodes:

* forward primitives (``add``, ``cos``, ``dupl:3``, ``clip:0:inf``...);
* inverse operators, spelled ``inv:<primitive>`` for the full parametric
  inverse or ``inv:<primitive>/k<slots>`` for the variant whose listed forward
  inputs are known constants (``inv:add/k2`` inverts ``x1 + c``);
* contractions, spelled ``contract:<space>``, which map any value onto a
  parameter space and are inserted by totalization.

Every operator exposes the same interface: arity, per-input domains,
:meth:`Operator.evaluate` (undefined in, or out of domain, gives undefined out)
and :meth:`Operator.domain_distance`.

Port conventions for inverse operators: inputs are the forward outputs, then
the known forward inputs, then extra constants the variant needs, then one
port per parameter; outputs are the forward inputs that are not known, in
forward slot order.

Selectors written ``[a, b]^c`` below pick ``a`` when ``c`` is true.
"""

import math
import itertools
from functools import lru_cache
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .spaces import (
    ParamSpace, EPSILON, REAL, NONZERO, POSITIVE, NONNEG, POS_NOT_ONE, INTEGERS,
    BOOL, SIGN, UNIT_INTERVAL, ANY, Interval, parse_space, round_half_even, _num
)
from .values import (
    UNDEFINED, any_undefined, check_value, is_tensor, shape_of, values_equal
)
from .utils.logger import get_logger
from .utils.validation import (
    ArityMismatch, NotInDomain, ParseError, ShapeMismatch, TypeMismatch, UnsupportedKind
)

logger = get_logger("primitives")

PI = math.pi
TWO_PI = 2.0 * math.pi

Shape = Optional[Tuple[int, ...]]


# Overflow-safe scalar helpers. Overflow yields IEEE infinities, never exceptions.

def _exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def _log(x: float) -> float:
    if x > 0.0:
        return math.log(x)
    if x == 0.0:
        return -math.inf
    return math.nan


def _pow(a: float, b: float) -> float:
    try:
        r = a ** b
    except OverflowError:
        return math.inf
    except ZeroDivisionError:
        return math.inf
    if isinstance(r, complex):
        return math.nan
    return float(r)


def _sign_power(t: float) -> float:
    """(-1)^t for an integer-valued t."""
    return -1.0 if int(t) % 2 else 1.0


def _distance(a: Any, b: Any) -> float:
    if is_tensor(a) or is_tensor(b):
        return float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))
    return abs(float(a) - float(b))


def _approx_equal(a: Any, b: Any, tol: float = 1e-9) -> bool:
    if a is UNDEFINED or b is UNDEFINED:
        return a is b
    if is_tensor(a) or is_tensor(b):
        a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
        return a.shape == b.shape and bool(np.allclose(a, b, rtol=tol, atol=tol))
    return math.isclose(float(a), float(b), rel_tol=tol, abs_tol=tol)


def _lift(fn: Callable, args: Sequence[Any], n_out: int) -> List[Any]:
    """Apply a scalar function elementwise when any argument is a tensor."""
    if not any(is_tensor(a) for a in args):
        return list(fn(*args))
    try:
        shape = np.broadcast_shapes(*[shape_of(a) for a in args])
    except ValueError as e:
        raise ShapeMismatch(f"incompatible shapes {[shape_of(a) for a in args]}") from e
    arrays = [np.broadcast_to(np.asarray(a, dtype=float), shape) for a in args]
    outs = [np.empty(shape) for _ in range(n_out)]
    for idx in np.ndindex(*shape):
        res = fn(*[float(a[idx]) for a in arrays])
        for out, r in zip(outs, res):
            if r is UNDEFINED:
                return [UNDEFINED] * n_out
            out[idx] = float(r)
    return outs


def _as_index(value: Any) -> Optional[np.ndarray]:
    """Integer index vector from a rank-1 tensor, or None if it is not one."""
    if not is_tensor(value) or value.ndim != 1:
        return None
    if not np.all(np.isfinite(value)) or not np.all(value == np.floor(value)):
        return None
    return value.astype(np.int64)


class Operator:
    """Common interface of everything that can label an op node."""

    spelling: str = ""
    n_in: int = 0
    n_out: int = 0

    def input_domains(self) -> List[ParamSpace]:
        raise NotImplementedError

    def evaluate(self, inputs: Sequence[Any]) -> List[Any]:
        """
        Evaluate the operator.

        Returns undefined outputs when an input is undefined or outside its
        domain.

        Raises:
            ArityMismatch: If the number of inputs is wrong.
            TypeMismatch: If an input has an unsupported type.
        """
        self.check_arity(inputs)
        if any_undefined(inputs):
            return [UNDEFINED] * self.n_out
        self.check_types(inputs)
        for dom, v in zip(self.input_domains(), inputs):
            if not dom.contains(v):
                return [UNDEFINED] * self.n_out
        return self._apply(list(inputs))

    def _apply(self, inputs: List[Any]) -> List[Any]:
        raise NotImplementedError

    def check_arity(self, inputs: Sequence[Any]) -> None:
        if len(inputs) != self.n_in:
            raise ArityMismatch(f"{self.spelling} takes {self.n_in} inputs, got {len(inputs)}")

    def check_types(self, inputs: Sequence[Any]) -> None:
        pass

    def joint_distance(self, inputs: Sequence[Any]) -> float:
        """Distance for constraints that couple several inputs (0 by default)."""
        return 0.0

    def domain_distance(self, inputs: Sequence[Any]) -> float:
        """Sum of per-input distances to the input domains plus the joint distance."""
        self.check_arity(inputs)
        total = sum(d.distance_to(v) for d, v in zip(self.input_domains(), inputs))
        if any_undefined(inputs):
            return math.inf
        return total + self.joint_distance(inputs)

    def infer_shapes(self, shapes: Sequence[Shape], values: Sequence[Any]) -> List[Shape]:
        """Output shapes from input shapes (None = unknown) and known input values."""
        return [None] * self.n_out

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.spelling}>"


# ---------------------------------------------------------------------------
# Forward primitives
# ---------------------------------------------------------------------------

class KnownVariant:
    """Inverse of a binary primitive when one operand is a known constant."""

    def __init__(self, solve: Callable[[float, float], float], y_domain: ParamSpace,
                 accept: Callable[[float], bool]):
        self.solve = solve
        self.y_domain = y_domain
        self.accept = accept


class Primitive(Operator):
    """
    A forward primitive with its parametric inverse.

    Elementwise primitives implement the scalar hooks ``forward1``,
    ``inverse1`` and ``extract1``; tensors are handled by lifting. Others
    override the vector-level hooks directly.
    """

    name = ""
    domains: Tuple[ParamSpace, ...] = ()
    theta: Tuple[ParamSpace, ...] = ()
    y_domains: Tuple[ParamSpace, ...] = (REAL,)
    elementwise = True
    scalar_only = False
    output_dtype = "real"
    known_variants: Dict[int, KnownVariant] = {}

    @property
    def spelling(self) -> str:
        return self.name

    def input_domains(self) -> List[ParamSpace]:
        return list(self.domains)

    def check_types(self, inputs):
        for i, v in enumerate(inputs):
            if is_tensor(v):
                if self.scalar_only:
                    raise TypeMismatch(f"{self.spelling} input {i + 1} must be a scalar")
            elif not isinstance(v, (bool, int, float)):
                raise TypeMismatch(
                    f"{self.spelling} input {i + 1} has unsupported type {type(v).__name__}"
                )

    def _apply(self, inputs):
        return _lift(self.forward1, inputs, self.n_out)

    def forward1(self, *xs):
        raise NotImplementedError

    def inverse1(self, ys, thetas):
        raise NotImplementedError

    def extract1(self, xs, ys):
        """Default extraction for finite parameter spaces: first parameter that reproduces x."""
        if not all(s.discrete and not isinstance(s, type(INTEGERS)) for s in self.theta):
            raise NotImplementedError(f"{self.spelling} has no parameter extraction")
        for combo in itertools.product(*[s.members() for s in self.theta]):
            xs_hat = self.inverse1(ys, combo)
            if all(bool(a) == bool(b) for a, b in zip(xs_hat, xs)):
                return combo
        raise NotInDomain(f"{self.spelling}: no parameter reproduces {xs}")

    def infer_shapes(self, shapes, values):
        if any(s is None for s in shapes):
            return [None] * self.n_out
        try:
            out = tuple(np.broadcast_shapes(*shapes))
        except ValueError as e:
            raise ShapeMismatch(f"{self.spelling}: incompatible shapes {list(shapes)}") from e
        return [out] * self.n_out

    # Inverse protocol ----------------------------------------------------

    def inverse_signature(self, known: Tuple[int, ...]):
        """
        Domains of the inverse operator's inputs for a given known-slot set.

        Returns:
            (y_domains, known_domains, extra_domains, theta_spaces)

        Raises:
            UnsupportedKind: If no inverse variant exists for ``known``.
        """
        if not known:
            return list(self.y_domains), [], [], list(self.theta)
        if len(known) == 1 and known[0] in self.known_variants:
            variant = self.known_variants[known[0]]
            return [variant.y_domain], [self.domains[known[0] - 1]], [], []
        raise UnsupportedKind(f"{self.spelling} has no inverse with known inputs {list(known)}")

    def supports_known(self, known: Tuple[int, ...], values: Sequence[Any]) -> bool:
        """Whether the reduced variant for ``known`` is valid for these constant values."""
        if len(known) != 1 or known[0] not in self.known_variants:
            return False
        accept = self.known_variants[known[0]].accept
        value = values[0]
        if is_tensor(value):
            return all(accept(float(v)) for v in value.flat)
        return accept(float(value))

    def specialize(self, dtypes: Sequence[Optional[str]]) -> "Primitive":
        """The variant of this primitive for inputs of the given type tags."""
        return self

    def result_dtype(self, dtypes: Sequence[Optional[str]]) -> Optional[str]:
        return self.specialize(dtypes).output_dtype

    def extras_for(self, known, known_values, x_shapes) -> List[Any]:
        return []

    def theta_shapes(self, known, x_shapes: Sequence[Shape], y_shapes: Sequence[Shape],
                     known_values: Sequence[Any]) -> List[Shape]:
        n_theta = len(self.inverse_signature(known)[3])
        shape = y_shapes[0] if y_shapes else ()
        return [shape] * n_theta

    def inverse_values(self, known, ys, knowns, extras, thetas) -> List[Any]:
        if not known:
            n = len(self.y_domains)
            return _lift(lambda *a: self.inverse1(a[:n], a[n:]), list(ys) + list(thetas),
                         self.n_in)
        variant = self.known_variants[known[0]]
        return _lift(lambda y, c: (variant.solve(y, c),), [ys[0], knowns[0]], 1)

    def inverse_joint(self, known, ys, knowns, extras) -> float:
        return 0.0

    def extract_values(self, known, xs, ys) -> List[Any]:
        if known:
            return []
        n_theta = len(self.theta)
        return _lift(lambda *a: tuple(self.extract1(a[:self.n_in], a[self.n_in:])),
                     list(xs) + list(ys), n_theta)


def _binary(name_, domains_, theta_, y_domains_=(REAL,), known_=None, **attrs):
    """Class decorator filling the common class attributes of binary primitives."""
    def wrap(cls):
        cls.name = name_
        cls.n_in, cls.n_out = 2, 1
        cls.domains = tuple(domains_)
        cls.theta = tuple(theta_)
        cls.y_domains = tuple(y_domains_)
        cls.known_variants = known_ or {}
        for k, v in attrs.items():
            setattr(cls, k, v)
        return cls
    return wrap


def _unary(name_, domain_, theta_, y_domain_=REAL):
    def wrap(cls):
        cls.name = name_
        cls.n_in, cls.n_out = 1, 1
        cls.domains = (domain_,)
        cls.theta = tuple(theta_)
        cls.y_domains = (y_domain_,)
        return cls
    return wrap


def _always(c: float) -> bool:
    return True


def _nonzero(c: float) -> bool:
    return abs(c) >= EPSILON


@_binary("add", (REAL, REAL), (REAL,), known_={
    1: KnownVariant(lambda y, c: y - c, REAL, _always),
    2: KnownVariant(lambda y, c: y - c, REAL, _always),
})
class Add(Primitive):
    """x1 + x2; inverse (y - θ, θ)."""

    def forward1(self, a, b):
        return (float(a) + float(b),)

    def inverse1(self, ys, th):
        return (ys[0] - th[0], th[0])

    def extract1(self, xs, ys):
        return (float(xs[1]),)


@_binary("sub", (REAL, REAL), (REAL,), known_={
    1: KnownVariant(lambda y, c: c - y, REAL, _always),
    2: KnownVariant(lambda y, c: y + c, REAL, _always),
})
class Sub(Primitive):
    """x1 - x2; inverse (y + θ, θ)."""

    def forward1(self, a, b):
        return (float(a) - float(b),)

    def inverse1(self, ys, th):
        return (ys[0] + th[0], th[0])

    def extract1(self, xs, ys):
        return (float(xs[1]),)


@_binary("mul", (REAL, REAL), (NONZERO, BOOL), known_={
    1: KnownVariant(lambda y, c: y / c, REAL, _nonzero),
    2: KnownVariant(lambda y, c: y / c, REAL, _nonzero),
})
class Mul(Primitive):
    """x1 * x2; inverse ([y/θ1, θ1]^θ2, [θ1, y/θ1]^θ2)."""

    def forward1(self, a, b):
        return (float(a) * float(b),)

    def inverse1(self, ys, th):
        y, t1, t2 = ys[0], th[0], th[1]
        if t2:
            return (y / t1, t1)
        return (t1, y / t1)

    def extract1(self, xs, ys):
        a, b = float(xs[0]), float(xs[1])
        if abs(b) >= EPSILON:
            return (b, 1.0)
        if abs(a) >= EPSILON:
            return (a, 0.0)
        # (0, 0) is the one preimage of y = 0 that no parameter reaches
        raise NotInDomain("mul: both factors are zero, no parameter reproduces them")


@_binary("div", (REAL, NONZERO), (NONZERO,), known_={
    1: KnownVariant(lambda y, c: c / y, NONZERO, _nonzero),
    2: KnownVariant(lambda y, c: y * c, REAL, _nonzero),
})
class Div(Primitive):
    """x1 / x2; inverse (y * θ, θ)."""

    def forward1(self, a, b):
        return (float(a) / float(b),)

    def inverse1(self, ys, th):
        return (ys[0] * th[0], th[0])

    def extract1(self, xs, ys):
        return (float(xs[1]),)


@_binary("pow", (POSITIVE, REAL), (POS_NOT_ONE, BOOL, REAL), (POSITIVE,), known_={
    1: KnownVariant(lambda y, c: _log(y) / _log(c), POSITIVE, POS_NOT_ONE.contains),
    2: KnownVariant(lambda y, c: _pow(y, 1.0 / c), POSITIVE, _nonzero),
})
class Pow(Primitive):
    """
    x1 ** x2 for a positive base.

    Inverse: with c = (y != 1) or θ2, returns (θ1, log(y)/log(θ1)) when c holds
    and (1, θ3) otherwise. The second branch covers base 1 with any exponent,
    which only maps to y = 1.
    """

    def forward1(self, a, b):
        return (_pow(float(a), float(b)),)

    def inverse1(self, ys, th):
        y, t1, t2, t3 = ys[0], th[0], th[1], th[2]
        if y != 1.0 or bool(t2):
            return (t1, _log(y) / _log(t1))
        return (1.0, t3)

    def extract1(self, xs, ys):
        a, b = float(xs[0]), float(xs[1])
        if a == 1.0:
            return (2.0, 0.0, b)
        if not POS_NOT_ONE.contains(a):
            raise NotInDomain(f"pow: base {a!r} lies inside the excluded band around 1")
        return (a, 1.0, 0.0)


@_binary("log", (POS_NOT_ONE, POSITIVE), (POS_NOT_ONE,), known_={
    1: KnownVariant(lambda y, c: _pow(c, y), REAL, POS_NOT_ONE.contains),
    2: KnownVariant(lambda y, c: _pow(c, 1.0 / y), NONZERO,
                    lambda c: POSITIVE.contains(c) and abs(c - 1.0) >= EPSILON),
})
class Log(Primitive):
    """Logarithm of x2 in base x1; inverse (θ, θ ** y)."""

    def forward1(self, a, b):
        return (_log(float(b)) / _log(float(a)),)

    def inverse1(self, ys, th):
        return (th[0], _pow(th[0], ys[0]))

    def extract1(self, xs, ys):
        return (float(xs[0]),)


@_unary("abs", REAL, (SIGN,), NONNEG)
class Abs(Primitive):
    """|x|; inverse θ * y with θ in {-1, 1}."""

    def forward1(self, x):
        return (abs(float(x)),)

    def inverse1(self, ys, th):
        return (th[0] * ys[0],)

    def extract1(self, xs, ys):
        return (1.0 if float(xs[0]) >= 0.0 else -1.0,)


@_unary("sqr", REAL, (SIGN,), NONNEG)
class Sqr(Primitive):
    """x * x; inverse θ * sqrt(y)."""

    def forward1(self, x):
        x = float(x)
        return (x * x,)

    def inverse1(self, ys, th):
        return (th[0] * math.sqrt(ys[0]),)

    def extract1(self, xs, ys):
        return (1.0 if float(xs[0]) >= 0.0 else -1.0,)


@_unary("neg", REAL, ())
class Neg(Primitive):
    def forward1(self, x):
        return (-float(x),)

    def inverse1(self, ys, th):
        return (-ys[0],)

    def extract1(self, xs, ys):
        return ()


@_unary("exp", REAL, (), POSITIVE)
class Exp(Primitive):
    def forward1(self, x):
        return (_exp(float(x)),)

    def inverse1(self, ys, th):
        return (_log(ys[0]),)

    def extract1(self, xs, ys):
        return ()


@_unary("cos", REAL, (INTEGERS,), UNIT_INTERVAL)
class Cos(Primitive):
    """cos x; inverse 2π·ceil(θ/2) + (-1)^θ · arccos(y)."""

    def forward1(self, x):
        return (math.cos(float(x)),)

    def inverse1(self, ys, th):
        t = int(th[0])
        return (TWO_PI * math.ceil(t / 2) + _sign_power(t) * math.acos(ys[0]),)

    def extract1(self, xs, ys):
        x = float(xs[0])
        k = math.floor(x / TWO_PI)
        r = x - TWO_PI * k
        return (float(2 * k) if r <= PI else float(2 * k + 1),)


@_unary("sin", REAL, (INTEGERS,), UNIT_INTERVAL)
class Sin(Primitive):
    """sin x; inverse πθ + (-1)^θ · arcsin(y)."""

    def forward1(self, x):
        return (math.sin(float(x)),)

    def inverse1(self, ys, th):
        t = int(th[0])
        return (PI * t + _sign_power(t) * math.asin(ys[0]),)

    def extract1(self, xs, ys):
        return (round_half_even(float(xs[0]) / PI),)


@_unary("tan", REAL, (INTEGERS,), REAL)
class Tan(Primitive):
    """tan x; inverse πθ + arctan(y)."""

    def forward1(self, x):
        return (math.tan(float(x)),)

    def inverse1(self, ys, th):
        return (PI * int(th[0]) + math.atan(ys[0]),)

    def extract1(self, xs, ys):
        return (round_half_even(float(xs[0]) / PI),)


class _Comparison(Primitive):
    scalar_only = True
    output_dtype = "bool"
    y_domains = (BOOL,)


@_binary("gt", (REAL, REAL), (REAL, POSITIVE), (BOOL,))
class Gt(_Comparison):
    """x1 > x2; inverse (θ1, [θ1 - θ2, θ1 + θ2]^y)."""

    def forward1(self, a, b):
        return (float(a) > float(b),)

    def inverse1(self, ys, th):
        t1, t2 = th
        return (t1, t1 - t2 if bool(ys[0]) else t1 + t2)

    def extract1(self, xs, ys):
        a, b = float(xs[0]), float(xs[1])
        gap = a - b if bool(ys[0]) else b - a
        if gap < EPSILON:
            raise NotInDomain(f"gt: operands {a!r}, {b!r} are tied within {EPSILON}")
        return (a, gap)


@_binary("lt", (REAL, REAL), (REAL, POSITIVE), (BOOL,))
class Lt(_Comparison):
    """x1 < x2; inverse (θ1, [θ1 + θ2, θ1 - θ2]^y)."""

    def forward1(self, a, b):
        return (float(a) < float(b),)

    def inverse1(self, ys, th):
        t1, t2 = th
        return (t1, t1 + t2 if bool(ys[0]) else t1 - t2)

    def extract1(self, xs, ys):
        a, b = float(xs[0]), float(xs[1])
        gap = b - a if bool(ys[0]) else a - b
        if gap < EPSILON:
            raise NotInDomain(f"lt: operands {a!r}, {b!r} are tied within {EPSILON}")
        return (a, gap)


@_binary("eq", (REAL, REAL), (REAL, NONZERO), (BOOL,))
class Eq(_Comparison):
    """x1 == x2; inverse (θ1, [θ1, θ1 + θ2]^y)."""

    def forward1(self, a, b):
        return (float(a) == float(b),)

    def inverse1(self, ys, th):
        t1, t2 = th
        return (t1, t1 if bool(ys[0]) else t1 + t2)

    def extract1(self, xs, ys):
        a, b = float(xs[0]), float(xs[1])
        if bool(ys[0]):
            return (a, 1.0)
        if abs(b - a) < EPSILON:
            raise NotInDomain(f"eq: operands {a!r}, {b!r} differ by less than {EPSILON}")
        return (a, b - a)


class _Logic(_Comparison):
    def extract1(self, xs, ys):
        return Primitive.extract1(self, xs, ys)


def derive_boolean_table(forward: Callable[[bool, bool], bool], n_theta: int = 2
                         ) -> Dict[Tuple[bool, Tuple[int, ...]], Tuple[bool, bool]]:
    """
    Derive a sound and complete inverse of a binary Boolean gate by enumeration.

    Preimages of each output are listed in ascending order and assigned to the
    parameter combinations in lexicographic order, cycling when there are more
    combinations than preimages.

    Raises:
        UnsupportedKind: If some output has more preimages than parameter combinations.
    """
    thetas = list(itertools.product((0, 1), repeat=n_theta))
    table = {}
    for y in (False, True):
        pre = [x for x in itertools.product((False, True), repeat=2) if forward(*x) == y]
        if len(pre) > len(thetas):
            raise UnsupportedKind(f"{len(pre)} preimages cannot be covered by {len(thetas)} parameters")
        for i, th in enumerate(thetas):
            table[(y, th)] = pre[i % len(pre)] if pre else None
    return table


# Frozen result of derive_boolean_table(lambda a, b: a or b)
OR_INVERSE_TABLE = {
    (False, (0, 0)): (False, False),
    (False, (0, 1)): (False, False),
    (False, (1, 0)): (False, False),
    (False, (1, 1)): (False, False),
    (True, (0, 0)): (False, True),
    (True, (0, 1)): (True, False),
    (True, (1, 0)): (True, True),
    (True, (1, 1)): (False, True),
}


@_binary("and", (BOOL, BOOL), (BOOL, BOOL), (BOOL,))
class And(_Logic):
    """x1 and x2; inverse ([y, θ1 ∧ θ2]^y, [y, θ1 ⊕ θ2]^y)."""

    def forward1(self, a, b):
        return (bool(a) and bool(b),)

    def inverse1(self, ys, th):
        if bool(ys[0]):
            return (True, True)
        t1, t2 = bool(th[0]), bool(th[1])
        return (t1 and t2, t1 != t2)


@_binary("or", (BOOL, BOOL), (BOOL, BOOL), (BOOL,))
class Or(_Logic):
    """x1 or x2; inverse read from OR_INVERSE_TABLE."""

    def forward1(self, a, b):
        return (bool(a) or bool(b),)

    def inverse1(self, ys, th):
        return OR_INVERSE_TABLE[(bool(ys[0]), (int(th[0]), int(th[1])))]


@_binary("xor", (BOOL, BOOL), (BOOL,), (BOOL,))
class Xor(_Logic):
    """x1 xor x2; inverse (θ, θ ⊕ y)."""

    def forward1(self, a, b):
        return (bool(a) != bool(b),)

    def inverse1(self, ys, th):
        t = bool(th[0])
        return (t, t != bool(ys[0]))

    def extract1(self, xs, ys):
        return (1.0 if bool(xs[0]) else 0.0,)


@_binary("min", (REAL, REAL), (NONNEG, BOOL))
class Min(Primitive):
    """min(x1, x2); inverse ([y, y + θ1]^θ2, [y + θ1, y]^θ2)."""

    def forward1(self, a, b):
        return (min(float(a), float(b)),)

    def inverse1(self, ys, th):
        y, gap = ys[0], th[0]
        if bool(th[1]):
            return (y, y + gap)
        return (y + gap, y)

    def extract1(self, xs, ys):
        a, b = float(xs[0]), float(xs[1])
        return (abs(a - b), 1.0 if a <= b else 0.0)


@_binary("max", (REAL, REAL), (NONNEG, BOOL))
class Max(Primitive):
    """max(x1, x2); inverse ([y, y - θ1]^θ2, [y - θ1, y]^θ2)."""

    def forward1(self, a, b):
        return (max(float(a), float(b)),)

    def inverse1(self, ys, th):
        y, gap = ys[0], th[0]
        if bool(th[1]):
            return (y, y - gap)
        return (y - gap, y)

    def extract1(self, xs, ys):
        a, b = float(xs[0]), float(xs[1])
        return (abs(a - b), 1.0 if a >= b else 0.0)


class Clip(Primitive):
    """
    clip_{a,b}(x) = max(a, min(b, x)).

    Inverse: y itself inside (a, b); a - θ when y = a; b + θ when y = b.
    """

    n_in, n_out = 1, 1
    domains = (REAL,)
    theta = (NONNEG,)

    def __init__(self, lo: float, hi: float):
        if not lo < hi:
            raise ParseError(f"clip bounds must satisfy a < b, got {lo!r}, {hi!r}")
        self.lo, self.hi = float(lo), float(hi)
        self.y_domains = (Interval(self.lo, self.hi),)

    @property
    def spelling(self):
        return f"clip:{_num(self.lo)}:{_num(self.hi)}"

    def forward1(self, x):
        return (max(self.lo, min(self.hi, float(x))),)

    def inverse1(self, ys, th):
        y = ys[0]
        if y == self.lo:
            return (y - th[0],)
        if y == self.hi:
            return (y + th[0],)
        return (y,)

    def extract1(self, xs, ys):
        x = float(xs[0])
        if x < self.lo:
            return (self.lo - x,)
        if x > self.hi:
            return (x - self.hi,)
        return (0.0,)


class Dupl(Primitive):
    """
    Fan-out: one input copied to ``n`` outputs.

    The inverse takes ``n`` values and returns their mean; the joint distance
    is the total disagreement with that mean.
    """

    n_in = 1
    domains = (ANY,)
    theta = ()
    elementwise = False

    def __init__(self, n: int):
        if n < 2:
            raise ParseError(f"dupl needs at least 2 outputs, got {n}")
        self.n = n
        self.n_out = n
        self.y_domains = (ANY,) * n

    @property
    def spelling(self):
        return f"dupl:{self.n}"

    def check_types(self, inputs):
        pass

    def _apply(self, inputs):
        x = inputs[0]
        return [x.copy() if is_tensor(x) else x for _ in range(self.n)]

    def infer_shapes(self, shapes, values):
        return [shapes[0]] * self.n

    def result_dtype(self, dtypes):
        return dtypes[0]

    def theta_shapes(self, known, x_shapes, y_shapes, known_values):
        return []

    def inverse_values(self, known, ys, knowns, extras, thetas):
        first = ys[0]
        if all(values_equal(first, v) for v in ys[1:]):
            return [first.copy() if is_tensor(first) else first]
        if any(is_tensor(v) for v in ys):
            shapes = {shape_of(v) for v in ys}
            if len(shapes) != 1:
                return [UNDEFINED]
            return [np.mean(np.stack([np.asarray(v, dtype=float) for v in ys]), axis=0)]
        return [math.fsum(float(v) for v in ys) / len(ys)]

    def inverse_joint(self, known, ys, knowns, extras):
        mean = self.inverse_values(known, ys, knowns, extras, [])[0]
        if mean is UNDEFINED:
            return math.inf
        return math.fsum(_distance(v, mean) for v in ys)

    def extract_values(self, known, xs, ys):
        return []


class Select(Primitive):
    """
    Functional if-then-else: ``[a, b]^c``.

    Inverse parameters (θv, θc): θc picks the branch that receives y, the
    other branch receives θv, and the condition output is θc. θv lives in the
    branch space, so ``select:bool`` (Boolean branches) has a Boolean θv.
    """

    name = "select"
    n_in, n_out = 3, 1
    elementwise = False

    def __init__(self, dtype: str = "real"):
        if dtype not in ("real", "bool"):
            raise ParseError(f"select branches are real or bool, got {dtype!r}")
        self.dtype = dtype
        if dtype == "bool":
            self.domains = (BOOL, BOOL, BOOL)
            self.theta = (BOOL, BOOL)
            self.y_domains = (BOOL,)
            self.output_dtype = "bool"
            self.scalar_only = True
        else:
            self.domains = (ANY, ANY, BOOL)
            self.theta = (REAL, BOOL)
            self.y_domains = (ANY,)

    @property
    def spelling(self):
        return "select" if self.dtype == "real" else "select:bool"

    def specialize(self, dtypes):
        if self.dtype == "real" and "bool" in dtypes[:2]:
            return Select("bool")
        return self

    def check_types(self, inputs):
        if is_tensor(inputs[2]):
            raise TypeMismatch("select condition must be a scalar")
        if self.dtype == "bool" and any(is_tensor(v) for v in inputs[:2]):
            raise TypeMismatch("select:bool branches must be scalars")

    def _apply(self, inputs):
        a, b, c = inputs
        return [a if bool(c) else b]

    def infer_shapes(self, shapes, values):
        if shapes[0] is not None and shapes[1] is not None and shapes[0] != shapes[1]:
            raise ShapeMismatch(f"select branches have shapes {shapes[0]} and {shapes[1]}")
        return [shapes[0] if shapes[0] is not None else shapes[1]]

    def theta_shapes(self, known, x_shapes, y_shapes, known_values):
        return [y_shapes[0], ()]

    def inverse_values(self, known, ys, knowns, extras, thetas):
        y, (tv, tc) = ys[0], thetas
        if self.dtype == "bool":
            tv = bool(tv)
        if bool(tc):
            return [y, tv, True]
        return [tv, y, False]

    def extract_values(self, known, xs, ys):
        a, b, c = xs
        other = b if bool(c) else a
        if self.dtype == "bool":
            other = 1.0 if bool(other) else 0.0
        elif not is_tensor(other):
            other = float(other)
        return [other, 1.0 if bool(c) else 0.0]


class GatherNd(Primitive):
    """
    ``x[ι]`` for a rank-1 tensor x and a constant rank-1 index vector ι.

    The inverse needs ι known; it scatters y back (averaging positions that ι
    names twice) and fills the positions ι never names from its parameter.
    """

    name = "gathernd"
    n_in, n_out = 2, 1
    domains = (REAL, ANY)
    elementwise = False

    def check_types(self, inputs):
        x, idx = inputs
        if not is_tensor(x) or x.ndim != 1:
            raise TypeMismatch("gathernd source must be a rank-1 tensor")
        if not is_tensor(idx):
            raise TypeMismatch("gathernd indices must be a tensor")

    def _apply(self, inputs):
        x, idx = inputs
        index = _as_index(idx)
        if index is None or np.any(index < 0) or np.any(index >= x.shape[0]):
            return [UNDEFINED]
        return [x[index].astype(float)]

    def infer_shapes(self, shapes, values):
        idx = values[1]
        if is_tensor(idx):
            return [(int(idx.shape[0]),)]
        if shapes[1] is not None and len(shapes[1]) == 1:
            return [shapes[1]]
        return [None]

    def inverse_signature(self, known):
        if tuple(known) != (2,):
            raise UnsupportedKind("gathernd is only invertible with constant indices")
        return [REAL], [ANY], [ANY], [REAL]

    def supports_known(self, known, values):
        return tuple(known) == (2,) and _as_index(values[0]) is not None

    def extras_for(self, known, known_values, x_shapes):
        if x_shapes[0] is None or len(x_shapes[0]) != 1:
            raise UnsupportedKind("gathernd inverse needs a known rank-1 source shape")
        return [np.array([float(x_shapes[0][0])])]

    @staticmethod
    def _layout(idx: Any, size: int):
        index = _as_index(idx)
        if index is None:
            return None, None
        named = sorted(set(int(i) for i in index))
        named_set = set(named)
        complement = [i for i in range(size) if i not in named_set]
        return index, complement

    def theta_shapes(self, known, x_shapes, y_shapes, known_values):
        size = x_shapes[0][0]
        _, complement = self._layout(known_values[0], size)
        return [(len(complement),)]

    def inverse_values(self, known, ys, knowns, extras, thetas):
        y, idx, sigma, theta = ys[0], knowns[0], extras[0], thetas[0]
        size = int(sigma[0])
        index, complement = self._layout(idx, size)
        if index is None or not is_tensor(y) or y.shape != index.shape:
            return [UNDEFINED]
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.shape[0] != len(complement) or np.any(index >= size) or np.any(index < 0):
            return [UNDEFINED]
        x = np.zeros(size)
        x[complement] = theta
        for pos in set(int(i) for i in index):
            x[pos] = np.mean(y[index == pos])
        return [x]

    def inverse_joint(self, known, ys, knowns, extras):
        y, idx = ys[0], knowns[0]
        index = _as_index(idx)
        if index is None or not is_tensor(y) or y.shape != index.shape:
            return math.inf
        total = 0.0
        for pos in set(int(i) for i in index):
            group = y[index == pos]
            if group.shape[0] > 1:
                total += float(np.sum(np.abs(group - np.mean(group))))
        return total

    def extract_values(self, known, xs, ys):
        x, idx = xs
        _, complement = self._layout(idx, x.shape[0])
        return [x[complement].astype(float)]


class Scatter(Primitive):
    """
    ``zeros(σ)`` with ``out[ι] = z``; ι must be constant and free of repeats
    for the inverse, which is a gather.
    """

    name = "scatter"
    n_in, n_out = 3, 1
    domains = (REAL, ANY, ANY)
    elementwise = False

    def check_types(self, inputs):
        if not all(is_tensor(v) for v in inputs):
            raise TypeMismatch("scatter inputs must be tensors")

    def _apply(self, inputs):
        z, idx, sigma = inputs
        index = _as_index(idx)
        shape = _as_index(sigma)
        if index is None or shape is None or shape.shape != (1,) or z.shape != index.shape:
            return [UNDEFINED]
        size = int(shape[0])
        if np.any(index < 0) or np.any(index >= size):
            return [UNDEFINED]
        out = np.zeros(size)
        out[index] = z
        return [out]

    def infer_shapes(self, shapes, values):
        sigma = values[2]
        if is_tensor(sigma) and sigma.shape == (1,):
            return [(int(sigma[0]),)]
        return [None]

    def inverse_signature(self, known):
        if tuple(known) != (2, 3):
            raise UnsupportedKind("scatter is only invertible with constant indices and shape")
        return [REAL], [ANY, ANY], [], []

    def supports_known(self, known, values):
        if tuple(known) != (2, 3):
            return False
        index = _as_index(values[0])
        if index is None or len(set(index.tolist())) != index.shape[0]:
            raise UnsupportedKind("scatter with repeated indices is not invertible")
        return True

    def theta_shapes(self, known, x_shapes, y_shapes, known_values):
        return []

    def inverse_values(self, known, ys, knowns, extras, thetas):
        y, idx = ys[0], knowns[0]
        index = _as_index(idx)
        if index is None or not is_tensor(y) or y.ndim != 1:
            return [UNDEFINED]
        if np.any(index < 0) or np.any(index >= y.shape[0]):
            return [UNDEFINED]
        return [y[index].astype(float)]

    def inverse_joint(self, known, ys, knowns, extras):
        y, idx = ys[0], knowns[0]
        index = _as_index(idx)
        if index is None or not is_tensor(y):
            return math.inf
        mask = np.ones(y.shape[0], dtype=bool)
        mask[index[(index >= 0) & (index < y.shape[0])]] = False
        return float(np.linalg.norm(y[mask]))

    def extract_values(self, known, xs, ys):
        return []


class Reshape(Primitive):
    """Reshape to the constant shape σ; ``σ = []`` yields a scalar."""

    name = "reshape"
    n_in, n_out = 2, 1
    domains = (REAL, ANY)
    elementwise = False

    def check_types(self, inputs):
        if not is_tensor(inputs[1]):
            raise TypeMismatch("reshape target shape must be a tensor")

    def _apply(self, inputs):
        x, sigma = inputs
        shape = _as_index(sigma)
        if shape is None:
            return [UNDEFINED]
        arr = np.asarray(x, dtype=float)
        if int(np.prod(shape)) != arr.size:
            return [UNDEFINED]
        if shape.shape[0] == 0:
            return [float(arr.reshape(()))]
        return [arr.reshape(tuple(int(d) for d in shape))]

    def infer_shapes(self, shapes, values):
        shape = _as_index(values[1]) if is_tensor(values[1]) else None
        if shape is None:
            return [None]
        out = tuple(int(d) for d in shape)
        if shapes[0] is not None and int(np.prod(out)) != int(np.prod(shapes[0])):
            raise ShapeMismatch(f"cannot reshape {shapes[0]} to {out}")
        return [out]

    def inverse_signature(self, known):
        if tuple(known) != (2,):
            raise UnsupportedKind("reshape is only invertible with a constant shape")
        return [REAL], [ANY], [ANY], []

    def supports_known(self, known, values):
        return tuple(known) == (2,) and _as_index(values[0]) is not None

    def extras_for(self, known, known_values, x_shapes):
        if x_shapes[0] is None:
            raise UnsupportedKind("reshape inverse needs a known source shape")
        return [np.array([float(d) for d in x_shapes[0]])]

    def theta_shapes(self, known, x_shapes, y_shapes, known_values):
        return []

    def inverse_values(self, known, ys, knowns, extras, thetas):
        return self._apply([ys[0], extras[0]])

    def extract_values(self, known, xs, ys):
        return []


# ---------------------------------------------------------------------------
# Inverse operators and contractions
# ---------------------------------------------------------------------------

class InverseOperator(Operator):
    """The (possibly constant-reduced) parametric inverse of a forward primitive."""

    def __init__(self, base: Primitive, known: Tuple[int, ...] = ()):
        self.base = base
        self.known = tuple(sorted(known))
        y_doms, k_doms, e_doms, t_spaces = base.inverse_signature(self.known)
        self.y_domains = y_doms
        self.known_domains = k_doms
        self.extra_domains = e_doms
        self.theta_spaces = t_spaces
        self.n_y = len(y_doms)
        self.n_known = len(k_doms)
        self.n_extra = len(e_doms)
        self.n_theta = len(t_spaces)
        self.n_in = self.n_y + self.n_known + self.n_extra + self.n_theta
        self.n_out = base.n_in - len(self.known)
        suffix = "/k" + ",".join(str(k) for k in self.known) if self.known else ""
        self.spelling = f"inv:{base.spelling}{suffix}"

    def input_domains(self):
        return self.y_domains + self.known_domains + self.extra_domains + self.theta_spaces

    @property
    def theta_offset(self) -> int:
        """Index of the first parameter port among the inputs (0-based)."""
        return self.n_y + self.n_known + self.n_extra

    def output_slots(self) -> List[int]:
        """Forward input slots (1-based) that this operator produces, in order."""
        return [i for i in range(1, self.base.n_in + 1) if i not in self.known]

    def _split(self, inputs):
        a = self.n_y
        b = a + self.n_known
        c = b + self.n_extra
        return list(inputs[:a]), list(inputs[a:b]), list(inputs[b:c]), list(inputs[c:])

    def check_types(self, inputs):
        ys, knowns, extras, thetas = self._split(inputs)
        if self.base.scalar_only and any(is_tensor(v) for v in ys + thetas):
            raise TypeMismatch(f"{self.spelling} takes scalar values")

    def _apply(self, inputs):
        ys, knowns, extras, thetas = self._split(inputs)
        return self.base.inverse_values(self.known, ys, knowns, extras, thetas)

    def joint_distance(self, inputs):
        ys, knowns, extras, _ = self._split(inputs)
        return self.base.inverse_joint(self.known, ys, knowns, extras)

    def extract(self, xs: Sequence[Any], ys: Sequence[Any]) -> List[Any]:
        """Parameters that make this operator reproduce the forward inputs ``xs``."""
        return self.base.extract_values(self.known, list(xs), list(ys))


class Contraction(Operator):
    """Total map onto a space; identity on its members."""

    n_in, n_out = 1, 1

    def __init__(self, space: ParamSpace):
        self.space = space
        self.spelling = f"contract:{space.code}"

    def input_domains(self):
        return [ANY]

    def evaluate(self, inputs):
        self.check_arity(inputs)
        return [self.space.contract(inputs[0])]

    def tap(self, value: Any) -> float:
        """Distance of the raw input to the target space."""
        return self.space.distance_to(value)

    def domain_distance(self, inputs):
        self.check_arity(inputs)
        return 0.0

    def infer_shapes(self, shapes, values):
        return [shapes[0]]


# ---------------------------------------------------------------------------
# Registry and kind-level API
# ---------------------------------------------------------------------------

_SIMPLE_PRIMITIVES = {
    cls.name: cls for cls in (
        Add, Sub, Mul, Div, Pow, Log, Abs, Sqr, Neg, Exp, Cos, Sin, Tan,
        Gt, Lt, Eq, And, Or, Xor, Min, Max, Select, GatherNd, Scatter, Reshape,
    )
}

PRIMITIVE_NAMES = sorted(list(_SIMPLE_PRIMITIVES) + ["dupl", "clip"])


def _parse_float(text: str, spelling: str) -> float:
    try:
        return float(text)
    except ValueError as e:
        raise ParseError(f"invalid number {text!r} in kind {spelling!r}") from e


def _parse_primitive(spelling: str) -> Primitive:
    head, *params = spelling.split(":")
    if head == "select" and params:
        if len(params) != 1:
            raise ParseError(f"select takes one branch type: {spelling!r}")
        return Select(params[0])
    if head in _SIMPLE_PRIMITIVES:
        if params:
            raise ParseError(f"kind {head!r} takes no parameters: {spelling!r}")
        return _SIMPLE_PRIMITIVES[head]()
    if head == "dupl":
        if len(params) != 1 or not params[0].isdigit():
            raise ParseError(f"dupl needs one integer parameter: {spelling!r}")
        return Dupl(int(params[0]))
    if head == "clip":
        if len(params) != 2:
            raise ParseError(f"clip needs two bounds: {spelling!r}")
        return Clip(_parse_float(params[0], spelling), _parse_float(params[1], spelling))
    raise ParseError(f"unknown op kind {spelling!r}")


@lru_cache(maxsize=None)
def resolve(kind: str) -> Operator:
    """
    Turn a kind spelling into its operator.

    Raises:
        ParseError: If the spelling names no known kind.
    """
    if kind.startswith("inv:"):
        body, _, known_text = kind[4:].partition("/k")
        known: Tuple[int, ...] = ()
        if known_text:
            try:
                known = tuple(int(k) for k in known_text.split(","))
            except ValueError as e:
                raise ParseError(f"invalid known-slot list in {kind!r}") from e
        base = _parse_primitive(body)
        if any(k < 1 or k > base.n_in for k in known):
            raise ParseError(f"known slot out of range in {kind!r}")
        try:
            return InverseOperator(base, known)
        except UnsupportedKind as e:
            raise ParseError(f"{kind!r}: {e}") from e
    if kind.startswith("contract:"):
        return Contraction(parse_space(kind[len("contract:"):]))
    return _parse_primitive(kind)


def _operator(kind: Any) -> Operator:
    if isinstance(kind, Operator):
        return kind
    return resolve(str(kind))


def inverse_of(kind: Any, known: Sequence[int] = ()) -> InverseOperator:
    """The inverse operator of a forward kind (optionally with known input slots)."""
    op = _operator(kind)
    if isinstance(op, InverseOperator):
        return op
    if not isinstance(op, Primitive):
        raise UnsupportedKind(f"{op.spelling} has no parametric inverse")
    return InverseOperator(op, tuple(known))


def forward_eval(kind: Any, inputs: Sequence[Any]) -> List[Any]:
    """
    Evaluate any operator on concrete inputs.

    Raises:
        ArityMismatch, TypeMismatch
    """
    op = _operator(kind)
    return op.evaluate([check_value(v, f"{op.spelling} input") for v in inputs])


def inverse_eval(kind: Any, y: Sequence[Any], theta: Sequence[Any],
                 constants: Optional[Dict[int, Any]] = None,
                 extras: Sequence[Any] = ()) -> List[Any]:
    """
    Evaluate the parametric inverse of ``kind`` at ``y`` with parameters ``theta``.

    Args:
        kind: Forward kind (or an inverse spelling).
        y: Forward output values.
        theta: One value per parameter port.
        constants: Known forward inputs by 1-based slot, selecting a reduced variant.
        extras: Extra constants the reduced variant needs (gathernd/reshape shapes).

    Returns:
        The forward inputs selected by ``theta`` (only the unknown ones for reduced
        variants), or undefined values.

    Raises:
        ArityMismatch: If ``y`` or ``theta`` has the wrong length.
    """
    constants = constants or {}
    inv = inverse_of(kind, tuple(sorted(constants)))
    if len(y) != inv.n_y:
        raise ArityMismatch(f"{inv.spelling} expects {inv.n_y} outputs, got {len(y)}")
    if len(theta) != inv.n_theta:
        raise ArityMismatch(f"{inv.spelling} expects {inv.n_theta} parameters, got {len(theta)}")
    knowns = [constants[k] for k in inv.known]
    return inv.evaluate([check_value(v) for v in list(y) + knowns + list(extras) + list(theta)])


def extract_theta(kind: Any, x: Sequence[Any], y: Sequence[Any],
                  known: Sequence[int] = ()) -> List[Any]:
    """
    Parameters under which the inverse of ``kind`` maps ``y`` back to ``x``.

    Raises:
        NotInDomain: If ``y`` is not the forward image of ``x``.
    """
    inv = inverse_of(kind, tuple(known))
    x = [check_value(v) for v in x]
    y = [check_value(v) for v in y]
    expected = inv.base.evaluate(x)
    if len(expected) != len(y) or not all(_approx_equal(a, b) for a, b in zip(expected, y)):
        raise NotInDomain(f"{inv.base.spelling}: {y} is not the image of {x}")
    return inv.extract(x, y)


def domain_distance(kind: Any, inputs: Sequence[Any]) -> float:
    """Distance of ``inputs`` to the domain of ``kind`` (0 iff inside)."""
    op = _operator(kind)
    return op.domain_distance([check_value(v) for v in inputs])


def theta_spaces(kind: Any, known: Sequence[int] = ()) -> List[ParamSpace]:
    """Parameter spaces of the inverse of ``kind``, one per parameter port."""
    return list(inverse_of(kind, tuple(known)).theta_spaces)
