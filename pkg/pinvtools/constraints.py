"""
Parameter reduction.

:func:`collect` interprets an inverse program symbolically, in evaluation
order, and records its constraints: the space of every parameter slot,
equalities that the program silently averages over (``dupl`` inverses,
repeated gather indices, scatter positions that must be zero, residual
outputs that must reproduce constants) and the input domains of every op.

:func:`eliminate` solves equalities for continuous parameter slots, replaces
each solved slot by ops computing its solution and removes it from the
layout. Solving is limited to isolation through invertible wrappers
(negation, constant offsets and factors, exp/log) and to expressions affine
in the slot with a constant coefficient.

Symbols are elements of inverse-graph inputs: ``Sym(node, k)`` is flat
element ``k`` of input node ``node``. Values computed by ops the solver does
not look into are opaque ``Apply`` references to the node holding them.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .graph import GraphBuilder, Role
from .inversion import InverseProgram, ThetaLayout, ThetaPort
from .primitives import Contraction, InverseOperator
from .totalization import cover_inputs
from .spaces import ANY, REAL, ParamSpace
from .values import is_tensor
from .utils.logger import get_logger

logger = get_logger("constraints")

# Coefficients smaller than this are not divided by
COEF_TOLERANCE = 1e-12


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------

class Expr:
    """Base class of symbolic expressions."""


@dataclass(frozen=True)
class Const(Expr):
    value: float


@dataclass(frozen=True)
class Sym(Expr):
    node: int
    k: int


@dataclass(frozen=True)
class Add(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Mul(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Div(Expr):
    a: Expr
    b: Expr


@dataclass(frozen=True)
class Neg(Expr):
    a: Expr


@dataclass(frozen=True)
class Exp(Expr):
    a: Expr


@dataclass(frozen=True)
class Log(Expr):
    a: Expr


@dataclass(frozen=True)
class Apply(Expr):
    """
    Element ``k`` of the value held by graph node ``node``, computed by ``kind``.

    ``deps`` are the symbols it depends on; ``ports`` the parameter input nodes
    upstream of ``node`` in the graph.
    """

    kind: str
    node: int
    k: int
    deps: FrozenSet[Sym] = field(default_factory=frozenset)
    ports: FrozenSet[int] = field(default_factory=frozenset)


def symbols(e: Expr) -> FrozenSet[Sym]:
    if isinstance(e, Sym):
        return frozenset((e,))
    if isinstance(e, Const):
        return frozenset()
    if isinstance(e, Apply):
        return e.deps
    if isinstance(e, (Add, Mul, Div)):
        return symbols(e.a) | symbols(e.b)
    return symbols(e.a)


def applies(e: Expr) -> List[Apply]:
    if isinstance(e, Apply):
        return [e]
    if isinstance(e, (Add, Mul, Div)):
        return applies(e.a) + applies(e.b)
    if isinstance(e, (Neg, Exp, Log)):
        return applies(e.a)
    return []


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if isinstance(a, Const) and a.value == 0.0:
        return b
    if isinstance(b, Const) and b.value == 0.0:
        return a
    return Add(a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.a
    return Neg(a)


def sub(a: Expr, b: Expr) -> Expr:
    return add(a, neg(b))


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if isinstance(a, Const) and a.value == 1.0:
        return b
    if isinstance(b, Const) and b.value == 1.0:
        return a
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(b, Const) and b.value == 1.0:
        return a
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0.0:
        return Const(a.value / b.value)
    return Div(a, b)


def substitute(e: Expr, subst: Mapping[Sym, Expr]) -> Expr:
    """Replace symbols by expressions (opaque references only update their deps)."""
    if not subst:
        return e
    if isinstance(e, Sym):
        return subst.get(e, e)
    if isinstance(e, Const):
        return e
    if isinstance(e, Apply):
        hit = e.deps & frozenset(subst)
        if not hit:
            return e
        deps = e.deps - hit
        for s in hit:
            deps = deps | symbols(subst[s])
        return Apply(e.kind, e.node, e.k, frozenset(deps), e.ports)
    if isinstance(e, Add):
        return add(substitute(e.a, subst), substitute(e.b, subst))
    if isinstance(e, Mul):
        return mul(substitute(e.a, subst), substitute(e.b, subst))
    if isinstance(e, Div):
        return div(substitute(e.a, subst), substitute(e.b, subst))
    if isinstance(e, Neg):
        return neg(substitute(e.a, subst))
    if isinstance(e, Exp):
        return Exp(substitute(e.a, subst))
    return Log(substitute(e.a, subst))


def evaluate_expr(e: Expr, env: Mapping[int, Any]) -> float:
    """Numeric value of an expression given node values by id."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, (Sym, Apply)):
        v = env[e.node]
        return float(np.asarray(v, dtype=float).reshape(-1)[e.k]) if is_tensor(v) else float(v)
    if isinstance(e, Add):
        return evaluate_expr(e.a, env) + evaluate_expr(e.b, env)
    if isinstance(e, Mul):
        return evaluate_expr(e.a, env) * evaluate_expr(e.b, env)
    if isinstance(e, Div):
        return evaluate_expr(e.a, env) / evaluate_expr(e.b, env)
    if isinstance(e, Neg):
        return -evaluate_expr(e.a, env)
    if isinstance(e, Exp):
        return math.exp(evaluate_expr(e.a, env))
    return math.log(evaluate_expr(e.a, env))


def render(e: Expr, names: Optional[Mapping[int, str]] = None) -> str:
    """Human-readable form of an expression."""
    names = names or {}

    def ref(node: int, k: int) -> str:
        base = names.get(node, f"v{node}")
        return f"{base}[{k}]" if k else base

    if isinstance(e, Const):
        return repr(e.value)
    if isinstance(e, Sym):
        return ref(e.node, e.k)
    if isinstance(e, Apply):
        return f"{e.kind}@{ref(e.node, e.k)}"
    if isinstance(e, Add):
        return f"({render(e.a, names)} + {render(e.b, names)})"
    if isinstance(e, Mul):
        return f"({render(e.a, names)} * {render(e.b, names)})"
    if isinstance(e, Div):
        return f"({render(e.a, names)} / {render(e.b, names)})"
    if isinstance(e, Neg):
        return f"-{render(e.a, names)}"
    if isinstance(e, Exp):
        return f"exp({render(e.a, names)})"
    return f"log({render(e.a, names)})"


# ---------------------------------------------------------------------------
# Constraints
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Constraint:
    """
    ``lhs == rhs`` (relation ``eq``) or ``lhs in space`` (relation ``in``).

    ``origin`` is the inverse op (or parameter node) the constraint comes from;
    ``source`` says why it exists.
    """

    relation: str
    lhs: Expr
    rhs: Optional[Expr] = None
    space: Optional[ParamSpace] = None
    origin: int = 0
    source: str = ""

    @property
    def is_eq(self) -> bool:
        return self.relation == "eq"

    def to_dict(self, names: Optional[Mapping[int, str]] = None) -> Dict[str, Any]:
        d = {"relation": self.relation, "source": self.source, "origin": self.origin,
             "lhs": render(self.lhs, names)}
        if self.is_eq:
            d["rhs"] = render(self.rhs, names)
        else:
            d["space"] = self.space.code
        return d


def _size(shape: Tuple[int, ...]) -> int:
    return int(np.prod(shape)) if shape else 1


def _pick(exprs: List[Expr], k: int) -> Expr:
    return exprs[0] if len(exprs) == 1 else exprs[k]


def _elementwise_rule(spelling: str, args: List[Expr]) -> Optional[List[Expr]]:
    """Exact symbolic outputs for the inverse and forward kinds the solver understands."""
    head = spelling
    if head == "inv:add":
        y, t = args
        return [sub(y, t), t]
    if head == "inv:sub":
        y, t = args
        return [add(y, t), t]
    if head == "inv:div":
        y, t = args
        return [mul(y, t), t]
    if head in ("inv:add/k1", "inv:add/k2", "inv:sub/k2"):
        y, c = args
        return [sub(y, c)] if head != "inv:sub/k2" else [add(y, c)]
    if head == "inv:sub/k1":
        y, c = args
        return [sub(c, y)]
    if head in ("inv:mul/k1", "inv:mul/k2"):
        y, c = args
        return [div(y, c)]
    if head == "inv:div/k1":
        y, c = args
        return [div(c, y)]
    if head == "inv:div/k2":
        y, c = args
        return [mul(y, c)]
    if head in ("inv:neg", "neg"):
        return [neg(args[0])]
    if head == "inv:exp":
        return [Log(args[0])]
    if head == "exp":
        return [Exp(args[0])]
    if head == "add":
        return [add(args[0], args[1])]
    if head == "sub":
        return [sub(args[0], args[1])]
    if head == "mul":
        return [mul(args[0], args[1])]
    if head == "div":
        return [div(args[0], args[1])]
    return None


class _Interpreter:
    """Symbolic evaluation of an inverse graph."""

    def __init__(self, ip: InverseProgram):
        self.ip = ip
        self.g = ip.graph
        self.env: Dict[int, List[Expr]] = {}
        self.ports: Dict[int, FrozenSet[int]] = {}
        self.constraints: List[Constraint] = []

    def shape(self, node: int) -> Tuple[int, ...]:
        return tuple(self.ip.shapes.get(node, ()))

    def run(self) -> None:
        layout = self.ip.layout
        for node in self.g.nodes.values():
            if node.is_op:
                continue
            if node.role is Role.INPUT:
                size = _size(self.shape(node.id))
                self.env[node.id] = [Sym(node.id, k) for k in range(size)]
                is_port = layout.port_for_node(node.id) is not None
                self.ports[node.id] = frozenset((node.id,)) if is_port else frozenset()
            elif node.role is Role.CONSTANT:
                flat = np.asarray(node.value, dtype=float).reshape(-1)
                self.env[node.id] = [Const(float(v)) for v in flat]
                self.ports[node.id] = frozenset()
        for op_id in self.g.topo_order():
            self.step(op_id)
        for name, expected in sorted(self.ip.residuals.items()):
            node = self.g.find_output(name)
            flat = np.asarray(expected, dtype=float).reshape(-1)
            producer = self.g.producer(node.id).node
            for k, e in enumerate(self.env[node.id]):
                self.constraints.append(
                    Constraint("eq", e, Const(float(flat[k])), origin=producer, source="residual")
                )

    def step(self, op_id: int) -> None:
        node = self.g.node(op_id)
        op = node.op
        ins = self.g.op_inputs(op_id)
        outs = self.g.op_outputs(op_id)
        args = [self.env[v] for v in ins]
        ports = frozenset().union(*[self.ports[v] for v in ins]) if ins else frozenset()
        for v in outs:
            self.ports[v] = ports

        if isinstance(op, Contraction):
            self.env[outs[0]] = list(args[0])
            return

        self._domain_constraints(op_id, op, ins, args)

        if isinstance(op, InverseOperator) and op.base.spelling.startswith("dupl:"):
            first = args[0]
            for other in args[1:]:
                for k, (a, b) in enumerate(zip(first, other)):
                    self.constraints.append(Constraint("eq", a, b, origin=op_id, source="dupl"))
            n = len(args)
            mean = []
            for k in range(len(first)):
                total: Expr = Const(0.0)
                for a in args:
                    total = add(total, a[k])
                mean.append(mul(Const(1.0 / n), total))
            self.env[outs[0]] = mean
            return

        if isinstance(op, InverseOperator) and op.spelling == "inv:gathernd/k2":
            self._gather_constraints(op_id, ins, args)
        if isinstance(op, InverseOperator) and op.spelling == "inv:scatter/k2,3":
            self._scatter_constraints(op_id, ins, args)

        size = max(len(a) for a in args) if args else 1
        out_size = _size(self.shape(outs[0]))
        elementwise = getattr(getattr(op, "base", op), "elementwise", False)
        if elementwise and out_size == size:
            results: List[List[Expr]] = [[] for _ in outs]
            for k in range(size):
                elem = [_pick(a, k) for a in args]
                exact = _elementwise_rule(node.kind, elem)
                if exact is None:
                    deps = frozenset().union(*[symbols(e) for e in elem])
                    exact = [Apply(node.kind, v, k, deps, ports) for v in outs]
                for r, e in zip(results, exact):
                    r.append(e)
            for v, r in zip(outs, results):
                self.env[v] = r
            return

        deps = frozenset().union(*[symbols(e) for a in args for e in a]) if args else frozenset()
        for v in outs:
            self.env[v] = [Apply(node.kind, v, k, deps, ports)
                           for k in range(_size(self.shape(v)))]

    def _domain_constraints(self, op_id, op, ins, args) -> None:
        for v, dom, exprs in zip(ins, op.input_domains(), args):
            if dom in (ANY, REAL):
                continue
            src = self.g.node(v)
            if not src.is_op and src.role in (Role.CONSTANT,):
                continue
            if not src.is_op and self.ip.layout.port_for_node(v) is not None:
                continue
            for e in exprs:
                self.constraints.append(Constraint("in", e, space=dom, origin=op_id,
                                                   source="domain"))

    def _gather_constraints(self, op_id, ins, args) -> None:
        y, idx = args[0], self.g.node(ins[1]).value
        first: Dict[int, int] = {}
        for j, i in enumerate(np.asarray(idx, dtype=int).reshape(-1).tolist()):
            if i in first:
                self.constraints.append(
                    Constraint("eq", y[first[i]], y[j], origin=op_id, source="gathernd")
                )
            else:
                first[i] = j

    def _scatter_constraints(self, op_id, ins, args) -> None:
        y, idx = args[0], self.g.node(ins[1]).value
        named = set(np.asarray(idx, dtype=int).reshape(-1).tolist())
        for j, e in enumerate(y):
            if j not in named:
                self.constraints.append(Constraint("eq", e, Const(0.0), origin=op_id,
                                                   source="scatter"))


def collect(ip: InverseProgram) -> List[Constraint]:
    """
    Constraints of an inverse program, in a deterministic order.

    First one membership constraint per parameter slot (layout order), then,
    in evaluation order, the equalities and domain memberships of each op,
    then residual-output equalities.
    """
    out = []
    for p in ip.layout.ports:
        for k in range(p.size):
            out.append(Constraint("in", Sym(p.node, k), space=p.space, origin=p.node,
                                  source="theta"))
    interp = _Interpreter(ip)
    interp.run()
    out.extend(interp.constraints)
    logger.debug(f"Collected {len(out)} constraints "
                 f"({sum(1 for c in out if c.is_eq)} equalities)")
    return out


# ---------------------------------------------------------------------------
# Solving
# ---------------------------------------------------------------------------

def _isolate(e: Expr, r: Expr, s: Sym) -> Optional[Expr]:
    while True:
        if e == s:
            return r
        if isinstance(e, Neg):
            e, r = e.a, neg(r)
        elif isinstance(e, Add):
            in_a, in_b = s in symbols(e.a), s in symbols(e.b)
            if in_a and not in_b:
                e, r = e.a, sub(r, e.b)
            elif in_b and not in_a:
                e, r = e.b, sub(r, e.a)
            else:
                return None
        elif isinstance(e, Mul):
            if isinstance(e.b, Const) and abs(e.b.value) > COEF_TOLERANCE:
                e, r = e.a, div(r, e.b)
            elif isinstance(e.a, Const) and abs(e.a.value) > COEF_TOLERANCE:
                e, r = e.b, div(r, e.a)
            else:
                return None
        elif isinstance(e, Div):
            if isinstance(e.b, Const) and abs(e.b.value) > COEF_TOLERANCE:
                e, r = e.a, mul(r, e.b)
            else:
                return None
        elif isinstance(e, Exp):
            e, r = e.a, Log(r)
        elif isinstance(e, Log):
            e, r = e.a, Exp(r)
        else:
            return None


def _affine(e: Expr, s: Sym) -> Optional[Tuple[float, Expr]]:
    """Write ``e`` as ``coef * s + rest`` with a constant coefficient."""
    if e == s:
        return 1.0, Const(0.0)
    if s not in symbols(e):
        return 0.0, e
    if isinstance(e, Add):
        a, b = _affine(e.a, s), _affine(e.b, s)
        if a is None or b is None:
            return None
        return a[0] + b[0], add(a[1], b[1])
    if isinstance(e, Neg):
        a = _affine(e.a, s)
        return None if a is None else (-a[0], neg(a[1]))
    if isinstance(e, Mul):
        for x, c in ((e.a, e.b), (e.b, e.a)):
            if isinstance(c, Const):
                a = _affine(x, s)
                return None if a is None else (a[0] * c.value, mul(a[1], c))
        return None
    if isinstance(e, Div) and isinstance(e.b, Const) and e.b.value != 0.0:
        a = _affine(e.a, s)
        return None if a is None else (a[0] / e.b.value, div(a[1], e.b))
    return None


def solve_for(lhs: Expr, rhs: Expr, s: Sym) -> Optional[Expr]:
    """
    An expression for ``s`` from ``lhs == rhs``, or None if outside the solvable fragment.
    """
    in_l, in_r = s in symbols(lhs), s in symbols(rhs)
    if in_l and not in_r:
        sol = _isolate(lhs, rhs, s)
    elif in_r and not in_l:
        sol = _isolate(rhs, lhs, s)
    else:
        sol = None
    if sol is None and (in_l or in_r):
        lin = _affine(sub(lhs, rhs), s)
        if lin is not None and abs(lin[0]) > COEF_TOLERANCE:
            sol = mul(Const(-1.0 / lin[0]), lin[1])
    if sol is not None and s in symbols(sol):
        return None
    return sol


@dataclass
class ReductionReport:
    """What :func:`eliminate` did."""

    slots_before: int
    slots_after: int
    eliminated: List[Dict[str, Any]] = field(default_factory=list)
    constraints: List[Dict[str, Any]] = field(default_factory=list)
    remaining_equalities: List[Dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "slots_before": self.slots_before,
            "slots_after": self.slots_after,
            "eliminated": self.eliminated,
            "remaining_equalities": self.remaining_equalities,
            "constraints": self.constraints,
        }


def _node_names(ip: InverseProgram) -> Dict[int, str]:
    return {n.id: n.name for n in ip.graph.nodes.values()
            if not n.is_op and n.name is not None}


class _Materializer:
    """Turns solved expressions into ops of the inverse graph."""

    def __init__(self, ip: InverseProgram, b: GraphBuilder, shapes: Dict[int, Tuple[int, ...]],
                 replaced: Dict[int, Tuple[int, List[int]]]):
        self.ip = ip
        self.b = b
        self.shapes = shapes
        self.replaced = replaced
        self.memo: Dict[Expr, int] = {}

    def _const(self, value: Any) -> int:
        node = self.b.constant(value)
        self.shapes[node] = tuple(np.shape(value))
        return node

    def _apply(self, kind: str, *inputs: int, shape: Tuple[int, ...] = ()) -> int:
        out = self.b.apply(kind, *inputs)
        self.shapes[out] = shape
        return out

    def element(self, node: int, k: int) -> int:
        if node in self.replaced:
            node, kept = self.replaced[node]
            k = kept.index(k)
        shape = tuple(self.shapes.get(node, ()))
        if not shape:
            return node
        picked = self._apply("gathernd", node, self._const(np.array([float(k)])), shape=(1,))
        return self._apply("reshape", picked, self._const(np.array([])))

    def __call__(self, e: Expr) -> int:
        if e in self.memo:
            return self.memo[e]
        if isinstance(e, Const):
            out = self._const(float(e.value))
        elif isinstance(e, (Sym, Apply)):
            out = self.element(e.node, e.k)
        elif isinstance(e, Add):
            out = self._apply("add", self(e.a), self(e.b))
        elif isinstance(e, Mul):
            out = self._apply("mul", self(e.a), self(e.b))
        elif isinstance(e, Div):
            out = self._apply("div", self(e.a), self(e.b))
        elif isinstance(e, Neg):
            out = self._apply("neg", self(e.a))
        elif isinstance(e, Exp):
            out = self._apply("exp", self(e.a))
        else:
            out = self._apply("log", self._const(math.e), self(e.a))
        self.memo[e] = out
        return out


def eliminate(ip: InverseProgram, constraints: Optional[Sequence[Constraint]] = None
              ) -> InverseProgram:
    """
    Remove parameter slots fixed by equality constraints.

    Unsolvable constraints are left in place. The result carries the original
    layout and, for every eliminated slot, the node computing it, so that
    :func:`recover_full_theta` can rebuild the full parameter vector. Reducing
    a totalized program contracts the inputs of the new ops, so the result is
    total as well.
    """
    return reduce_program(ip, constraints)[0]


def reduce_program(ip: InverseProgram, constraints: Optional[Sequence[Constraint]] = None
                   ) -> Tuple[InverseProgram, ReductionReport]:
    """:func:`eliminate` plus a report of the collected and solved constraints."""
    names = _node_names(ip)
    if constraints is None:
        constraints = collect(ip)
    report = ReductionReport(ip.layout.total, ip.layout.total,
                             constraints=[c.to_dict(names) for c in constraints])
    if ip.reduced:
        logger.debug("Program already reduced; nothing to do")
        return ip, report

    layout = ip.layout
    position = {}
    for p in layout.ports:
        for k in range(p.size):
            position[Sym(p.node, k)] = p.start + k
    eligible = {s for s, _ in position.items() if not layout.port_for_node(s.node).space.discrete}

    eqs = [c for c in constraints if c.is_eq]
    subst: Dict[Sym, Expr] = {}
    rewired: set = set()
    progress = True
    while progress:
        progress = False
        for idx, c in enumerate(eqs):
            lhs, rhs = substitute(c.lhs, subst), substitute(c.rhs, subst)
            candidates = sorted((symbols(lhs) | symbols(rhs)) & eligible,
                                key=lambda s: position[s], reverse=True)
            for s in candidates:
                gamma = solve_for(lhs, rhs, s)
                if gamma is None:
                    continue
                blocked = rewired | {s.node}
                if any(a.ports & blocked for a in applies(gamma)):
                    continue
                if any(s.node in a.ports for g in subst.values() for a in applies(g)):
                    continue
                subst = {t: substitute(g, {s: gamma}) for t, g in subst.items()}
                subst[s] = gamma
                eligible.discard(s)
                rewired.add(s.node)
                eqs.pop(idx)
                progress = True
                break
            if progress:
                break

    report.remaining_equalities = [
        {"lhs": render(substitute(c.lhs, subst), names),
         "rhs": render(substitute(c.rhs, subst), names), "source": c.source, "origin": c.origin}
        for c in eqs
    ]
    if not subst:
        logger.debug("No parameter slot could be eliminated")
        return ip, report

    b = GraphBuilder.from_graph(ip.graph)
    shapes = dict(ip.shapes)
    by_port: Dict[int, List[int]] = {}
    for s in subst:
        by_port.setdefault(s.node, []).append(s.k)

    replaced: Dict[int, Tuple[int, List[int]]] = {}
    new_ports: Dict[int, Optional[ThetaPort]] = {}
    for p in layout.ports:
        if p.node not in by_port:
            continue
        gone = set(by_port[p.node])
        kept = [k for k in range(p.size) if k not in gone]
        if kept:
            fresh = b.input(p.name)
            shapes[fresh] = (len(kept),)
            replaced[p.node] = (fresh, kept)
            origin = tuple(p.origin[k] for k in kept) if p.origin is not None else tuple(kept)
            new_ports[p.node] = ThetaPort(
                node=fresh, name=p.name, space=p.space, shape=(len(kept),), owner=p.owner,
                fwd_op=p.fwd_op, kind=p.kind, index=p.index, origin=origin,
                base_name=p.source_name,
            )
        else:
            new_ports[p.node] = None

    mat = _Materializer(ip, b, shapes, replaced)
    theta_sources: Dict[str, List[Tuple[int, int, int]]] = {}
    for p in layout.ports:
        if p.node not in by_port:
            continue
        gone = sorted(by_port[p.node])
        sources = []
        computed = {}
        for k in gone:
            node = mat(subst[Sym(p.node, k)])
            computed[k] = node
            base_k = p.origin[k] if p.origin is not None else k
            sources.append((base_k, node, 0))
            report.eliminated.append({
                "port": p.name, "element": base_k,
                "solution": render(subst[Sym(p.node, k)], names),
            })
        theta_sources[p.source_name] = sources

        if not p.shape:
            b.redirect_consumers(p.node, computed[0])
        else:
            n = p.size
            size_const = mat._const(np.array([float(n)]))
            parts = []
            if p.node in replaced:
                fresh, kept = replaced[p.node]
                idx = mat._const(np.array([float(k) for k in kept]))
                parts.append(mat._apply("scatter", fresh, idx, size_const, shape=(n,)))
            for k in gone:
                one = mat._apply("reshape", computed[k], mat._const(np.array([1.0])),
                                 shape=(1,))
                idx = mat._const(np.array([float(k)]))
                parts.append(mat._apply("scatter", one, idx, size_const, shape=(n,)))
            total = parts[0]
            for part in parts[1:]:
                total = mat._apply("add", total, part, shape=(n,))
            if tuple(p.shape) != (n,):
                total = mat._apply("reshape", total,
                                   mat._const(np.array([float(d) for d in p.shape])),
                                   shape=tuple(p.shape))
            b.redirect_consumers(p.node, total)
        b.remove_node(p.node)
        shapes.pop(p.node, None)

    ports = []
    for p in layout.ports:
        if p.node in new_ports:
            if new_ports[p.node] is not None:
                ports.append(new_ports[p.node])
        else:
            ports.append(p)
    new_layout = ThetaLayout(ports)
    reduced = ip.copy_with(
        graph=b.build(), layout=new_layout, shapes=shapes, reduced=True,
        base_layout=ip.layout, theta_sources=theta_sources,
    )
    if ip.totalized:
        # ops computing solutions need contractions like every other op
        reduced = cover_inputs(reduced)
    report.slots_after = new_layout.total
    logger.debug(f"Eliminated {len(subst)} parameter slots: "
                 f"{report.slots_before} -> {report.slots_after}")
    return reduced, report


def recover_full_theta(ip: InverseProgram, y: Mapping[str, Any], theta: Any) -> np.ndarray:
    """
    The parameter vector of the unreduced program equivalent to ``theta``.

    Kept slots are copied; eliminated slots take the values their solutions
    evaluate to on ``(y, theta)``.
    """
    from .executor import evaluate_inverse

    if not ip.reduced or ip.base_layout is None:
        return np.asarray(theta, dtype=float).reshape(-1).copy()
    env = evaluate_inverse(ip, y, theta)
    current = ip.layout.unpack(theta)
    full = np.zeros(ip.base_layout.total)
    for p in ip.base_layout.ports:
        flat = np.zeros(p.size)
        if ip.layout.has_port(p.name):
            q = ip.layout.port(p.name)
            values = np.asarray(current[q.node], dtype=float).reshape(-1)
            targets = q.origin if q.origin is not None else tuple(range(q.size))
            base_offsets = p.origin if p.origin is not None else None
            for value, k in zip(values, targets):
                pos = base_offsets.index(k) if base_offsets is not None else k
                flat[pos] = value
        for k, node, j in ip.theta_sources.get(p.source_name, []):
            v = env[node]
            flat[k] = float(np.asarray(v, dtype=float).reshape(-1)[j]) if is_tensor(v) else float(v)
        full[p.start:p.end] = flat
    return full
