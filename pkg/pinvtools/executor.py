"""
Interpreters for forward graphs and inverse programs.

Graphs are compiled once into an :class:`ExecutionPlan` (topologically sorted
steps with resolved operators), cached per graph object, and evaluated by a
flat loop. :func:`run_inverse` evaluates an inverse program, collects the loss
taps and re-runs the forward graph on the recovered inputs to measure the
identity loss.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .graph import Graph, Role
from .inversion import InverseProgram
from .primitives import Contraction, InverseOperator, Primitive
from .values import UNDEFINED, check_value, is_bool, is_tensor, value_to_json
from .utils.logger import get_logger
from .utils.validation import MissingInput, NotTotalized, TypeMismatch

logger = get_logger("executor")

Trace = Dict[int, Tuple[List[Any], List[Any]]]


def metric(a: Any, b: Any) -> float:
    """
    Distance between two values.

    Reals use the absolute difference, tensors the Euclidean norm of the
    difference, bools and ints the discrete metric. Undefined or NaN values are
    infinitely far from everything.

    Raises:
        TypeMismatch: For a tensor compared with a scalar or tensors of different shapes.
    """
    if a is UNDEFINED or b is UNDEFINED:
        return math.inf
    if is_tensor(a) or is_tensor(b):
        if not (is_tensor(a) and is_tensor(b)):
            raise TypeMismatch("cannot compare a tensor with a scalar")
        if a.shape != b.shape:
            raise TypeMismatch(f"cannot compare tensors of shapes {a.shape} and {b.shape}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            return 0.0 if np.array_equal(a, b) else math.inf
        return float(np.linalg.norm(a - b))
    if is_bool(a) and is_bool(b):
        return 0.0 if a == b else 1.0
    if isinstance(a, int) and isinstance(b, int) and not is_bool(a) and not is_bool(b):
        return 0.0 if a == b else 1.0
    fa, fb = float(a), float(b)
    if fa == fb:
        return 0.0
    d = abs(fa - fb)
    return d if math.isfinite(d) else math.inf


def metric_many(a: Sequence[Any], b: Sequence[Any]) -> float:
    """Euclidean combination of per-component distances."""
    total = 0.0
    for x, y in zip(a, b):
        d = metric(x, y)
        if math.isinf(d):
            return math.inf
        total += d * d
    return math.sqrt(total)


class ExecutionPlan:
    """A graph flattened into evaluation steps."""

    def __init__(self, g: Graph):
        self.graph = g
        self.steps = []
        for op_id in g.topo_order():
            node = g.node(op_id)
            self.steps.append((op_id, node.op, g.op_inputs(op_id), g.op_outputs(op_id)))
        self.inputs = {n.name: n.id for n in g.inputs()}
        self.outputs = {n.name: n.id for n in g.outputs()}
        self.constants = {n.id: n.value for n in g.constants()}

    def run(self, bindings: Mapping[int, Any], trace: Optional[Trace] = None) -> Dict[int, Any]:
        """Evaluate with input node values given by id; returns every node's value."""
        env: Dict[int, Any] = dict(self.constants)
        env.update(bindings)
        for op_id, op, ins, outs in self.steps:
            args = [env[v] for v in ins]
            results = op.evaluate(args)
            for v, r in zip(outs, results):
                env[v] = r
            if trace is not None:
                trace[op_id] = (args, list(results))
        return env


def plan_for(g: Graph) -> ExecutionPlan:
    if g.plan_cache is None:
        g.plan_cache = ExecutionPlan(g)
    return g.plan_cache


def run_forward(g: Graph, inputs: Mapping[str, Any]) -> Tuple[Dict[str, Any], Trace]:
    """
    Evaluate a forward graph.

    Returns:
        (outputs by name, trace of every op's inputs and outputs by op id)

    Raises:
        MissingInput: If a declared input is not bound.
        TypeMismatch: If a bound value is not a supported value.
    """
    plan = plan_for(g)
    bindings = {}
    for name, node_id in plan.inputs.items():
        if name not in inputs:
            raise MissingInput(f"input {name!r} is not bound")
        bindings[node_id] = check_value(inputs[name], f"input {name!r}")
    trace: Trace = {}
    env = plan.run(bindings, trace)
    return {name: env[i] for name, i in plan.outputs.items()}, trace


def _inverse_bindings(ip: InverseProgram, y: Mapping[str, Any], theta: Any) -> Dict[int, Any]:
    plan = plan_for(ip.graph)
    ports = ip.layout.unpack(theta)
    bindings = {}
    for name, node_id in plan.inputs.items():
        if node_id in ports:
            bindings[node_id] = ports[node_id]
        elif name in y:
            bindings[node_id] = check_value(y[name], f"target {name!r}")
        else:
            raise MissingInput(f"target value {name!r} is not bound")
    return bindings


def evaluate_inverse(ip: InverseProgram, y: Mapping[str, Any], theta: Any) -> Dict[int, Any]:
    """
    Raw evaluation of an inverse program; undefined values are kept.

    Returns:
        Value of every inverse graph node by id.

    Raises:
        ArityMismatch: If ``theta`` does not match the layout.
        MissingInput: If a target value is missing.
    """
    return plan_for(ip.graph).run(_inverse_bindings(ip, y, theta))


@dataclass(frozen=True)
class Tap:
    """One contribution to the domain loss."""

    origin: int
    source: str
    node: int
    distance: float

    def to_dict(self) -> Dict[str, Any]:
        return {"origin": self.origin, "source": self.source, "node": self.node,
                "distance": _json_float(self.distance)}


def _json_float(x: float) -> Any:
    return x if math.isfinite(x) else str(x)


@dataclass
class LossReport:
    """Outcome of one inverse run."""

    identity_loss: float
    domain_loss_total: float
    per_tap: List[Tap] = field(default_factory=list)
    outputs: Dict[str, Any] = field(default_factory=dict)

    @property
    def domain_loss(self) -> float:
        return self.domain_loss_total

    def to_dict(self) -> Dict[str, Any]:
        return {
            "identity_loss": _json_float(self.identity_loss),
            "domain_loss": _json_float(self.domain_loss_total),
            "outputs": {k: value_to_json(v) for k, v in sorted(self.outputs.items())},
            "taps": [t.to_dict() for t in self.per_tap],
        }


def _has_joint(op: Any) -> bool:
    return (isinstance(op, InverseOperator)
            and type(op.base).inverse_joint is not Primitive.inverse_joint)


def _collect_taps(ip: InverseProgram, env: Mapping[int, Any]) -> List[Tap]:
    g = ip.graph
    plan = plan_for(g)
    taps = []
    for op_id, op, ins, outs in plan.steps:
        if isinstance(op, Contraction):
            consumers = g.consumers(outs[0])
            origin = consumers[0].node if consumers else op_id
            taps.append(Tap(origin, "contraction", op_id, op.tap(env[ins[0]])))
        elif _has_joint(op):
            args = [env[v] for v in ins]
            d = math.inf if any(a is UNDEFINED for a in args) else op.joint_distance(args)
            taps.append(Tap(op_id, "joint", op_id, d))
    for name, expected in sorted(ip.residuals.items()):
        node_id = plan.outputs[name]
        producer = g.producer(node_id)
        taps.append(Tap(producer.node, "residual", node_id, metric(env[node_id], expected)))
    return taps


def identity_loss(ip: InverseProgram, y: Mapping[str, Any], x: Mapping[str, Any]) -> float:
    """Distance between the forward image of ``x`` and the targets ``y``."""
    if any(v is UNDEFINED for v in x.values()):
        return math.inf
    outputs, _ = run_forward(ip.forward, {**ip.pinned, **dict(x)})
    names = list(outputs)
    return metric_many([outputs[n] for n in names], [check_value(y[n]) for n in names])


def run_inverse(ip: InverseProgram, y: Mapping[str, Any], theta: Any) -> LossReport:
    """
    Evaluate an inverse program and report its losses.

    Raises:
        NotTotalized: If an undefined value appears (untotalized programs only).
        ArityMismatch: If ``theta`` does not match the layout.
        MissingInput: If a target value is missing.
    """
    env = evaluate_inverse(ip, y, theta)
    for node_id, value in env.items():
        if value is UNDEFINED and not (ip.totalized and _feeds_contraction(ip.graph, node_id)):
            raise NotTotalized(f"value {node_id} is undefined; totalize the program first")
    plan = plan_for(ip.graph)
    outputs = {name: env[i] for name, i in plan.outputs.items() if name not in ip.residuals}
    taps = _collect_taps(ip, env)
    domain = math.fsum(t.distance for t in taps) if taps else 0.0
    if math.isnan(domain):
        domain = math.inf
    return LossReport(identity_loss(ip, y, outputs), domain, taps, outputs)


def _feeds_contraction(g: Graph, node_id: int) -> bool:
    node = g.node(node_id)
    if node.is_op or node.role is Role.OUTPUT:
        return False
    consumers = g.consumers(node_id)
    return bool(consumers) and all(isinstance(g.node(c.node).op, Contraction) for c in consumers)


def run_inverse_fast(ip: InverseProgram, y: Mapping[str, Any], theta: Any,
                     with_identity: bool = False) -> Tuple[Dict[str, Any], float, float]:
    """
    Lean evaluation used inside optimization loops.

    Returns:
        (recovered inputs, domain loss, identity loss or nan when not requested)
    """
    report_env = evaluate_inverse(ip, y, theta)
    plan = plan_for(ip.graph)
    outputs = {name: report_env[i] for name, i in plan.outputs.items() if name not in ip.residuals}
    for value in outputs.values():
        if value is UNDEFINED:
            raise NotTotalized("an output is undefined; totalize the program first")
    domain = 0.0
    for op_id, op, ins, outs in plan.steps:
        if isinstance(op, Contraction):
            domain += op.tap(report_env[ins[0]])
        elif _has_joint(op):
            args = [report_env[v] for v in ins]
            if any(a is UNDEFINED for a in args):
                return outputs, math.inf, math.nan
            domain += op.joint_distance(args)
    for name, expected in ip.residuals.items():
        domain += metric(report_env[plan.outputs[name]], expected)
    if math.isnan(domain):
        domain = math.inf
    ident = identity_loss(ip, y, outputs) if with_identity else math.nan
    return outputs, domain, ident
