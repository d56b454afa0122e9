"""
Dataflow graph representation.

A graph is a directed bipartite multigraph of op nodes and value nodes. Edges
connect ports ``(node, slot)``; on a node with ``m`` incoming and ``n``
outgoing ports, incoming ports are numbered ``1..m`` and outgoing ports
``m+1..m+n``. For an op node ``m`` and ``n`` are the arity of its kind; a value
node has at most one incoming edge.

Graphs are immutable once built. Passes construct new graphs through
:class:`GraphBuilder`.

JSON format::

    {"nodes": [{"id": 1, "kind": "value:input:x"}, {"id": 2, "kind": "op:sqr"}, ...],
     "edges": [[1, 1, 2, 1], ...]}

Node kinds are ``op:<kind>``, ``value:input:<name>``, ``value:const:<json value>``,
``value:output:<name>`` and ``value:internal``.
"""

import heapq
import json
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .primitives import Operator, resolve
from .values import value_from_json, value_to_json, values_equal
from .utils.logger import get_logger
from .utils.validation import (
    CycleDetected, DanglingOpPort, NonBipartiteEdge, ParseError, PinvError, UnlabeledSinkValue,
    UnlabeledSourceValue, ValidationError, ValueFanInViolation
)

logger = get_logger("graph")


class Role(str, Enum):
    """Label of a value node."""

    INPUT = "input"
    CONSTANT = "const"
    OUTPUT = "output"
    INTERNAL = "internal"


@dataclass(frozen=True)
class PortRef:
    node: int
    slot: int


@dataclass(frozen=True)
class Edge:
    src: PortRef
    dst: PortRef

    @classmethod
    def of(cls, src_node: int, src_slot: int, dst_node: int, dst_slot: int) -> "Edge":
        return cls(PortRef(src_node, src_slot), PortRef(dst_node, dst_slot))

    def to_list(self) -> List[int]:
        return [self.src.node, self.src.slot, self.dst.node, self.dst.slot]


@dataclass(frozen=True, eq=False)
class OpNode:
    id: int
    kind: str

    is_op = True

    @property
    def op(self) -> Operator:
        return resolve(self.kind)

    @property
    def label(self) -> str:
        return f"op:{self.kind}"

    def matches(self, other: Any) -> bool:
        return isinstance(other, OpNode) and other.id == self.id and other.kind == self.kind


@dataclass(frozen=True, eq=False)
class ValueNode:
    id: int
    role: Role
    name: Optional[str] = None
    value: Any = None

    is_op = False

    @property
    def label(self) -> str:
        if self.role in (Role.INPUT, Role.OUTPUT):
            return f"value:{self.role.value}:{self.name}"
        if self.role is Role.CONSTANT:
            return "value:const:" + json.dumps(value_to_json(self.value))
        return "value:internal"

    def matches(self, other: Any) -> bool:
        if not isinstance(other, ValueNode) or (other.id, other.role, other.name) != (
            self.id, self.role, self.name
        ):
            return False
        if self.role is Role.CONSTANT:
            return values_equal(self.value, other.value)
        return True


Node = Union[OpNode, ValueNode]


def parse_label(node_id: int, label: str, where: str = "kind") -> Node:
    """
    Parse a node kind string.

    Raises:
        ParseError: For unknown or malformed kinds.
    """
    if not isinstance(label, str):
        raise ParseError(f"{where}: expected a string, got {type(label).__name__}")
    if label.startswith("op:"):
        kind = label[3:]
        try:
            resolve(kind)
        except PinvError as e:
            raise ParseError(f"{where}: unknown op kind {kind!r} ({e})") from e
        return OpNode(node_id, kind)
    if label == "value:internal":
        return ValueNode(node_id, Role.INTERNAL)
    for role in (Role.INPUT, Role.OUTPUT):
        prefix = f"value:{role.value}:"
        if label.startswith(prefix):
            name = label[len(prefix):]
            if not name:
                raise ParseError(f"{where}: {role.value} node needs a name")
            return ValueNode(node_id, role, name=name)
    if label.startswith("value:const:"):
        text = label[len("value:const:"):]
        try:
            value = value_from_json(json.loads(text), where)
        except (json.JSONDecodeError, PinvError) as e:
            raise ParseError(f"{where}: invalid constant {text!r}") from e
        return ValueNode(node_id, Role.CONSTANT, value=value)
    raise ParseError(f"{where}: unknown node kind {label!r}")


class Graph:
    """
    An immutable, validated dataflow graph.

    Nodes are kept by id; edges are an ordered list and their order is part of
    equality.
    """

    def __init__(self, nodes: Iterable[Node], edges: Iterable[Edge], validate: bool = True):
        self._nodes: Dict[int, Node] = {}
        for node in nodes:
            if node.id in self._nodes:
                raise ValidationError(f"duplicate node id {node.id}")
            self._nodes[node.id] = node
        self._nodes = dict(sorted(self._nodes.items()))
        self._edges: Tuple[Edge, ...] = tuple(edges)
        self._in: Dict[int, List[Edge]] = {i: [] for i in self._nodes}
        self._out: Dict[int, List[Edge]] = {i: [] for i in self._nodes}
        for e in self._edges:
            for end in (e.src.node, e.dst.node):
                if end not in self._nodes:
                    raise ValidationError(f"edge {e.to_list()} references unknown node {end}")
            self._out[e.src.node].append(e)
            self._in[e.dst.node].append(e)
        for lst in self._in.values():
            lst.sort(key=lambda e: e.dst.slot)
        for lst in self._out.values():
            lst.sort(key=lambda e: e.src.slot)
        self._topo: Optional[List[int]] = None
        # Compiled execution plan, filled lazily by the executor
        self.plan_cache: Any = None
        if validate:
            self.validate()

    # Accessors -----------------------------------------------------------

    @property
    def nodes(self) -> Dict[int, Node]:
        return dict(self._nodes)

    @property
    def edges(self) -> Tuple[Edge, ...]:
        return self._edges

    def node(self, node_id: int) -> Node:
        return self._nodes[node_id]

    def has_node(self, node_id: int) -> bool:
        return node_id in self._nodes

    def op_ids(self) -> List[int]:
        return [i for i, n in self._nodes.items() if n.is_op]

    def value_ids(self) -> List[int]:
        return [i for i, n in self._nodes.items() if not n.is_op]

    def in_edges(self, node_id: int) -> List[Edge]:
        return list(self._in[node_id])

    def out_edges(self, node_id: int) -> List[Edge]:
        return list(self._out[node_id])

    def _values_with(self, role: Role) -> List[ValueNode]:
        return [n for n in self._nodes.values() if not n.is_op and n.role is role]

    def inputs(self) -> List[ValueNode]:
        return self._values_with(Role.INPUT)

    def outputs(self) -> List[ValueNode]:
        return self._values_with(Role.OUTPUT)

    def constants(self) -> List[ValueNode]:
        return self._values_with(Role.CONSTANT)

    def input_names(self) -> List[str]:
        return [n.name for n in self.inputs()]

    def output_names(self) -> List[str]:
        return [n.name for n in self.outputs()]

    def find_input(self, name: str) -> ValueNode:
        for n in self.inputs():
            if n.name == name:
                return n
        raise KeyError(name)

    def find_output(self, name: str) -> ValueNode:
        for n in self.outputs():
            if n.name == name:
                return n
        raise KeyError(name)

    def op_inputs(self, op_id: int) -> List[int]:
        """Value node ids feeding an op, in slot order."""
        return [e.src.node for e in self._in[op_id]]

    def op_outputs(self, op_id: int) -> List[int]:
        """Value node ids produced by an op, in slot order."""
        return [e.dst.node for e in self._out[op_id]]

    def producer(self, value_id: int) -> Optional[PortRef]:
        """The op port writing a value node, or None for sources."""
        edges = self._in[value_id]
        return edges[0].src if edges else None

    def consumers(self, value_id: int) -> List[PortRef]:
        """Op ports reading a value node, in edge order."""
        return [e.dst for e in self._out[value_id]]

    def num_ops(self) -> int:
        return len(self.op_ids())

    def num_values(self) -> int:
        return len(self.value_ids())

    # Validation ----------------------------------------------------------

    def validate(self) -> None:
        """
        Check every structural invariant.

        Raises:
            NonBipartiteEdge, DanglingOpPort, ValueFanInViolation,
            UnlabeledSourceValue, UnlabeledSinkValue, CycleDetected, ValidationError
        """
        for e in self._edges:
            src, dst = self._nodes[e.src.node], self._nodes[e.dst.node]
            if src.is_op == dst.is_op:
                what = "op" if src.is_op else "value"
                raise NonBipartiteEdge(f"edge {e.to_list()} connects {what} to {what}")
        for node in self._nodes.values():
            if node.is_op:
                self._validate_op(node)
            else:
                self._validate_value(node)
        self.topo_order()

    def _validate_op(self, node: OpNode) -> None:
        op = node.op
        ins, outs = self._in[node.id], self._out[node.id]
        in_slots = [e.dst.slot for e in ins]
        out_slots = [e.src.slot for e in outs]
        expected_in = list(range(1, op.n_in + 1))
        expected_out = list(range(op.n_in + 1, op.n_in + op.n_out + 1))
        if in_slots != expected_in:
            raise DanglingOpPort(
                f"op {node.id} ({node.kind}) has input slots {in_slots}, expected {expected_in}"
            )
        if out_slots != expected_out:
            raise DanglingOpPort(
                f"op {node.id} ({node.kind}) has output slots {out_slots}, expected {expected_out}"
            )

    def _validate_value(self, node: ValueNode) -> None:
        ins, outs = self._in[node.id], self._out[node.id]
        if len(ins) > 1:
            raise ValueFanInViolation(f"value {node.id} has {len(ins)} incoming edges")
        if ins and node.role in (Role.INPUT, Role.CONSTANT):
            raise ValueFanInViolation(f"{node.role.value} node {node.id} has an incoming edge")
        if not ins and node.role not in (Role.INPUT, Role.CONSTANT):
            raise UnlabeledSourceValue(f"value {node.id} has no producer and is not an input")
        if not outs and node.role is not Role.OUTPUT:
            raise UnlabeledSinkValue(f"value {node.id} has no consumer and is not an output")
        if ins and ins[0].dst.slot != 1:
            raise ValidationError(f"value {node.id}: incoming port must be slot 1")
        first = len(ins) + 1
        expected = list(range(first, first + len(outs)))
        if [e.src.slot for e in outs] != expected:
            raise ValidationError(f"value {node.id}: outgoing slots must be {expected}")

    def topo_order(self) -> List[int]:
        """
        Op node ids, each after every op feeding it; ties by ascending id.

        Raises:
            CycleDetected: If the ops cannot be ordered.
        """
        if self._topo is not None:
            return list(self._topo)
        deps: Dict[int, set] = {}
        users: Dict[int, List[int]] = {}
        for op_id in self.op_ids():
            deps[op_id] = set()
            users.setdefault(op_id, [])
        for op_id in deps:
            for v in self.op_inputs(op_id):
                prod = self.producer(v)
                if prod is not None and prod.node in deps:
                    deps[op_id].add(prod.node)
        for op_id, ds in deps.items():
            for d in ds:
                users[d].append(op_id)
        remaining = {i: len(ds) for i, ds in deps.items()}
        heap = [i for i, k in remaining.items() if k == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            i = heapq.heappop(heap)
            order.append(i)
            for u in users[i]:
                remaining[u] -= 1
                if remaining[u] == 0:
                    heapq.heappush(heap, u)
        if len(order) != len(deps):
            stuck = sorted(i for i, k in remaining.items() if k > 0)
            raise CycleDetected(f"ops {stuck} lie on a cycle")
        self._topo = order
        return list(order)

    # Equality and serialization -----------------------------------------

    def __eq__(self, other: Any) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        if list(self._nodes) != list(other._nodes):
            return False
        if not all(n.matches(other._nodes[i]) for i, n in self._nodes.items()):
            return False
        return self._edges == other._edges

    def __repr__(self) -> str:
        return f"Graph(ops={self.num_ops()}, values={self.num_values()}, edges={len(self._edges)})"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "nodes": [{"id": n.id, "kind": n.label} for n in self._nodes.values()],
            "edges": [e.to_list() for e in self._edges],
        }

    def to_json(self) -> str:
        """Deterministic JSON text, one node and one edge per line."""
        return graph_to_json(self.to_dict())

    @classmethod
    def from_dict(cls, data: Any) -> "Graph":
        return graph_from_dict(data)

    @classmethod
    def from_json(cls, text: str) -> "Graph":
        return from_json(text)


def graph_to_json(data: Dict[str, Any]) -> str:
    nodes = ",\n".join("    " + json.dumps(n) for n in data["nodes"])
    edges = ",\n".join("    " + json.dumps(e) for e in data["edges"])
    parts = ["{", '  "nodes": [']
    if nodes:
        parts.append(nodes)
    parts.append("  ],")
    parts.append('  "edges": [')
    if edges:
        parts.append(edges)
    parts.append("  ]")
    parts.append("}")
    return "\n".join(parts) + "\n"


def graph_from_dict(data: Any, where: str = "graph") -> Graph:
    """
    Build a graph from its JSON object form.

    Raises:
        ParseError: For malformed structure, naming the offending field.
        ValidationError: If the parsed graph violates an invariant.
    """
    if not isinstance(data, dict):
        raise ParseError(f"{where}: expected an object")
    for key in ("nodes", "edges"):
        if key not in data or not isinstance(data[key], list):
            raise ParseError(f"{where}.{key}: expected a list")
    nodes = []
    for i, item in enumerate(data["nodes"]):
        field = f"{where}.nodes[{i}]"
        if not isinstance(item, dict) or "id" not in item or "kind" not in item:
            raise ParseError(f"{field}: expected an object with 'id' and 'kind'")
        node_id = item["id"]
        if not isinstance(node_id, int) or isinstance(node_id, bool) or node_id < 1:
            raise ParseError(f"{field}.id: expected a positive integer")
        nodes.append(parse_label(node_id, item["kind"], f"{field}.kind"))
    edges = []
    for i, item in enumerate(data["edges"]):
        field = f"{where}.edges[{i}]"
        if (not isinstance(item, list) or len(item) != 4
                or not all(isinstance(x, int) and not isinstance(x, bool) for x in item)):
            raise ParseError(f"{field}: expected [srcNode, srcSlot, dstNode, dstSlot]")
        if item[1] < 1 or item[3] < 1:
            raise ParseError(f"{field}: slots start at 1")
        edges.append(Edge.of(*item))
    return Graph(nodes, edges)


def from_json(text: str) -> Graph:
    """
    Parse a graph from JSON text.

    Raises:
        ParseError: With line/column for syntax errors and the field path otherwise.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
    return graph_from_dict(data)


def to_json(g: Graph) -> str:
    return g.to_json()


class GraphBuilder:
    """
    Mutable staging area for graphs.

    Value-side slots are always renumbered canonically on :meth:`build`: the
    incoming edge gets slot 1 and outgoing edges follow in edge order.
    """

    def __init__(self):
        self._nodes: Dict[int, Node] = {}
        self._edges: List[List[Optional[int]]] = []
        self._next_id = 1

    @classmethod
    def from_graph(cls, g: Graph) -> "GraphBuilder":
        b = cls()
        for node in g.nodes.values():
            b._nodes[node.id] = node
        b._edges = [e.to_list() for e in g.edges]
        b._next_id = max(g.nodes, default=0) + 1
        return b

    def _new_id(self) -> int:
        node_id = self._next_id
        self._next_id += 1
        return node_id

    def node(self, node_id: int) -> Node:
        return self._nodes[node_id]

    def has_node(self, node_id: int) -> bool:
        return node_id in self._nodes

    def value(self, role: Role, name: Optional[str] = None, value: Any = None) -> int:
        node_id = self._new_id()
        self._nodes[node_id] = ValueNode(node_id, role, name=name, value=value)
        return node_id

    def input(self, name: str) -> int:
        return self.value(Role.INPUT, name=name)

    def constant(self, value: Any) -> int:
        return self.value(Role.CONSTANT, value=value)

    def internal(self) -> int:
        return self.value(Role.INTERNAL)

    def output(self, name: str) -> int:
        return self.value(Role.OUTPUT, name=name)

    def add_op(self, kind: str) -> int:
        resolve(kind)
        node_id = self._new_id()
        self._nodes[node_id] = OpNode(node_id, kind)
        return node_id

    def connect(self, src_node: int, src_slot: Optional[int], dst_node: int,
                dst_slot: Optional[int]) -> None:
        """Add a raw edge; value-side slots may be None."""
        self._edges.append([src_node, src_slot, dst_node, dst_slot])

    def op(self, kind: str, *inputs: int, outputs: Optional[Sequence[int]] = None) -> List[int]:
        """
        Add an op reading ``inputs`` and return its output value ids.

        Fresh internal value nodes are created unless ``outputs`` is given.
        """
        op_id = self.add_op(kind)
        operator = resolve(kind)
        if len(inputs) != operator.n_in:
            raise ValidationError(f"{kind} takes {operator.n_in} inputs, got {len(inputs)}")
        for slot, v in enumerate(inputs, start=1):
            self.connect(v, None, op_id, slot)
        if outputs is None:
            outputs = [self.internal() for _ in range(operator.n_out)]
        elif len(outputs) != operator.n_out:
            raise ValidationError(f"{kind} has {operator.n_out} outputs, got {len(outputs)}")
        for k, v in enumerate(outputs):
            self.connect(op_id, operator.n_in + 1 + k, v, None)
        return list(outputs)

    def apply(self, kind: str, *inputs: int) -> int:
        """Single-output shorthand for :meth:`op`."""
        return self.op(kind, *inputs)[0]

    def mark_output(self, value_id: int, name: str) -> int:
        self.relabel(value_id, Role.OUTPUT, name=name)
        return value_id

    def relabel(self, value_id: int, role: Role, name: Optional[str] = None,
                value: Any = None) -> None:
        self._nodes[value_id] = ValueNode(value_id, role, name=name, value=value)

    def producer_edge(self, value_id: int) -> Optional[List[Optional[int]]]:
        for e in self._edges:
            if e[2] == value_id:
                return e
        return None

    def consumer_edges(self, value_id: int) -> List[List[Optional[int]]]:
        return [e for e in self._edges if e[0] == value_id]

    def redirect_consumers(self, old: int, new: int) -> None:
        """Make every consumer of ``old`` read ``new`` instead."""
        for e in self._edges:
            if e[0] == old:
                e[0] = new
                e[1] = None

    def reroute_input(self, op_id: int, slot: int, new_src: int) -> None:
        """Make input ``slot`` of ``op_id`` read ``new_src``."""
        for e in self._edges:
            if e[2] == op_id and e[3] == slot:
                e[0], e[1] = new_src, None
                return
        raise ValidationError(f"op {op_id} has no edge into slot {slot}")

    def remove_node(self, node_id: int) -> None:
        """Remove a node and every edge touching it."""
        del self._nodes[node_id]
        self._edges = [e for e in self._edges if e[0] != node_id and e[2] != node_id]

    def build(self, validate: bool = True) -> Graph:
        in_count: Dict[int, int] = {}
        for src, _, dst, _ in self._edges:
            if dst in self._nodes and not self._nodes[dst].is_op:
                in_count[dst] = in_count.get(dst, 0) + 1
        next_out: Dict[int, int] = {}
        edges = []
        for src, src_slot, dst, dst_slot in self._edges:
            if src in self._nodes and not self._nodes[src].is_op:
                src_slot = next_out.get(src, in_count.get(src, 0) + 1)
                next_out[src] = src_slot + 1
            if dst in self._nodes and not self._nodes[dst].is_op:
                dst_slot = 1
            edges.append(Edge.of(src, src_slot, dst, dst_slot))
        return Graph(self._nodes.values(), edges, validate=validate)


def build(nodes: Sequence[Union[str, Node]], edges: Sequence[Sequence[int]]) -> Graph:
    """
    Build and validate a graph from node kinds and edges.

    Node ids are assigned densely (1, 2, ...) in the order given; edges refer to
    those ids as ``[srcNode, srcSlot, dstNode, dstSlot]``.

    Raises:
        ParseError, ValidationError
    """
    parsed = []
    for i, item in enumerate(nodes, start=1):
        if isinstance(item, str):
            parsed.append(parse_label(i, item, f"nodes[{i - 1}]"))
        elif isinstance(item, ValueNode):
            parsed.append(ValueNode(i, item.role, item.name, item.value))
        else:
            parsed.append(OpNode(i, item.kind))
    g = Graph(parsed, [Edge.of(*e) for e in edges])
    logger.debug(f"Built {g!r}")
    return g
