"""
Graph inversion.

:func:`insert_dupl` makes every reuse of a value explicit through ``dupl``
ops. :func:`invert` then builds the parametric inverse graph: ops are
processed in reverse forward order, every op is replaced by its inverse
operator, edge directions are swapped, forward inputs become outputs and
forward outputs become inputs, and every unconnected inverse port becomes a
parameter input bound to a slot of the :class:`ThetaLayout`.

Port convention between a forward op and its inverse: forward input slot
``i`` maps to the inverse output carrying that input (known inputs consumed by
a reduced variant have none), forward output slot ``j`` maps to inverse input
``j``; known constants, extra constants and parameter ports follow.
"""

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .graph import Edge, Graph, GraphBuilder, PortRef, Role, graph_from_dict
from .primitives import InverseOperator, Primitive, resolve
from .propagation import Annotations, propagate
from .spaces import ParamSpace, parse_space
from .values import UNDEFINED, shape_of, value_from_json, value_to_json
from .utils.logger import get_logger
from .utils.validation import (
    ArityMismatch, ForwardUndefined, ParseError, UnsupportedKind, ValidationError
)

logger = get_logger("inversion")

FORMAT_TAG = "pinvtools.inverse/1"

# Name prefix of residual outputs standing for forward constants
RESIDUAL_PREFIX = "__const_"

Shape = Tuple[int, ...]


def _size(shape: Shape) -> int:
    return int(np.prod(shape)) if shape else 1


# ---------------------------------------------------------------------------
# Parameter layout
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ThetaPort:
    """
    One parameter input of the inverse graph and its slots.

    ``origin`` lists the flat element indices of the original port that this
    port still carries, once some elements were eliminated; None means all.
    """

    node: int
    name: str
    space: ParamSpace
    shape: Shape
    owner: int
    fwd_op: Optional[int]
    kind: str
    index: int
    start: int = 0
    origin: Optional[Tuple[int, ...]] = None
    base_name: Optional[str] = None

    @property
    def size(self) -> int:
        return _size(self.shape)

    @property
    def end(self) -> int:
        return self.start + self.size

    @property
    def source_name(self) -> str:
        """Name of the port this one was derived from."""
        return self.base_name or self.name

    def to_dict(self) -> Dict[str, Any]:
        return {
            "node": self.node,
            "name": self.name,
            "space": self.space.code,
            "shape": list(self.shape),
            "start": self.start,
            "end": self.end,
            "owner": self.owner,
            "fwd_op": self.fwd_op,
            "kind": self.kind,
            "index": self.index,
            "origin": list(self.origin) if self.origin is not None else None,
            "base_name": self.base_name,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ThetaPort":
        try:
            return cls(
                node=int(d["node"]), name=str(d["name"]), space=parse_space(d["space"]),
                shape=tuple(int(x) for x in d["shape"]), owner=int(d["owner"]),
                fwd_op=None if d.get("fwd_op") is None else int(d["fwd_op"]),
                kind=str(d["kind"]), index=int(d["index"]), start=int(d["start"]),
                origin=None if d.get("origin") is None else tuple(int(x) for x in d["origin"]),
                base_name=d.get("base_name"),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"layout port: missing or invalid field ({e})") from e


class ThetaLayout:
    """
    Deterministic packing of all parameter ports into one flat vector.

    Ports are ordered by the topological order of their owning inverse op
    (fixed when the program is inverted), then by port index. Slot ranges are
    contiguous and cover ``[0, total)``.
    """

    def __init__(self, ports: Sequence[ThetaPort]):
        placed = []
        start = 0
        for p in ports:
            placed.append(replace(p, start=start))
            start += p.size
        self.ports: Tuple[ThetaPort, ...] = tuple(placed)
        self.total = start
        self._by_node = {p.node: p for p in self.ports}
        self._by_name = {p.name: p for p in self.ports}

    def __len__(self) -> int:
        return self.total

    def __eq__(self, other: Any) -> bool:
        return isinstance(other, ThetaLayout) and self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        return f"ThetaLayout(ports={len(self.ports)}, total={self.total})"

    def port_for_node(self, node: int) -> Optional[ThetaPort]:
        return self._by_node.get(node)

    def port(self, name: str) -> ThetaPort:
        return self._by_name[name]

    def has_port(self, name: str) -> bool:
        return name in self._by_name

    def spaces(self) -> List[ParamSpace]:
        """The space of every slot, in slot order."""
        out = []
        for p in self.ports:
            out.extend([p.space] * p.size)
        return out

    def entries(self) -> List[Dict[str, Any]]:
        """Ports grouped by owning inverse op."""
        groups: List[Dict[str, Any]] = []
        for p in self.ports:
            if groups and groups[-1]["inv_op"] == p.owner:
                g = groups[-1]
                g["slot_range"][1] = p.end
                g["spaces"].extend([p.space.code] * p.size)
            else:
                groups.append({
                    "inv_op": p.owner, "fwd_op": p.fwd_op, "kind": p.kind,
                    "slot_range": [p.start, p.end], "spaces": [p.space.code] * p.size,
                })
        return groups

    def unpack(self, theta: Any) -> Dict[int, Any]:
        """
        Split a flat vector into per-port values keyed by node id.

        Raises:
            ArityMismatch: If the vector length is not ``total``.
        """
        vec = np.asarray(theta, dtype=float).reshape(-1)
        if vec.shape[0] != self.total:
            raise ArityMismatch(f"theta has {vec.shape[0]} slots, layout needs {self.total}")
        out = {}
        for p in self.ports:
            seg = vec[p.start:p.end]
            out[p.node] = seg.reshape(p.shape).copy() if p.shape else float(seg[0])
        return out

    def pack(self, values: Mapping[str, Any]) -> np.ndarray:
        """Flat vector from per-port values keyed by port name."""
        vec = np.zeros(self.total)
        for p in self.ports:
            if p.name not in values:
                raise ArityMismatch(f"no value for parameter port {p.name!r}")
            arr = np.asarray(values[p.name], dtype=float).reshape(-1)
            if arr.shape[0] != p.size:
                raise ArityMismatch(f"port {p.name!r} needs {p.size} values, got {arr.shape[0]}")
            vec[p.start:p.end] = arr
        return vec

    def to_dict(self) -> Dict[str, Any]:
        return {
            "total": self.total,
            "entries": self.entries(),
            "ports": [p.to_dict() for p in self.ports],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ThetaLayout":
        if not isinstance(d, Mapping) or not isinstance(d.get("ports"), list):
            raise ParseError("layout: expected an object with a 'ports' list")
        return cls([ThetaPort.from_dict(p) for p in d["ports"]])


# ---------------------------------------------------------------------------
# Inverse program
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class InverseProgram:
    """
    A forward graph together with its parametric inverse.

    Attributes:
        forward: The dupl-normalized forward graph.
        graph: The inverse graph.
        layout: Parameter layout of ``graph``.
        value_map: Forward value node id -> inverse value node id.
        op_map: Forward op id -> inverse op id.
        port_map: Pairs (forward port, inverse port).
        shapes: Shape of every inverse value node.
        input_shapes: Declared shapes of forward inputs.
        pinned: Forward inputs fixed to known values.
        residuals: Residual output name -> forward constant it must reproduce.
        totalized: Whether contractions were inserted.
        reduced: Whether parameter elimination ran.
        base_layout: Layout before elimination (set once reduced).
        theta_sources: Eliminated slot -> inverse value node that computes it.
    """

    forward: Graph
    graph: Graph
    layout: ThetaLayout
    value_map: Dict[int, int]
    op_map: Dict[int, int]
    port_map: List[Tuple[PortRef, PortRef]]
    shapes: Dict[int, Shape]
    input_shapes: Dict[str, Shape] = field(default_factory=dict)
    pinned: Dict[str, Any] = field(default_factory=dict)
    residuals: Dict[str, Any] = field(default_factory=dict)
    totalized: bool = False
    reduced: bool = False
    base_layout: Optional[ThetaLayout] = None
    theta_sources: Dict[str, List[Tuple[int, int, int]]] = field(default_factory=dict)

    @property
    def num_params(self) -> int:
        return self.layout.total

    def y_names(self) -> List[str]:
        """Names of the inverse graph's value inputs (the forward outputs)."""
        return [n.name for n in self.graph.inputs() if self.layout.port_for_node(n.id) is None]

    def x_names(self) -> List[str]:
        """Names of recovered forward inputs."""
        return [n.name for n in self.graph.outputs() if n.name not in self.residuals]

    def copy_with(self, **changes) -> "InverseProgram":
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format": FORMAT_TAG,
            "forward": self.forward.to_dict(),
            "inverse": self.graph.to_dict(),
            "layout": self.layout.to_dict(),
            "value_map": [[k, v] for k, v in sorted(self.value_map.items())],
            "op_map": [[k, v] for k, v in sorted(self.op_map.items())],
            "port_map": [[f.node, f.slot, i.node, i.slot] for f, i in self.port_map],
            "shapes": {str(k): list(v) for k, v in sorted(self.shapes.items())},
            "input_shapes": {k: list(v) for k, v in sorted(self.input_shapes.items())},
            "pinned": {k: value_to_json(v) for k, v in sorted(self.pinned.items())},
            "residuals": {k: value_to_json(v) for k, v in sorted(self.residuals.items())},
            "totalized": self.totalized,
            "reduced": self.reduced,
            "base_layout": self.base_layout.to_dict() if self.base_layout is not None else None,
            "theta_sources": {k: [list(t) for t in v] for k, v in sorted(self.theta_sources.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: Any) -> "InverseProgram":
        """
        Rebuild a program from :meth:`to_dict` output.

        Raises:
            ParseError: For malformed documents.
        """
        if not isinstance(d, dict) or d.get("format") != FORMAT_TAG:
            raise ParseError(f"not an inverse program (expected format {FORMAT_TAG!r})")
        try:
            base = d.get("base_layout")
            return cls(
                forward=graph_from_dict(d["forward"], "forward"),
                graph=graph_from_dict(d["inverse"], "inverse"),
                layout=ThetaLayout.from_dict(d["layout"]),
                value_map={int(k): int(v) for k, v in d["value_map"]},
                op_map={int(k): int(v) for k, v in d["op_map"]},
                port_map=[(PortRef(a, b), PortRef(c, e)) for a, b, c, e in d["port_map"]],
                shapes={int(k): tuple(v) for k, v in d["shapes"].items()},
                input_shapes={k: tuple(v) for k, v in d.get("input_shapes", {}).items()},
                pinned={k: value_from_json(v) for k, v in d.get("pinned", {}).items()},
                residuals={k: value_from_json(v) for k, v in d.get("residuals", {}).items()},
                totalized=bool(d.get("totalized", False)),
                reduced=bool(d.get("reduced", False)),
                base_layout=ThetaLayout.from_dict(base) if base else None,
                theta_sources={k: [tuple(t) for t in v]
                               for k, v in d.get("theta_sources", {}).items()},
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ParseError(f"inverse program: missing or invalid field ({e})") from e

    @classmethod
    def from_json(cls, text: str) -> "InverseProgram":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
        return cls.from_dict(data)


# ---------------------------------------------------------------------------
# Passes
# ---------------------------------------------------------------------------

def _uses(g: Graph, value_id: int) -> int:
    node = g.node(value_id)
    return len(g.out_edges(value_id)) + (1 if node.role is Role.OUTPUT else 0)


def insert_dupl(g: Graph) -> Graph:
    """
    Route every reused value through a ``dupl:n`` op.

    A value with ``n > 1`` uses (consumers, plus one if it is an output) gets a
    ``dupl:n`` whose outputs each have a single use. An output label moves to
    the last dupl output. Graphs without reuse are returned unchanged.
    """
    reused = [v for v in g.value_ids() if _uses(g, v) > 1]
    if not reused:
        return g
    b = GraphBuilder.from_graph(g)
    for v in reused:
        node = g.node(v)
        n = _uses(g, v)
        copies = [b.internal() for _ in range(n)]
        consumer_edges = b.consumer_edges(v)
        for edge, w in zip(consumer_edges, copies):
            edge[0], edge[1] = w, None
        b.op(f"dupl:{n}", v, outputs=copies)
        if node.role is Role.OUTPUT:
            b.relabel(v, Role.INTERNAL)
            b.mark_output(copies[-1], node.name)
        logger.debug(f"Inserted dupl:{n} on value {v}")
    return b.build()


def _check_dupl_normalized(g: Graph, ann: Annotations) -> None:
    for v in g.value_ids():
        if not ann[v].known and _uses(g, v) > 1:
            raise ValidationError(f"value {v} is used {_uses(g, v)} times; run insert_dupl first")


def _check_broadcast(op_id: int, kind: str, slots: Sequence[int], g: Graph,
                     ann: Annotations, y_shape: Optional[Shape]) -> None:
    for slot in slots:
        x_shape = ann[g.op_inputs(op_id)[slot - 1]].shape
        if x_shape is not None and y_shape is not None and x_shape != y_shape:
            raise UnsupportedKind(
                f"op {op_id} ({kind}) broadcasts input {slot} from {x_shape} to {y_shape}; "
                f"broadcasting inverses are not supported"
            )


def invert(g: Graph, ann: Optional[Annotations] = None,
           input_shapes: Optional[Mapping[str, Sequence[int]]] = None,
           pinned: Optional[Mapping[str, Any]] = None) -> InverseProgram:
    """
    Build the parametric inverse of a dupl-normalized graph.

    Ops whose inputs are all known are folded away. An op with known inputs
    uses the constant-reduced inverse variant when one exists for those
    constants; otherwise the full inverse is used and the known input becomes a
    residual output that must reproduce the constant.

    Args:
        g: A valid, dupl-normalized graph.
        ann: Annotations from :func:`propagate` (computed when omitted).
        input_shapes: Declared input shapes, used when ``ann`` is computed here.
        pinned: Pinned inputs, used when ``ann`` is computed here.

    Raises:
        UnsupportedKind: If some op has no usable inverse.
        ValidationError: If ``g`` is not dupl-normalized.
    """
    shapes_decl = {k: tuple(int(d) for d in v) for k, v in (input_shapes or {}).items()}
    pinned = dict(pinned or {})
    if ann is None:
        ann = propagate(g, shapes_decl, pinned)
    _check_dupl_normalized(g, ann)

    b = GraphBuilder()
    value_map: Dict[int, int] = {}
    shapes: Dict[int, Shape] = {}
    residuals: Dict[str, Any] = {}

    def shape_or_scalar(v: int) -> Shape:
        s = ann[v].shape
        return s if s is not None else ()

    for v in g.value_ids():
        a = ann[v]
        if a.known:
            continue
        node = g.node(v)
        if node.role is Role.INPUT:
            inv_id = b.output(node.name)
        elif node.role is Role.OUTPUT:
            inv_id = b.input(node.name)
        else:
            inv_id = b.internal()
        value_map[v] = inv_id
        shapes[inv_id] = shape_or_scalar(v)

    op_map: Dict[int, int] = {}
    port_map: List[Tuple[PortRef, PortRef]] = []
    pending_ports: List[Dict[str, Any]] = []

    for op_id in reversed(g.topo_order()):
        node = g.node(op_id)
        base = node.op
        xs = g.op_inputs(op_id)
        ys = g.op_outputs(op_id)
        if all(ann[x].known for x in xs):
            continue
        if not isinstance(base, Primitive):
            raise UnsupportedKind(f"op {op_id} ({node.kind}) has no parametric inverse")
        base = base.specialize([ann[x].dtype for x in xs])

        known_slots = tuple(i + 1 for i, x in enumerate(xs) if ann[x].known)
        known_values = [ann[xs[k - 1]].value for k in known_slots]
        reduced: Tuple[int, ...] = ()
        if known_slots and base.supports_known(known_slots, known_values):
            reduced = known_slots
        inv = InverseOperator(base, reduced)
        x_shapes = [ann[x].shape for x in xs]
        y_shapes = [ann[y].shape for y in ys]
        if base.elementwise:
            _check_broadcast(op_id, node.kind,
                             [s for s in range(1, base.n_in + 1) if s not in reduced],
                             g, ann, y_shapes[0])

        inv_op = b.add_op(inv.spelling)
        op_map[op_id] = inv_op
        slot = 1
        for j, y in enumerate(ys):
            b.connect(value_map[y], None, inv_op, slot)
            port_map.append((PortRef(op_id, base.n_in + 1 + j), PortRef(inv_op, slot)))
            slot += 1
        for k, value in zip(reduced, known_values):
            c = b.constant(value)
            shapes[c] = shape_of(value)
            b.connect(c, None, inv_op, slot)
            port_map.append((PortRef(op_id, k), PortRef(inv_op, slot)))
            slot += 1
        for value in base.extras_for(reduced, known_values, x_shapes):
            c = b.constant(value)
            shapes[c] = shape_of(value)
            b.connect(c, None, inv_op, slot)
            slot += 1
        theta_shapes = base.theta_shapes(reduced, x_shapes, y_shapes, known_values)
        for k, (space, tshape) in enumerate(zip(inv.theta_spaces, theta_shapes), start=1):
            tshape = tuple(tshape) if tshape is not None else ()
            name = f"theta{op_id}_{k}"
            t = b.input(name)
            shapes[t] = tshape
            b.connect(t, None, inv_op, slot)
            pending_ports.append({
                "node": t, "name": name, "space": space, "shape": tshape, "owner": inv_op,
                "fwd_op": op_id, "kind": node.kind, "index": k,
            })
            slot += 1

        out_slot = inv.n_in + 1
        for fwd_slot in inv.output_slots():
            x = xs[fwd_slot - 1]
            if ann[x].known:
                name = f"{RESIDUAL_PREFIX}{x}"
                target = b.output(name)
                residuals[name] = ann[x].value
                shapes[target] = shape_or_scalar(x)
            else:
                target = value_map[x]
            b.connect(inv_op, out_slot, target, None)
            port_map.append((PortRef(op_id, fwd_slot), PortRef(inv_op, out_slot)))
            out_slot += 1

    inv_graph = b.build()
    rank = {op: i for i, op in enumerate(inv_graph.topo_order())}
    pending_ports.sort(key=lambda p: (rank[p["owner"]], p["index"]))
    layout = ThetaLayout([ThetaPort(**p) for p in pending_ports])

    logger.debug(
        f"Inverted graph: {len(op_map)} inverse ops, {len(layout.ports)} parameter ports, "
        f"{layout.total} slots, {len(residuals)} residual outputs"
    )
    return InverseProgram(
        forward=g, graph=inv_graph, layout=layout, value_map=value_map, op_map=op_map,
        port_map=port_map, shapes=shapes, input_shapes=shapes_decl, pinned=pinned,
        residuals=residuals,
    )


def invert_graph(g: Graph, input_shapes: Optional[Mapping[str, Sequence[int]]] = None,
                 pinned: Optional[Mapping[str, Any]] = None) -> InverseProgram:
    """insert_dupl, propagate and invert in one call."""
    normalized = insert_dupl(g)
    ann = propagate(normalized, input_shapes, pinned)
    return invert(normalized, ann, input_shapes=input_shapes, pinned=pinned)


def extract_theta_program(ip: InverseProgram, inputs: Mapping[str, Any]
                          ) -> Tuple[Dict[str, Any], np.ndarray]:
    """
    Run the forward graph and collect the parameters that reproduce ``inputs``.

    Each inverse op's parameters are extracted from the forward op's recorded
    inputs and outputs, then packed according to the layout.

    Returns:
        (forward outputs by name, parameter vector)

    Raises:
        ForwardUndefined: If the forward run produces an undefined value.
    """
    from .executor import run_forward

    outputs, trace = run_forward(ip.forward, {**ip.pinned, **dict(inputs)})
    for op_id, (xs, ys) in trace.items():
        if any(v is UNDEFINED for v in list(xs) + list(ys)):
            kind = ip.forward.node(op_id).kind
            raise ForwardUndefined(f"op {op_id} ({kind}) is undefined on the given inputs")

    full: Dict[str, Any] = {}
    for op_id, inv_op in ip.op_map.items():
        xs, ys = trace[op_id]
        inv = resolve(ip.graph.node(inv_op).kind) if ip.graph.has_node(inv_op) else None
        if inv is None:
            continue
        thetas = inv.extract(xs, ys)
        for k, value in enumerate(thetas, start=1):
            full[f"theta{op_id}_{k}"] = value

    values = {}
    for p in ip.layout.ports:
        value = full[p.source_name]
        if p.origin is not None:
            value = np.asarray(value, dtype=float).reshape(-1)[list(p.origin)]
        values[p.name] = value
    return outputs, ip.layout.pack(values)
