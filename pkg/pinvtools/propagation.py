"""
Constant and shape propagation.

One forward pass in topological order annotates every value node with its
constness (a known value or unknown) and its shape. Inversion uses the
annotations to pick constant-reduced inverse variants and to size parameter
ports.
"""

from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple

from .graph import Graph, Role
from .primitives import Dupl, Primitive, forward_eval
from .spaces import BOOL
from .values import UNDEFINED, check_value, dtype_of, shape_of, value_to_json
from .utils.logger import get_logger
from .utils.validation import ShapeMismatch

logger = get_logger("propagation")

Shape = Optional[Tuple[int, ...]]


@dataclass(frozen=True, eq=False)
class Annotation:
    """What is statically known about one value node."""

    known: bool
    value: Any = None
    shape: Shape = None
    dtype: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "const": value_to_json(self.value) if self.known else None,
            "known": self.known,
            "shape": list(self.shape) if self.shape is not None else None,
            "dtype": self.dtype,
        }


Annotations = Dict[int, Annotation]


def _normalize_shape(shape: Any) -> Shape:
    if shape is None:
        return None
    return tuple(int(d) for d in shape)


def _read_as_bool(g: Graph, value_id: int) -> bool:
    for ref in g.consumers(value_id):
        op = g.node(ref.node).op
        if isinstance(op, Dupl):
            if any(_read_as_bool(g, v) for v in g.op_outputs(ref.node)):
                return True
        elif isinstance(op, Primitive) and op.input_domains()[ref.slot - 1] == BOOL:
            return True
    return False


def _input_dtype(g: Graph, value_id: int, shape: Shape) -> str:
    """Type tag of a free input: Boolean when some op reads it as a condition or gate input."""
    if shape:
        return "tensor"
    return "bool" if _read_as_bool(g, value_id) else "real"


def propagate(g: Graph, input_shapes: Optional[Mapping[str, Sequence[int]]] = None,
              pinned: Optional[Mapping[str, Any]] = None) -> Annotations:
    """
    Annotate every value node of ``g``.

    Args:
        g: A valid graph.
        input_shapes: Declared shapes of inputs by name; undeclared inputs are scalars.
        pinned: Inputs whose values are fixed; they propagate like constants.

    Returns:
        Map from value node id to :class:`Annotation`.

    Raises:
        ShapeMismatch: When shapes are inconsistent.
    """
    input_shapes = dict(input_shapes or {})
    pinned = dict(pinned or {})
    ann: Annotations = {}

    for node in g.nodes.values():
        if node.is_op:
            continue
        if node.role is Role.CONSTANT:
            ann[node.id] = Annotation(True, node.value, shape_of(node.value), dtype_of(node.value))
        elif node.role is Role.INPUT:
            if node.name in pinned:
                value = check_value(pinned[node.name], f"pinned input {node.name!r}")
                declared = _normalize_shape(input_shapes.get(node.name))
                if declared is not None and declared != shape_of(value):
                    raise ShapeMismatch(
                        f"pinned input {node.name!r} has shape {shape_of(value)}, declared {declared}"
                    )
                ann[node.id] = Annotation(True, value, shape_of(value), dtype_of(value))
            else:
                shape = _normalize_shape(input_shapes.get(node.name, ()))
                ann[node.id] = Annotation(False, None, shape, _input_dtype(g, node.id, shape))

    for op_id in g.topo_order():
        node = g.node(op_id)
        op = node.op
        ins = [ann[v] for v in g.op_inputs(op_id)]
        outs = g.op_outputs(op_id)
        if all(a.known for a in ins):
            values = forward_eval(op, [a.value for a in ins])
            for v, value in zip(outs, values):
                if value is UNDEFINED:
                    logger.debug(f"Op {op_id} ({node.kind}) is undefined on its constant inputs")
                ann[v] = Annotation(True, value, shape_of(value), dtype_of(value))
            continue
        try:
            shapes = op.infer_shapes([a.shape for a in ins],
                                     [a.value if a.known else None for a in ins])
        except ShapeMismatch as e:
            raise ShapeMismatch(f"op {op_id} ({node.kind}): {e}") from e
        for v, shape in zip(outs, shapes):
            if shape:
                dtype = "tensor"
            elif isinstance(op, Primitive):
                dtype = op.result_dtype([a.dtype for a in ins])
            else:
                dtype = None if shape is None else "real"
            ann[v] = Annotation(False, None, shape, dtype)

    known = sum(1 for a in ann.values() if a.known)
    logger.debug(f"Propagated {len(ann)} values, {known} known")
    return ann


def annotations_to_dict(ann: Annotations) -> Dict[str, Any]:
    """JSON form keyed by node id (as text, in ascending order)."""
    return {str(k): ann[k].to_dict() for k in sorted(ann)}
