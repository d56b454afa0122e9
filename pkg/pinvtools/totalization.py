"""
Totalization.

Inserts a contraction in front of every input of every inverse op (values and
parameters alike) so that evaluation never produces undefined values. Each
contraction targets the domain its downstream op declares for that input and
acts as a loss tap: the distance of its raw input to that domain is the
contribution to the domain loss.
"""

from typing import Any, Union

from .graph import GraphBuilder, Role
from .inversion import InverseProgram
from .primitives import Contraction
from .spaces import ParamSpace, parse_space
from .values import check_value
from .utils.logger import get_logger

logger = get_logger("totalization")


def contract_value(space: Union[ParamSpace, str], value: Any) -> Any:
    """
    Map ``value`` into ``space``; identity on members.

    Intervals clip, integers round half to even, finite sets pick the nearest
    member (ties to the smaller) and punctured sets shift by epsilon.
    """
    if isinstance(space, str):
        space = parse_space(space)
    return space.contract(check_value(value))


def totalize(ip: InverseProgram) -> InverseProgram:
    """
    Return a copy of ``ip`` with contractions before every non-constant op input.

    Contractions themselves are not wrapped again; a program that is already
    totalized is returned as is.
    """
    if ip.totalized:
        return ip
    return cover_inputs(ip)


def cover_inputs(ip: InverseProgram) -> InverseProgram:
    """
    Contract every non-constant op input not already contracted to its domain.

    Used by :func:`totalize` and to keep a totalized program total after ops
    are added to it.
    """
    g = ip.graph
    b = GraphBuilder.from_graph(g)
    shapes = dict(ip.shapes)
    inserted = 0
    for op_id in g.topo_order():
        op = g.node(op_id).op
        if isinstance(op, Contraction):
            continue
        for slot, (src, domain) in enumerate(zip(g.op_inputs(op_id), op.input_domains()),
                                             start=1):
            if g.node(src).role is Role.CONSTANT:
                continue
            producer = g.producer(src)
            if producer is not None:
                upstream = g.node(producer.node).op
                if isinstance(upstream, Contraction) and upstream.space.code == domain.code:
                    continue
            contracted = b.internal()
            shapes[contracted] = shapes.get(src, ())
            b.reroute_input(op_id, slot, contracted)
            b.op(f"contract:{domain.code}", src, outputs=[contracted])
            inserted += 1
    logger.debug(f"Totalized program: {inserted} contractions inserted")
    return ip.copy_with(graph=b.build(), shapes=shapes, totalized=True)
