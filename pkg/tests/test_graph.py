"""
Tests for the pinvtools.graph module: parsing, validation and building.
"""

import json

import pytest

from pinvtools.graph import Graph, GraphBuilder, Role, build, from_json, to_json
from pinvtools.utils.validation import (
    CycleDetected, DanglingOpPort, NonBipartiteEdge, ParseError, UnlabeledSinkValue,
    UnlabeledSourceValue, ValidationError, ValueFanInViolation
)

from tests.conftest import X4_EDGES, X4_NODES


def _doc(nodes, edges):
    return json.dumps({
        "nodes": [{"id": i, "kind": k} for i, k in enumerate(nodes, start=1)],
        "edges": edges,
    })


class TestParse:
    """Reading graphs from JSON."""

    def test_round_trip(self, x4_graph):
        again = from_json(to_json(x4_graph))
        assert again == x4_graph
        assert again.to_json() == x4_graph.to_json()

    def test_constant_values(self, add_const_graph):
        const = add_const_graph.constants()[0]
        assert const.role is Role.CONSTANT
        assert const.value == 3.0
        assert const.label == "value:const:3.0"

    def test_tensor_constant(self):
        g = build(["value:input:x", "value:const:[1.0, 2.0]", "op:add", "value:output:y"],
                  [[1, 1, 3, 1], [2, 1, 3, 2], [3, 3, 4, 1]])
        assert g.constants()[0].value.tolist() == [1.0, 2.0]

    def test_syntax_error_reports_position(self):
        with pytest.raises(ParseError, match="line 1"):
            from_json('{"nodes": [')

    def test_unknown_kind(self):
        with pytest.raises(ParseError):
            from_json(_doc(["value:input:x", "op:frobnicate", "value:output:y"],
                           [[1, 1, 2, 1], [2, 2, 3, 1]]))

    def test_bad_edge_shape(self):
        with pytest.raises(ParseError, match="edges"):
            from_json(_doc(X4_NODES, [[1, 1, 2]]))

    def test_missing_kind_field(self):
        with pytest.raises(ParseError):
            Graph.from_dict({"nodes": [{"id": 1}], "edges": []})

    def test_parameterized_kinds(self):
        g = build(["value:input:x", "op:clip:0:1", "value:output:y"],
                  [[1, 1, 2, 1], [2, 2, 3, 1]])
        assert g.node(2).op.spelling == "clip:0:1"


class TestValidate:
    """Each structural invariant has its own error."""

    def test_valid_graph(self, x4_graph):
        assert x4_graph.num_ops() == 2
        assert x4_graph.num_values() == 3
        assert x4_graph.input_names() == ["x"]
        assert x4_graph.output_names() == ["y"]

    def test_op_to_op_edge(self):
        with pytest.raises(NonBipartiteEdge):
            build(["value:input:x", "op:neg", "op:neg", "value:output:y"],
                  [[1, 1, 2, 1], [2, 2, 3, 1], [3, 2, 4, 1]])

    def test_value_with_two_producers(self):
        with pytest.raises(ValueFanInViolation):
            build(["value:input:a", "value:input:b", "op:neg", "op:neg", "value:output:y"],
                  [[1, 1, 3, 1], [2, 1, 4, 1], [3, 2, 5, 1], [4, 2, 5, 1]])

    def test_input_with_producer(self):
        with pytest.raises(ValueFanInViolation):
            build(["value:input:a", "op:neg", "value:input:b"],
                  [[1, 1, 2, 1], [2, 2, 3, 1]])

    def test_unlabeled_source(self):
        with pytest.raises(UnlabeledSourceValue):
            build(["value:internal", "op:neg", "value:output:y"],
                  [[1, 1, 2, 1], [2, 2, 3, 1]])

    def test_unlabeled_sink(self):
        with pytest.raises(UnlabeledSinkValue):
            build(["value:input:x", "op:neg", "value:internal"],
                  [[1, 1, 2, 1], [2, 2, 3, 1]])

    def test_unconnected_op_port(self):
        with pytest.raises(DanglingOpPort):
            build(["value:input:x", "op:add", "value:output:y"],
                  [[1, 1, 2, 1], [2, 3, 3, 1]])

    def test_cycle(self):
        nodes = ["value:input:x", "op:add", "value:internal", "op:neg", "value:internal",
                 "value:output:y", "op:dupl:2", "value:internal"]
        # add(x, w) -> a; dupl(a) -> (b, y); neg(b) -> w
        edges = [[1, 1, 2, 1], [5, 2, 2, 2], [2, 3, 3, 1], [3, 2, 7, 1], [7, 2, 8, 1],
                 [7, 3, 6, 1], [8, 2, 4, 1], [4, 2, 5, 1]]
        with pytest.raises(CycleDetected):
            build(nodes, edges)

    def test_errors_share_a_base(self):
        for cls in (CycleDetected, NonBipartiteEdge, ValueFanInViolation,
                    UnlabeledSourceValue, UnlabeledSinkValue, DanglingOpPort):
            assert issubclass(cls, ValidationError)


class TestQueries:
    def test_topo_order(self, x4_graph):
        assert x4_graph.topo_order() == [2, 4]

    def test_producer_and_consumers(self, x4_graph):
        prod = x4_graph.producer(3)
        assert (prod.node, prod.slot) == (2, 2)
        assert [(c.node, c.slot) for c in x4_graph.consumers(3)] == [(4, 1)]
        assert x4_graph.producer(1) is None

    def test_equality_is_structural(self):
        a = build(X4_NODES, X4_EDGES)
        b = build(X4_NODES, X4_EDGES)
        c = build(["value:input:x", "op:sqr", "value:internal", "op:abs", "value:output:y"],
                  X4_EDGES)
        assert a == b
        assert a != c


class TestBuilder:
    """GraphBuilder numbers value-side slots on build."""

    def test_build_by_application(self):
        b = GraphBuilder()
        x = b.input("x")
        y = b.apply("sqr", b.apply("sqr", x))
        b.mark_output(y, "y")
        g = b.build()
        assert g.to_dict()["edges"] == X4_EDGES

    def test_wrong_arity(self):
        b = GraphBuilder()
        x = b.input("x")
        with pytest.raises(ValidationError):
            b.apply("add", x)

    def test_from_graph_keeps_ids(self, x4_graph):
        b = GraphBuilder.from_graph(x4_graph)
        assert b.build() == x4_graph
        assert b.internal() == 6
