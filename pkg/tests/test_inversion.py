"""
Tests for dupl insertion, graph inversion and the parameter layout.
"""

import numpy as np
import pytest

from pinvtools.graph import Role, build
from pinvtools.inversion import (
    RESIDUAL_PREFIX, InverseProgram, ThetaLayout, extract_theta_program, insert_dupl, invert,
    invert_graph
)
from pinvtools.spaces import BOOL, INTEGERS, REAL, SIGN
from pinvtools.utils.validation import (
    ArityMismatch, ForwardUndefined, ParseError, UnsupportedKind, ValidationError
)


class TestInsertDupl:
    """Reused values are routed through dupl ops."""

    def test_no_reuse_is_unchanged(self, x4_graph):
        assert insert_dupl(x4_graph) is x4_graph

    def test_reused_input(self, double_graph):
        g = insert_dupl(double_graph)
        kinds = [g.node(i).kind for i in g.op_ids()]
        assert "dupl:2" in kinds
        for v in g.value_ids():
            assert len(g.consumers(v)) <= 1

    def test_reused_output_moves_label(self):
        # y = neg(x) is both an output and an input of abs
        g = build(["value:input:x", "op:neg", "value:output:y", "op:abs", "value:output:z"],
                  [[1, 1, 2, 1], [2, 2, 3, 1], [3, 2, 4, 1], [4, 2, 5, 1]])
        out = insert_dupl(g)
        assert out.node(3).role is Role.INTERNAL
        assert sorted(out.output_names()) == ["y", "z"]
        assert out.producer(out.find_output("y").id).node != 2

    def test_invert_requires_normalized_graph(self, double_graph):
        with pytest.raises(ValidationError):
            invert(double_graph)


class TestInvert:
    """Structure of inverse programs."""

    def test_x4_layout(self, x4_graph):
        ip = invert_graph(x4_graph)
        assert ip.num_params == 2
        assert ip.layout.spaces() == [SIGN, SIGN]
        # The op reading y comes first in the inverse
        assert [p.fwd_op for p in ip.layout.ports] == [4, 2]
        assert ip.y_names() == ["y"]
        assert ip.x_names() == ["x"]

    def test_roles_are_swapped(self, x4_graph):
        ip = invert_graph(x4_graph)
        assert [n.name for n in ip.graph.outputs()] == ["x"]
        assert sorted(n.name for n in ip.graph.inputs()) == ["theta2_1", "theta4_1", "y"]

    def test_constant_operand_needs_no_parameter(self, add_const_graph):
        ip = invert_graph(add_const_graph)
        assert ip.num_params == 0
        kinds = [ip.graph.node(i).kind for i in ip.graph.op_ids()]
        assert kinds == ["inv:add/k2"]

    def test_double_has_one_slot(self, double_graph):
        ip = invert_graph(double_graph)
        assert ip.num_params == 1
        assert ip.layout.spaces() == [REAL]

    def test_ik3_slot_count(self, ik3):
        ip = invert_graph(ik3)
        spaces = ip.layout.spaces()
        assert len(spaces) == 12
        assert spaces.count(REAL) == 6
        assert spaces.count(INTEGERS) == 6

    def test_layout_is_deterministic(self, ik3):
        a, b = invert_graph(ik3), invert_graph(ik3)
        assert a.layout == b.layout
        assert a.graph == b.graph

    def test_layout_ranges_are_contiguous(self, ik3):
        layout = invert_graph(ik3).layout
        start = 0
        for entry in layout.entries():
            assert entry["slot_range"][0] == start
            start = entry["slot_range"][1]
        assert start == layout.total

    def test_tensor_ports(self, mul_graph):
        ip = invert_graph(mul_graph, input_shapes={"a": [3], "b": [3]})
        assert ip.num_params == 6
        assert [p.shape for p in ip.layout.ports] == [(3,), (3,)]

    def test_residual_when_no_reduced_variant(self):
        # 0 * x has no reduced inverse, so the constant becomes a residual output
        g = build(["value:const:0.0", "value:input:x", "op:mul", "value:output:y"],
                  [[1, 1, 3, 1], [2, 1, 3, 2], [3, 3, 4, 1]])
        ip = invert_graph(g)
        assert list(ip.residuals) == [f"{RESIDUAL_PREFIX}1"]
        assert ip.x_names() == ["x"]
        assert ip.num_params == 2

    def test_broadcast_is_rejected(self, mul_graph):
        with pytest.raises(UnsupportedKind):
            invert_graph(mul_graph, input_shapes={"a": [3], "b": []})

    def test_gathernd_needs_constant_indices(self):
        g = build(["value:input:x", "value:input:i", "op:gathernd", "value:output:y"],
                  [[1, 1, 3, 1], [2, 1, 3, 2], [3, 3, 4, 1]])
        with pytest.raises(UnsupportedKind):
            invert_graph(g, input_shapes={"x": [3], "i": [2]})

    def test_gathernd_with_constant_indices(self):
        g = build(["value:input:x", "value:const:[2.0, 0.0]", "op:gathernd", "value:output:y"],
                  [[1, 1, 3, 1], [2, 1, 3, 2], [3, 3, 4, 1]])
        ip = invert_graph(g, input_shapes={"x": [3]})
        assert ip.num_params == 1
        assert ip.layout.ports[0].shape == (1,)

    def test_select_parameter_follows_branch_type(self):
        # and(p, q) feeds a select branch, so the kept branch value is Boolean
        g = build(["value:input:p", "value:input:q", "op:and", "value:internal",
                   "value:input:r", "value:input:s", "op:select", "value:output:y"],
                  [[1, 1, 3, 1], [2, 1, 3, 2], [3, 3, 4, 1], [4, 2, 7, 1], [5, 1, 7, 2],
                   [6, 1, 7, 3], [7, 4, 8, 1]])
        ip = invert_graph(g)
        select_ports = [p for p in ip.layout.ports if p.fwd_op == 7]
        assert [p.space for p in select_ports] == [BOOL, BOOL]
        assert "inv:select:bool" in [ip.graph.node(i).kind for i in ip.graph.op_ids()]

    def test_real_select_parameter(self):
        g = build(["value:input:a", "value:input:b", "value:input:c", "op:select",
                   "value:output:y"],
                  [[1, 1, 4, 1], [2, 1, 4, 2], [3, 1, 4, 3], [4, 4, 5, 1]])
        ip = invert_graph(g)
        assert ip.layout.spaces() == [REAL, BOOL]


class TestSerialization:
    def test_program_round_trip(self, ik3):
        ip = invert_graph(ik3)
        again = InverseProgram.from_json(ip.to_json())
        assert again.graph == ip.graph
        assert again.forward == ip.forward
        assert again.layout == ip.layout
        assert again.value_map == ip.value_map

    def test_wrong_format(self):
        with pytest.raises(ParseError):
            InverseProgram.from_json('{"format": "something-else"}')

    def test_layout_round_trip(self, x4_graph):
        layout = invert_graph(x4_graph).layout
        assert ThetaLayout.from_dict(layout.to_dict()) == layout

    def test_unpack_checks_length(self, x4_graph):
        layout = invert_graph(x4_graph).layout
        with pytest.raises(ArityMismatch):
            layout.unpack([1.0])


class TestExtractProgram:
    """Parameters extracted from a forward run reproduce the inputs."""

    def test_x4(self, x4_graph):
        ip = invert_graph(x4_graph)
        y, theta = extract_theta_program(ip, {"x": -2.0})
        assert y == {"y": 16.0}
        assert theta.tolist() == [1.0, -1.0]

    def test_ik3(self, ik3):
        from pinvtools.executor import run_inverse

        ip = invert_graph(ik3)
        x = {"phi1": 0.3, "phi2": -1.2, "phi3": 2.0}
        y, theta = extract_theta_program(ip, x)
        report = run_inverse(ip, y, theta)
        assert report.identity_loss == pytest.approx(0.0, abs=1e-9)
        for name, value in x.items():
            assert report.outputs[name] == pytest.approx(value, abs=1e-9)

    def test_undefined_forward(self):
        g = build(["value:input:a", "value:input:b", "op:div", "value:output:y"],
                  [[1, 1, 3, 1], [2, 1, 3, 2], [3, 3, 4, 1]])
        ip = invert_graph(g)
        with pytest.raises(ForwardUndefined):
            extract_theta_program(ip, {"a": 1.0, "b": 0.0})

    def test_tensor_parameters(self, mul_graph):
        ip = invert_graph(mul_graph, input_shapes={"a": [2], "b": [2]})
        _, theta = extract_theta_program(ip, {"a": [1.0, 2.0], "b": [3.0, 4.0]})
        assert np.allclose(theta, [3.0, 4.0, 1.0, 1.0])

    def test_boolean_select_round_trip(self):
        from pinvtools.executor import run_inverse

        g = build(["value:input:p", "value:input:q", "op:and", "value:internal",
                   "value:input:r", "value:input:s", "op:select", "value:output:y"],
                  [[1, 1, 3, 1], [2, 1, 3, 2], [3, 3, 4, 1], [4, 2, 7, 1], [5, 1, 7, 2],
                   [6, 1, 7, 3], [7, 4, 8, 1]])
        ip = invert_graph(g)
        for x in ({"p": True, "q": False, "r": True, "s": False},
                  {"p": True, "q": True, "r": False, "s": True}):
            y, theta = extract_theta_program(ip, x)
            report = run_inverse(ip, y, theta)
            assert {k: bool(v) for k, v in report.outputs.items()} == x
