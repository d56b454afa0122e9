"""
Tests for the forward and inverse interpreters.
"""

import math

import numpy as np
import pytest

from pinvtools.bench import ik_forward
from pinvtools.executor import (
    evaluate_inverse, metric, metric_many, run_forward, run_inverse, run_inverse_fast
)
from pinvtools.inversion import invert_graph
from pinvtools.totalization import totalize
from pinvtools.values import UNDEFINED
from pinvtools.utils.validation import ArityMismatch, MissingInput, TypeMismatch


class TestMetric:
    def test_reals(self):
        assert metric(1.5, -0.5) == 2.0
        assert metric(3.0, 3.0) == 0.0

    def test_tensors(self):
        assert metric(np.array([0.0, 3.0]), np.array([3.0, 0.0])) == pytest.approx(math.sqrt(18))

    def test_discrete(self):
        assert metric(True, False) == 1.0
        assert metric(True, True) == 0.0
        assert metric(2, 5) == 1.0

    def test_undefined_is_infinitely_far(self):
        assert metric(UNDEFINED, 1.0) == math.inf
        assert metric_many([1.0, UNDEFINED], [1.0, 2.0]) == math.inf

    def test_tensor_against_scalar(self):
        with pytest.raises(TypeMismatch):
            metric(np.array([1.0]), 1.0)

    def test_many_is_euclidean(self):
        assert metric_many([0.0, 0.0], [3.0, 4.0]) == pytest.approx(5.0)


class TestRunForward:
    def test_x4(self, x4_graph):
        outputs, trace = run_forward(x4_graph, {"x": -2.0})
        assert outputs == {"y": 16.0}
        assert trace[2] == ([-2.0], [4.0])
        assert trace[4] == ([4.0], [16.0])

    def test_ik_matches_direct_evaluation(self, ik3):
        phis = [0.4, -1.1, 2.3]
        outputs, _ = run_forward(ik3, {f"phi{i}": v for i, v in enumerate(phis, start=1)})
        x, y = ik_forward(phis)
        assert outputs["x"] == pytest.approx(x)
        assert outputs["y"] == pytest.approx(y)

    def test_missing_input(self, add_const_graph):
        with pytest.raises(MissingInput):
            run_forward(add_const_graph, {})

    def test_undefined_propagates(self):
        from pinvtools.graph import build

        g = build(["value:input:a", "value:input:b", "op:div", "value:output:y"],
                  [[1, 1, 3, 1], [2, 1, 3, 2], [3, 3, 4, 1]])
        outputs, _ = run_forward(g, {"a": 1.0, "b": 0.0})
        assert outputs["y"] is UNDEFINED

    def test_plan_is_cached(self, x4_graph):
        run_forward(x4_graph, {"x": 1.0})
        plan = x4_graph.plan_cache
        run_forward(x4_graph, {"x": 2.0})
        assert x4_graph.plan_cache is plan


class TestRunInverse:
    def test_exact_parameters(self, x4_graph):
        ip = totalize(invert_graph(x4_graph))
        report = run_inverse(ip, {"y": 16.0}, [1.0, -1.0])
        assert report.outputs == {"x": pytest.approx(-2.0)}
        assert report.identity_loss == pytest.approx(0.0)
        assert report.domain_loss == 0.0

    def test_taps_record_their_origin(self, x4_graph):
        ip = totalize(invert_graph(x4_graph))
        report = run_inverse(ip, {"y": 16.0}, [-1.0, 1.0])
        charged = [t for t in report.per_tap if t.distance > 0]
        assert len(charged) == 1
        assert charged[0].source == "contraction"
        assert charged[0].distance == pytest.approx(4.0)

    def test_double_charges_disagreement(self, double_graph):
        ip = totalize(invert_graph(double_graph))
        report = run_inverse(ip, {"y": 4.0}, [1.0])
        # the add inverse yields (3, 1); dupl averages them to 2
        assert report.outputs["x"] == pytest.approx(2.0)
        assert report.identity_loss == pytest.approx(0.0)
        joint = [t for t in report.per_tap if t.source == "joint"]
        assert joint[0].distance == pytest.approx(2.0)

    def test_missing_target(self, x4_graph):
        ip = totalize(invert_graph(x4_graph))
        with pytest.raises(MissingInput):
            run_inverse(ip, {}, [1.0, 1.0])

    def test_wrong_theta_length(self, x4_graph):
        ip = totalize(invert_graph(x4_graph))
        with pytest.raises(ArityMismatch):
            run_inverse(ip, {"y": 16.0}, [1.0])

    def test_report_dict(self, x4_graph):
        ip = totalize(invert_graph(x4_graph))
        d = run_inverse(ip, {"y": 16.0}, [1.0, 1.0]).to_dict()
        assert set(d) == {"identity_loss", "domain_loss", "outputs", "taps"}
        assert d["outputs"] == {"x": 2.0}

    def test_fast_path_agrees(self, ik3):
        ip = totalize(invert_graph(ik3))
        rng = np.random.default_rng(3)
        theta = rng.normal(size=ip.num_params)
        y = {"x": 1.2, "y": 0.7}
        report = run_inverse(ip, y, theta)
        outputs, domain, ident = run_inverse_fast(ip, y, theta, with_identity=True)
        assert domain == pytest.approx(report.domain_loss)
        assert ident == pytest.approx(report.identity_loss)
        assert outputs.keys() == report.outputs.keys()

    def test_evaluate_keeps_undefined(self, x4_graph):
        ip = invert_graph(x4_graph)
        env = evaluate_inverse(ip, {"y": 16.0}, [-1.0, 1.0])
        x_node = ip.graph.find_output("x").id
        assert env[x_node] is UNDEFINED
