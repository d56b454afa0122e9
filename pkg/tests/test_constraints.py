"""
Tests for constraint collection and parameter elimination.
"""

import math

import numpy as np
import pytest

from pinvtools.bench import gen_random, sample_inputs
from pinvtools.config import GenSpec
from pinvtools.constraints import (
    Const, Exp, Log, Sym, add, collect, eliminate, mul, recover_full_theta, reduce_program,
    solve_for
)
from pinvtools.executor import run_forward, run_inverse
from pinvtools.graph import build
from pinvtools.inversion import invert_graph
from pinvtools.spaces import NONNEG, REAL, SIGN
from pinvtools.totalization import totalize
from pinvtools.values import is_finite_value
from pinvtools.utils.validation import NotTotalized


class TestCollect:
    def test_double_has_one_equality(self, double_graph):
        cs = collect(invert_graph(double_graph))
        assert [(c.relation, c.source) for c in cs] == [("in", "theta"), ("eq", "dupl")]
        assert cs[0].space == REAL

    def test_x4_domains(self, x4_graph):
        cs = collect(invert_graph(x4_graph))
        assert [c.space for c in cs if c.source == "theta"] == [SIGN, SIGN]
        domains = [c for c in cs if c.source == "domain"]
        assert len(domains) == 2
        assert all(c.space == NONNEG for c in domains)
        assert not any(c.is_eq for c in cs)

    def test_constant_program_has_none(self, add_const_graph):
        assert collect(invert_graph(add_const_graph)) == []

    def test_to_dict_uses_names(self, double_graph):
        ip = invert_graph(double_graph)
        d = collect(ip)[0].to_dict({p.node: p.name for p in ip.layout.ports})
        assert d == {"relation": "in", "source": "theta", "origin": ip.layout.ports[0].node,
                     "lhs": ip.layout.ports[0].name, "space": "real"}


class TestSolveFor:
    """Solving is limited to isolation and affine equations."""

    s = Sym(1, 0)

    def test_constant_offset(self):
        assert solve_for(add(self.s, Const(3.0)), Const(5.0), self.s) == Const(2.0)

    def test_through_exp(self):
        assert solve_for(Exp(self.s), Sym(2, 0), self.s) == Log(Sym(2, 0))

    def test_symbol_on_both_sides(self):
        assert solve_for(self.s, mul(Const(2.0), self.s), self.s) == Const(0.0)

    def test_nonlinear_is_not_solved(self):
        assert solve_for(mul(self.s, self.s), Const(4.0), self.s) is None

    def test_absent_symbol(self):
        assert solve_for(Sym(2, 0), Const(1.0), self.s) is None


class TestReduce:
    def test_double_loses_its_slot(self, double_graph):
        ip = invert_graph(double_graph)
        reduced, report = reduce_program(ip)
        assert (report.slots_before, report.slots_after) == (1, 0)
        assert reduced.num_params == 0
        assert reduced.reduced
        assert len(report.eliminated) == 1
        assert report.remaining_equalities == []

    def test_reduced_double_halves_target(self, double_graph):
        reduced = eliminate(invert_graph(double_graph))
        out = run_inverse(reduced, {"y": 4.0}, [])
        assert out.outputs["x"] == pytest.approx(2.0)
        assert out.identity_loss == pytest.approx(0.0)

    def test_recover_full_theta(self, double_graph):
        reduced = eliminate(invert_graph(double_graph))
        assert recover_full_theta(reduced, {"y": 4.0}, []).tolist() == pytest.approx([2.0])

    def test_recover_on_unreduced_is_a_copy(self, x4_graph):
        ip = invert_graph(x4_graph)
        assert recover_full_theta(ip, {"y": 16.0}, [1.0, -1.0]).tolist() == [1.0, -1.0]

    def test_nothing_to_eliminate(self, x4_graph, add_const_graph):
        for g in (x4_graph, add_const_graph):
            ip = invert_graph(g)
            reduced, report = reduce_program(ip)
            assert reduced is ip
            assert report.slots_after == report.slots_before

    def test_reduce_is_idempotent(self, double_graph):
        reduced = eliminate(invert_graph(double_graph))
        again, _ = reduce_program(reduced)
        assert again is reduced

    def test_ik3_keeps_discrete_slots(self, ik3):
        ip = invert_graph(ik3)
        reduced, report = reduce_program(ip)
        assert report.slots_after == reduced.num_params
        assert report.slots_after <= report.slots_before
        discrete = [s for s in reduced.layout.spaces() if s.discrete]
        assert len(discrete) == 6

    def test_report_dict(self, double_graph):
        _, report = reduce_program(invert_graph(double_graph))
        assert set(report.to_dict()) == {"slots_before", "slots_after", "eliminated",
                                         "remaining_equalities", "constraints"}

    def test_reduced_totalized_program_stays_total(self):
        # exp(x) and x + z share x, so the add parameter is solved through a log of y1
        g = build(["value:input:x", "value:input:z", "op:exp", "value:output:y1", "op:add",
                   "value:output:y2"],
                  [[1, 1, 3, 1], [3, 2, 4, 1], [1, 2, 5, 1], [2, 1, 5, 2], [5, 3, 6, 1]])
        tot = totalize(invert_graph(g))
        reduced = eliminate(tot)
        assert reduced.totalized
        assert (tot.num_params, reduced.num_params) == (1, 0)
        y = {"y1": -1.0, "y2": 0.5}
        theta = [0.0] * reduced.num_params
        report = run_inverse(reduced, y, theta)
        assert all(math.isfinite(v) for v in report.outputs.values())
        full = run_inverse(tot, y, recover_full_theta(reduced, y, theta))
        assert _same_outputs(report.outputs, full.outputs)


def _same_outputs(a, b, tol=1e-12):
    if set(a) != set(b):
        return False
    for name, u in a.items():
        v = b[name]
        if isinstance(u, bool) or isinstance(v, bool):
            if bool(u) != bool(v):
                return False
        elif not (u == v or (math.isnan(u) and math.isnan(v))
                  or abs(u - v) <= tol * max(1.0, abs(v))):
            return False
    return True


def _targets(g, rng):
    """Forward image of sampled inputs with the real outputs pushed off it."""
    outputs, _ = run_forward(g, sample_inputs(g, rng))
    y = {}
    for name, v in outputs.items():
        if isinstance(v, bool):
            y[name] = v
        elif is_finite_value(v):
            y[name] = float(v) + float(rng.normal(scale=0.5))
        else:
            y[name] = float(rng.standard_normal())
    return y


def _random_programs(seeds, rng):
    for seed in seeds:
        ip = invert_graph(gen_random(GenSpec(seed=seed, op_range=(2, 8))))
        for _ in range(3):
            yield ip, _targets(ip.forward, rng)


class TestReducedEquivalence:
    """Reduced programs behave like the original under the recovered parameters."""

    @pytest.mark.parametrize("order", ["totalize-then-reduce", "reduce-then-totalize"])
    def test_random_graphs(self, order):
        rng = np.random.default_rng(17)
        reductions = 0
        for ip, y in _random_programs(range(60), rng):
            tot = totalize(ip)
            if order == "totalize-then-reduce":
                reduced = eliminate(tot)
            else:
                reduced = totalize(eliminate(ip))
            reductions += reduced.num_params < tot.num_params
            for _ in range(5):
                theta = rng.normal(scale=2.0, size=reduced.num_params)
                report = run_inverse(reduced, y, theta)
                full = run_inverse(tot, y, recover_full_theta(reduced, y, theta))
                assert _same_outputs(report.outputs, full.outputs), (ip.forward.to_dict(), y)
        assert reductions > 0

    def test_untotalized_reduction_agrees_where_defined(self):
        rng = np.random.default_rng(23)
        checked = 0
        for ip, y in _random_programs(range(40), rng):
            reduced = eliminate(ip)
            for _ in range(5):
                theta = rng.normal(scale=2.0, size=reduced.num_params)
                try:
                    report = run_inverse(reduced, y, theta)
                    full = run_inverse(ip, y, recover_full_theta(reduced, y, theta))
                except NotTotalized:
                    continue
                assert _same_outputs(report.outputs, full.outputs)
                checked += 1
        assert checked > 0
