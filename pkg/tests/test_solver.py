"""
Tests for the parameter-space and input-space solvers.
"""

import math

import numpy as np
import pytest

from pinvtools.config import SolveConfig
from pinvtools.constraints import eliminate
from pinvtools.inversion import invert_graph
from pinvtools.solver import (
    Objective, abs_sum_loss, make_loss, solve_theta, solve_x_baseline, target_loss, zero_loss
)
from pinvtools.totalization import totalize
from pinvtools.utils.validation import ConfigError, NotTotalized

SMALL = SolveConfig(restarts=3, max_evals=2000, seed=7)


class TestLosses:
    def test_abs_sum(self):
        assert abs_sum_loss({"a": -1.5, "b": np.array([1.0, -2.0])}) == 4.5

    def test_target(self):
        loss = target_loss({"x": 2.0})
        assert loss({"x": -1.0}) == 3.0

    def test_make_loss(self, write_json):
        assert make_loss("abs-sum") is abs_sum_loss
        assert make_loss("zero") is zero_loss
        path = write_json("target.json", {"x": 1.0})
        assert make_loss(f"target:{path}")({"x": 4.0}) == 3.0

    def test_unknown_loss(self):
        with pytest.raises(ConfigError):
            make_loss("l2")

    def test_unreadable_target(self, tmp_path):
        with pytest.raises(ConfigError):
            make_loss(f"target:{tmp_path / 'missing.json'}")


class TestSolveTheta:
    def test_requires_totalized_program(self, x4_graph):
        ip = invert_graph(x4_graph)
        with pytest.raises(NotTotalized):
            solve_theta(ip, Objective(zero_loss, {"y": 16.0}), SMALL)

    def test_x4_picks_the_positive_root(self, x4_graph):
        ip = totalize(invert_graph(x4_graph))
        objective = Objective(target_loss({"x": 2.0}), {"y": 16.0})
        result = solve_theta(ip, objective, SMALL)
        assert result.theta.tolist() == [1.0, 1.0]
        assert result.x["x"] == pytest.approx(2.0)
        assert result.objective == pytest.approx(0.0)
        assert result.losses["identity_loss"] == pytest.approx(0.0)

    def test_trajectory_never_increases(self, x4_graph):
        ip = totalize(invert_graph(x4_graph))
        result = solve_theta(ip, Objective(target_loss({"x": 2.0}), {"y": 16.0}), SMALL)
        traj = result.trajectory
        assert traj
        assert all(b <= a for a, b in zip(traj, traj[1:]))
        assert traj[-1] == pytest.approx(result.objective)

    def test_double_balances_the_split(self, double_graph):
        ip = totalize(invert_graph(double_graph))
        result = solve_theta(ip, Objective.named("abs-sum", {"y": 4.0}), SMALL)
        assert result.x["x"] == pytest.approx(2.0)
        assert result.losses["domain_loss"] == pytest.approx(0.0, abs=1e-4)
        assert result.theta[0] == pytest.approx(2.0, abs=1e-4)

    def test_reduced_program_reports_full_theta(self, double_graph):
        ip = totalize(eliminate(invert_graph(double_graph)))
        result = solve_theta(ip, Objective.named("abs-sum", {"y": 4.0}), SMALL)
        assert result.theta.size == 0
        assert result.metadata["theta_full"] == pytest.approx([2.0])
        assert result.objective == pytest.approx(2.0)

    def test_seed_determinism(self, ik3):
        ip = totalize(invert_graph(ik3))
        config = SolveConfig(restarts=2, max_evals=300, seed=11)
        objective = Objective.named("zero", {"x": 1.0, "y": 1.0})
        a = solve_theta(ip, objective, config)
        b = solve_theta(ip, objective, config)
        assert np.array_equal(a.theta, b.theta)
        assert a.trajectory == b.trajectory

    def test_workers_do_not_change_the_result(self, ik3):
        ip = totalize(invert_graph(ik3))
        objective = Objective.named("zero", {"x": 1.0, "y": 1.0})
        serial = solve_theta(ip, objective, SolveConfig(restarts=3, max_evals=200, seed=5))
        threaded = solve_theta(ip, objective,
                               SolveConfig(restarts=3, max_evals=200, seed=5, workers=3))
        assert np.array_equal(serial.theta, threaded.theta)
        assert serial.trajectory == threaded.trajectory

    def test_budget_is_respected(self, ik3):
        ip = totalize(invert_graph(ik3))
        config = SolveConfig(restarts=2, max_evals=50)
        result = solve_theta(ip, Objective.named("zero", {"x": 1.0, "y": 1.0}), config)
        assert result.evaluations <= 100

    def test_result_dict(self, x4_graph):
        ip = totalize(invert_graph(x4_graph))
        d = solve_theta(ip, Objective(target_loss({"x": 2.0}), {"y": 16.0}), SMALL).to_dict()
        assert d["method"] == "theta"
        assert d["theta"] == [1.0, 1.0]
        assert set(d["losses"]) == {"objective", "loss", "identity_loss", "domain_loss"}


class TestBaseline:
    def test_x4_finds_a_root(self, x4_graph):
        result = solve_x_baseline(x4_graph, Objective(zero_loss, {"y": 16.0}), SMALL)
        assert result.theta is None
        assert result.method == "x"
        assert result.losses["identity_loss"] < 1e-3
        assert abs(result.x["x"]) == pytest.approx(2.0, abs=1e-3)

    def test_pinned_inputs_are_not_searched(self, mul_graph):
        result = solve_x_baseline(mul_graph, Objective(zero_loss, {"y": 6.0}), SMALL,
                                  pinned={"a": 2.0})
        assert list(result.x) == ["b"]
        assert result.x["b"] == pytest.approx(3.0, abs=1e-3)


class TestSolveConfig:
    def test_defaults(self):
        config = SolveConfig()
        assert config.restarts == 16
        assert config.lambda_dm == 1.0

    @pytest.mark.parametrize("field,value", [
        ("restarts", 0), ("max_evals", -1), ("lambda_dm", -0.5), ("lambda_dm", math.inf),
        ("seed", -1), ("workers", 0),
    ])
    def test_invalid_values(self, field, value):
        with pytest.raises(ConfigError):
            SolveConfig(**{field: value})

    def test_with_overrides_skips_none(self):
        config = SolveConfig().with_overrides(seed=3, restarts=None)
        assert config.seed == 3
        assert config.restarts == 16

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown keys"):
            SolveConfig.from_dict({"restart": 2})
