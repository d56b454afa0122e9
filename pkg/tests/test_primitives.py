"""
Tests for the pinvtools.primitives module: forward semantics, parametric
inverses and parameter extraction.
"""

import math

import numpy as np
import pytest

from pinvtools.primitives import (
    OR_INVERSE_TABLE, PRIMITIVE_NAMES, derive_boolean_table, domain_distance, extract_theta,
    forward_eval, inverse_eval, inverse_of, resolve, theta_spaces
)
from pinvtools.spaces import BOOL, INTEGERS, NONNEG, NONZERO, REAL, SIGN
from pinvtools.values import UNDEFINED
from pinvtools.utils.validation import ArityMismatch, NotInDomain, ParseError, TypeMismatch

# Scalar primitives with a point in their domain, for the round-trip checks
REAL_CASES = [
    ("add", [1.5, -0.25]),
    ("sub", [2.0, 5.0]),
    ("mul", [3.0, -2.0]),
    ("div", [7.0, 0.5]),
    ("pow", [2.0, 3.0]),
    ("log", [2.0, 8.0]),
    ("abs", [-1.25]),
    ("sqr", [-3.0]),
    ("neg", [4.0]),
    ("exp", [0.3]),
    ("cos", [2 * math.pi + 0.5]),
    ("sin", [-2.0]),
    ("tan", [4.0]),
    ("min", [4.0, 7.0]),
    ("max", [4.0, 7.0]),
    ("gt", [3.0, 1.0]),
    ("lt", [3.0, 1.0]),
    ("eq", [2.0, 5.0]),
    ("clip:0:1", [1.75]),
]


class TestForward:
    """Forward evaluation of each primitive."""

    @pytest.mark.parametrize("kind,inputs,expected", [
        ("add", [1.0, 2.0], 3.0),
        ("sub", [1.0, 2.0], -1.0),
        ("mul", [3.0, 4.0], 12.0),
        ("div", [3.0, 4.0], 0.75),
        ("pow", [2.0, 10.0], 1024.0),
        ("log", [10.0, 1000.0], 3.0),
        ("abs", [-2.0], 2.0),
        ("sqr", [-3.0], 9.0),
        ("neg", [2.0], -2.0),
        ("min", [3.0, -1.0], -1.0),
        ("max", [3.0, -1.0], 3.0),
        ("clip:0:1", [7.0], 1.0),
    ])
    def test_values(self, kind, inputs, expected):
        assert forward_eval(kind, inputs)[0] == pytest.approx(expected)

    def test_booleans(self):
        assert forward_eval("gt", [2.0, 1.0]) == [True]
        assert forward_eval("eq", [2.0, 1.0]) == [False]
        assert forward_eval("and", [True, False]) == [False]
        assert forward_eval("or", [True, False]) == [True]
        assert forward_eval("xor", [True, True]) == [False]

    def test_out_of_domain_is_undefined(self):
        assert forward_eval("div", [1.0, 0.0]) == [UNDEFINED]
        assert forward_eval("pow", [-2.0, 0.5]) == [UNDEFINED]
        assert forward_eval("log", [1.0, 5.0]) == [UNDEFINED]

    def test_undefined_propagates(self):
        assert forward_eval("add", [UNDEFINED, 1.0]) == [UNDEFINED]

    def test_overflow_gives_infinity(self):
        assert forward_eval("exp", [1000.0]) == [math.inf]

    def test_tensors_are_elementwise(self):
        out = forward_eval("mul", [[1.0, 2.0], [3.0, 4.0]])[0]
        np.testing.assert_array_equal(out, np.array([3.0, 8.0]))

    def test_dupl_copies(self):
        assert forward_eval("dupl:3", [2.5]) == [2.5, 2.5, 2.5]

    def test_select(self):
        assert forward_eval("select", [1.0, 2.0, True]) == [1.0]
        assert forward_eval("select", [1.0, 2.0, False]) == [2.0]

    def test_gather_scatter_reshape(self):
        g = forward_eval("gathernd", [[10.0, 20.0, 30.0], [2.0, 0.0, 2.0]])[0]
        np.testing.assert_array_equal(g, np.array([30.0, 10.0, 30.0]))
        s = forward_eval("scatter", [[5.0, 6.0], [2.0, 0.0], [4.0]])[0]
        np.testing.assert_array_equal(s, np.array([6.0, 0.0, 5.0, 0.0]))
        r = forward_eval("reshape", [[1.0, 2.0, 3.0, 4.0], [2.0, 2.0]])[0]
        assert r.shape == (2, 2)

    def test_arity_and_type_errors(self):
        with pytest.raises(ArityMismatch):
            forward_eval("add", [1.0])
        with pytest.raises(TypeMismatch):
            forward_eval("gt", [[1.0, 2.0], [0.0, 0.0]])


class TestInverse:
    """The parametric inverse examples from the primitive table."""

    def test_add(self):
        assert inverse_eval("add", [5.0], [2.0]) == [3.0, 2.0]

    def test_sub(self):
        assert inverse_eval("sub", [5.0], [2.0]) == [7.0, 2.0]

    def test_mul_selector(self):
        assert inverse_eval("mul", [6.0], [2.0, 1.0]) == [3.0, 2.0]
        assert inverse_eval("mul", [6.0], [2.0, 0.0]) == [2.0, 3.0]

    def test_mul_rejects_zero_parameter(self):
        assert inverse_eval("mul", [6.0], [0.0, 1.0]) == [UNDEFINED, UNDEFINED]

    def test_div(self):
        assert inverse_eval("div", [3.0], [2.0]) == [6.0, 2.0]

    def test_abs_and_sqr(self):
        assert inverse_eval("abs", [2.0], [-1.0]) == [-2.0]
        assert inverse_eval("sqr", [9.0], [-1.0]) == [-3.0]
        assert inverse_eval("sqr", [-9.0], [1.0]) == [UNDEFINED]

    def test_sqr_needs_sign_parameter(self):
        assert inverse_eval("sqr", [9.0], [0.5]) == [UNDEFINED]

    def test_cos_branches(self):
        y = math.cos(0.5)
        assert inverse_eval("cos", [y], [0.0])[0] == pytest.approx(0.5)
        assert inverse_eval("cos", [y], [1.0])[0] == pytest.approx(2 * math.pi - 0.5)
        assert inverse_eval("cos", [y], [2.0])[0] == pytest.approx(2 * math.pi + 0.5)

    def test_sin_branches(self):
        y = math.sin(0.3)
        assert inverse_eval("sin", [y], [1.0])[0] == pytest.approx(math.pi - 0.3)

    def test_cos_outside_range(self):
        assert inverse_eval("cos", [1.5], [0.0]) == [UNDEFINED]

    def test_pow_with_base_one(self):
        assert inverse_eval("pow", [1.0], [2.0, 0.0, 7.0]) == [1.0, 7.0]
        assert inverse_eval("pow", [8.0], [2.0, 0.0, 7.0])[1] == pytest.approx(3.0)

    def test_log(self):
        x = inverse_eval("log", [3.0], [2.0])
        assert x[0] == 2.0
        assert x[1] == pytest.approx(8.0)

    def test_comparisons(self):
        assert inverse_eval("gt", [True], [1.0, 0.5]) == [1.0, 0.5]
        assert inverse_eval("lt", [True], [1.0, 0.5]) == [1.0, 1.5]
        assert inverse_eval("eq", [False], [1.0, 0.5]) == [1.0, 1.5]
        assert inverse_eval("eq", [True], [1.0, 0.5]) == [1.0, 1.0]

    def test_and(self):
        assert inverse_eval("and", [True], [0.0, 0.0]) == [True, True]
        assert inverse_eval("and", [False], [0.0, 1.0]) == [False, True]
        assert inverse_eval("and", [False], [1.0, 1.0]) == [True, False]

    def test_or_table(self):
        for (y, th), x in OR_INVERSE_TABLE.items():
            assert inverse_eval("or", [y], [float(th[0]), float(th[1])]) == list(x)
            assert forward_eval("or", list(x)) == [y]

    def test_or_table_is_derived(self):
        assert derive_boolean_table(lambda a, b: a or b) == OR_INVERSE_TABLE

    def test_xor(self):
        assert inverse_eval("xor", [True], [1.0]) == [True, False]

    def test_min_max(self):
        assert inverse_eval("min", [2.0], [3.0, 1.0]) == [2.0, 5.0]
        assert inverse_eval("min", [2.0], [3.0, 0.0]) == [5.0, 2.0]
        assert inverse_eval("max", [2.0], [3.0, 1.0]) == [2.0, -1.0]

    def test_clip(self):
        assert inverse_eval("clip:0:1", [0.5], [9.0]) == [0.5]
        assert inverse_eval("clip:0:1", [0.0], [2.0]) == [-2.0]
        assert inverse_eval("clip:0:1", [1.0], [2.0]) == [3.0]

    def test_dupl_averages(self):
        assert inverse_eval("dupl:2", [1.0, 3.0], []) == [2.0]
        assert domain_distance("inv:dupl:2", [1.0, 3.0]) == pytest.approx(2.0)
        assert domain_distance("inv:dupl:2", [2.0, 2.0]) == 0.0

    def test_select(self):
        assert inverse_eval("select", [4.0], [9.0, 1.0]) == [4.0, 9.0, True]
        assert inverse_eval("select", [4.0], [9.0, 0.0]) == [9.0, 4.0, False]

    def test_boolean_select(self):
        assert theta_spaces("select:bool") == [BOOL, BOOL]
        assert theta_spaces("select") == [REAL, BOOL]
        assert inverse_eval("select:bool", [True], [1.0, 0.0]) == [True, True, False]
        assert extract_theta("select:bool", [False, True, True], [False]) == [1.0, 1.0]
        with pytest.raises(ParseError):
            resolve("select:int")

    def test_gathernd_with_constant_indices(self):
        x = inverse_eval("gathernd", [[7.0, 9.0]], [[5.0]], constants={2: [2.0, 0.0]},
                         extras=[[3.0]])[0]
        np.testing.assert_array_equal(x, np.array([9.0, 5.0, 7.0]))

    def test_constant_variants(self):
        assert inverse_eval("add", [5.0], [], constants={2: 3.0}) == [2.0]
        assert inverse_eval("sub", [5.0], [], constants={1: 3.0}) == [-2.0]
        assert inverse_eval("mul", [6.0], [], constants={1: 2.0}) == [3.0]
        assert inverse_eval("div", [2.0], [], constants={1: 6.0}) == [3.0]

    def test_wrong_parameter_count(self):
        with pytest.raises(ArityMismatch):
            inverse_eval("mul", [6.0], [2.0])

    def test_tensor_inverse(self):
        x = inverse_eval("sqr", [[4.0, 9.0]], [[1.0, -1.0]])[0]
        np.testing.assert_array_equal(x, np.array([2.0, -3.0]))


class TestExtract:
    """Parameter extraction reproduces the forward inputs."""

    @pytest.mark.parametrize("kind,x", REAL_CASES)
    def test_round_trip(self, kind, x):
        y = forward_eval(kind, x)
        theta = extract_theta(kind, x, y)
        x_hat = inverse_eval(kind, y, theta)
        for a, b in zip(x_hat, x):
            assert float(a) == pytest.approx(float(b), abs=1e-9)

    def test_cos_example(self):
        x = 2 * math.pi + 0.5
        assert extract_theta("cos", [x], [math.cos(x)]) == [2.0]

    def test_min_example(self):
        assert extract_theta("min", [4.0, 7.0], [4.0]) == [3.0, 1.0]

    def test_booleans(self):
        for kind in ("and", "or", "xor"):
            for a in (False, True):
                for b in (False, True):
                    y = forward_eval(kind, [a, b])
                    theta = extract_theta(kind, [a, b], y)
                    assert inverse_eval(kind, y, theta) == [a, b]

    def test_mul_both_zero(self):
        with pytest.raises(NotInDomain):
            extract_theta("mul", [0.0, 0.0], [0.0])

    def test_tied_comparison(self):
        with pytest.raises(NotInDomain):
            extract_theta("gt", [1.0, 1.0], [False])

    def test_wrong_image(self):
        with pytest.raises(NotInDomain):
            extract_theta("add", [1.0, 2.0], [4.0])

    def test_random_soundness(self):
        rng = np.random.default_rng(11)
        for kind in ("add", "sub", "mul", "sqr", "abs", "cos", "sin", "min", "max"):
            inv = inverse_of(kind)
            for _ in range(1000):
                n = resolve(kind).n_in
                x = [float(v) for v in rng.normal(size=n)]
                y = forward_eval(kind, x)
                theta = [space.sample(rng) for space in inv.theta_spaces]
                x_hat = inverse_eval(kind, y, theta)
                if UNDEFINED in x_hat:
                    continue
                assert forward_eval(kind, x_hat)[0] == pytest.approx(y[0], rel=1e-9, abs=1e-12)

    def test_pow_sampled(self):
        rng = np.random.default_rng(5)
        spaces = theta_spaces("pow")
        ys = [float(np.exp(rng.normal())) ** float(rng.normal()) for _ in range(200)] + [1.0] * 20
        for y in ys:
            theta = [space.sample(rng) for space in spaces]
            x_hat = inverse_eval("pow", [y], theta)
            assert UNDEFINED not in x_hat
            assert forward_eval("pow", x_hat)[0] == pytest.approx(y, rel=1e-9)


class TestRegistry:
    def test_parameter_spaces(self):
        assert theta_spaces("add") == [REAL]
        assert theta_spaces("mul") == [NONZERO, BOOL]
        assert theta_spaces("sqr") == [SIGN]
        assert theta_spaces("cos") == [INTEGERS]
        assert theta_spaces("min") == [NONNEG, BOOL]
        assert theta_spaces("neg") == []
        assert theta_spaces("add", known=[2]) == []

    def test_spellings(self):
        assert resolve("inv:add/k2").spelling == "inv:add/k2"
        assert resolve("contract:finite:-1:1").spelling == "contract:finite:-1:1"
        assert inverse_of("mul").n_in == 3

    def test_every_name_resolves(self):
        for name in PRIMITIVE_NAMES:
            if name == "dupl":
                name = "dupl:2"
            elif name == "clip":
                name = "clip:0:1"
            assert resolve(name).n_out >= 1

    @pytest.mark.parametrize("kind", ["foo", "add:1", "dupl:1", "clip:1:0", "inv:add/k9"])
    def test_bad_spellings(self, kind):
        with pytest.raises(ParseError):
            resolve(kind)
