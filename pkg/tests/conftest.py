"""Pytest configuration and fixtures for pinvtools tests."""
import json
import os
import sys

import pytest

# Add parent directory to path to allow imports from the pinvtools package
sys.path.insert(0, os.path.abspath(os.path.dirname(os.path.dirname(__file__))))

from pinvtools.graph import build  # noqa: E402
from pinvtools.bench import ik3_graph, invertible_at, sample_inputs  # noqa: E402
from pinvtools.utils.logger import disable_logging  # noqa: E402

# x -> sqr -> sqr -> y, i.e. y = x ** 4
X4_NODES = ["value:input:x", "op:sqr", "value:internal", "op:sqr", "value:output:y"]
X4_EDGES = [[1, 1, 2, 1], [2, 2, 3, 1], [3, 2, 4, 1], [4, 2, 5, 1]]

# y = x + x
DOUBLE_NODES = ["value:input:x", "op:add", "value:output:y"]
DOUBLE_EDGES = [[1, 1, 2, 1], [1, 2, 2, 2], [2, 3, 3, 1]]

# y = x + 3
ADD_CONST_NODES = ["value:input:x", "value:const:3.0", "op:add", "value:output:y"]
ADD_CONST_EDGES = [[1, 1, 3, 1], [2, 1, 3, 2], [3, 3, 4, 1]]

# y = a * b
MUL_NODES = ["value:input:a", "value:input:b", "op:mul", "value:output:y"]
MUL_EDGES = [[1, 1, 3, 1], [2, 1, 3, 2], [3, 3, 4, 1]]


@pytest.fixture(autouse=True)
def quiet_logging():
    """Keep the package logger silent unless a test configures it."""
    disable_logging()
    yield
    disable_logging()


@pytest.fixture
def x4_graph():
    """The fourth-power graph: two chained squares."""
    return build(X4_NODES, X4_EDGES)


@pytest.fixture
def double_graph():
    """A graph that adds its only input to itself."""
    return build(DOUBLE_NODES, DOUBLE_EDGES)


@pytest.fixture
def add_const_graph():
    """A graph adding the constant 3 to its input."""
    return build(ADD_CONST_NODES, ADD_CONST_EDGES)


@pytest.fixture
def mul_graph():
    return build(MUL_NODES, MUL_EDGES)


@pytest.fixture
def ik3():
    """Forward kinematics of the three-link unit arm."""
    return ik3_graph()


@pytest.fixture
def write_json(tmp_path):
    """
    Write a JSON document (or raw text) under ``tmp_path`` and return its path.

    Example:
        def test_something(write_json):
            path = write_json("y.json", {"y": 16.0})
    """
    def _write(name, data):
        path = tmp_path / name
        text = data if isinstance(data, str) else json.dumps(data)
        path.write_text(text, encoding="utf-8")
        return str(path)

    return _write


@pytest.fixture
def invertible_point():
    """
    Draw inputs of a generated graph at which every op inverts exactly.

    Returns None when ``tries`` draws all fail.
    """
    def _draw(g, rng, tries=20):
        for _ in range(tries):
            x = sample_inputs(g, rng)
            if invertible_at(g, x):
                return x
        return None

    return _draw
