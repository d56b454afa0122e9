"""
pinvtools - parametric inverses of dataflow programs.

A forward program is a bipartite graph of operation nodes and value nodes.
pinvtools turns it into a parametric inverse: a program that maps outputs
``y`` and a parameter vector ``theta`` to inputs ``x`` with ``f(x) = y``
whenever ``y`` is reachable. Inverses can be totalized so that every
``theta`` yields some ``x``, reduced by eliminating parameters that
equalities pin down, and searched with a restarting pattern search.

Basic Usage:
    from pinvtools import ik3_graph, invert_graph, totalize, run_inverse

    g = ik3_graph()
    ip = totalize(invert_graph(g))
    report = run_inverse(ip, {"x": 3.0, "y": 0.0}, [0.0] * ip.num_params)
    print(report.identity_loss, report.outputs)

Solving:
    from pinvtools import Objective, SolveConfig, solve_theta

    objective = Objective.named("abs-sum", {"x": 1.0, "y": 1.5})
    result = solve_theta(ip, objective, SolveConfig(restarts=8, seed=1))
    print(result.objective, result.x)

Command line:
    pinvtools invert arm.json -o arm.inv.json
    pinvtools totalize arm.inv.json -o arm.tot.json
    pinvtools solve arm.tot.json --y target.json --seed 7
"""

__version__ = "0.1.0"

import logging

# Set up package-level logger
logger = logging.getLogger(__name__)

from .values import UNDEFINED, is_undefined, value_from_json, value_to_json
from .spaces import ParamSpace, parse_space
from .graph import Graph, GraphBuilder, Role, from_json, to_json
from .propagation import Annotation, propagate
from .primitives import resolve
from .inversion import (
    InverseProgram, ThetaLayout, ThetaPort, extract_theta_program, insert_dupl,
    invert, invert_graph
)
from .totalization import totalize
from .constraints import collect, eliminate, recover_full_theta, reduce_program
from .executor import LossReport, metric, run_forward, run_inverse
from .config import GenSpec, PipelineConfig, SolveConfig, load_config
from .solver import Objective, SolveResult, solve_theta, solve_x_baseline
from .bench import (
    compare_harness, gen_random, ik3_graph, ik_chain_graph, render1d_graph
)
from .utils.logger import configure_logging
from .utils.validation import PinvError


def get_version():
    """Return the package version."""
    return __version__


__all__ = [
    "UNDEFINED", "is_undefined", "value_from_json", "value_to_json",
    "ParamSpace", "parse_space",
    "Graph", "GraphBuilder", "Role", "from_json", "to_json",
    "Annotation", "propagate", "resolve",
    "InverseProgram", "ThetaLayout", "ThetaPort", "extract_theta_program", "insert_dupl",
    "invert", "invert_graph", "totalize",
    "collect", "eliminate", "recover_full_theta", "reduce_program",
    "LossReport", "metric", "run_forward", "run_inverse",
    "GenSpec", "PipelineConfig", "SolveConfig", "load_config",
    "Objective", "SolveResult", "solve_theta", "solve_x_baseline",
    "compare_harness", "gen_random", "ik3_graph", "ik_chain_graph", "render1d_graph",
    "configure_logging", "PinvError", "get_version",
]
