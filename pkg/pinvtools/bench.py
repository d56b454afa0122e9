"""
Benchmark problems and the comparison harness.

* planar arms (:func:`ik_chain_graph`, :func:`ik3_graph`) with an analytic
  oracle and forward-sampled reachable targets;
* a seeded random composition generator (:func:`gen_random`);
* a one-dimensional emission-absorption integrator (:func:`render1d_graph`);
* :func:`compare_harness`, which measures identity losses of random and
  optimized parameters against input-space search under equal budgets.
"""

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Any, Dict, IO, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .config import GenSpec, SolveConfig
from .constraints import eliminate
from .executor import metric_many, run_forward, run_inverse
from .graph import Graph, GraphBuilder
from .inversion import InverseProgram, invert_graph
from .primitives import InverseOperator, Primitive, resolve
from .propagation import propagate
from .solver import Objective, solve_theta, solve_x_baseline
from .totalization import totalize
from .values import is_finite_value
from .utils.logger import get_logger
from .utils.validation import ConfigError, GenerationExhausted, NotInDomain, PinvError

logger = get_logger("bench")

CSV_HEADER = ("problem", "method", "phase", "loss")

# Identity loss below which a solve counts as a success
SUCCESS_TOLERANCE = 1e-3


# ---------------------------------------------------------------------------
# Planar arms
# ---------------------------------------------------------------------------

def ik_chain_graph(n_links: int = 3, lengths: Optional[Sequence[float]] = None) -> Graph:
    """
    Forward kinematics of a planar arm with ``n_links`` revolute joints.

    Inputs ``phi1..phiN`` are relative joint angles; outputs ``x`` and ``y``
    are the end-effector position. Links of length 1 are not scaled.
    """
    if not 1 <= n_links <= 6:
        raise ConfigError(f"n_links must be between 1 and 6, got {n_links}")
    lengths = [1.0] * n_links if lengths is None else [float(v) for v in lengths]
    if len(lengths) != n_links:
        raise ConfigError(f"expected {n_links} link lengths, got {len(lengths)}")

    b = GraphBuilder()
    phis = [b.input(f"phi{i}") for i in range(1, n_links + 1)]
    angle = phis[0]
    xs, ys = [], []
    for i in range(n_links):
        if i > 0:
            angle = b.apply("add", angle, phis[i])
        cx, sy = b.apply("cos", angle), b.apply("sin", angle)
        if lengths[i] != 1.0:
            cx = b.apply("mul", b.constant(lengths[i]), cx)
            sy = b.apply("mul", b.constant(lengths[i]), sy)
        xs.append(cx)
        ys.append(sy)

    for name, terms in (("x", xs), ("y", ys)):
        out = terms[0]
        for t in terms[1:]:
            out = b.apply("add", out, t)
        b.mark_output(out, name)
    return b.build()


def ik3_graph() -> Graph:
    """The three-link unit arm."""
    return ik_chain_graph(3)


def ik_forward(phis: Sequence[float], lengths: Optional[Sequence[float]] = None
               ) -> Tuple[float, float]:
    """Direct evaluation of the arm equations."""
    lengths = [1.0] * len(phis) if lengths is None else list(lengths)
    x = y = angle = 0.0
    for phi, length in zip(phis, lengths):
        angle += phi
        x += length * math.cos(angle)
        y += length * math.sin(angle)
    return x, y


def sample_reachable_targets(count: int, seed: int = 0, n_links: int = 3,
                             lengths: Optional[Sequence[float]] = None) -> List[Dict[str, float]]:
    """Targets reached by uniformly random joint angles in [-pi, pi)."""
    rng = np.random.default_rng(seed)
    targets = []
    for _ in range(count):
        phis = rng.uniform(-math.pi, math.pi, size=n_links)
        x, y = ik_forward(phis.tolist(), lengths)
        targets.append({"x": x, "y": y})
    return targets


# ---------------------------------------------------------------------------
# Random compositions
# ---------------------------------------------------------------------------

_BOOL_RESULTS = frozenset(("gt", "lt", "eq", "and", "or", "xor"))
_OPERAND_TYPES: Dict[str, Tuple[str, ...]] = {
    "and": ("bool", "bool"), "or": ("bool", "bool"), "xor": ("bool", "bool"),
    "select": ("real", "real", "bool"),
}
# Weight keys that stand for a parameterized spelling
_SPELLINGS = {"clip": "clip:-1:1"}


class _Draft:
    """A graph under construction together with use counts per value."""

    def __init__(self, spec: GenSpec):
        self.b = GraphBuilder()
        self.uses: Dict[int, int] = {}
        self.pools: Dict[str, List[int]] = {"real": [], "bool": []}
        self.inputs: Dict[int, str] = {}
        for i in range(1, spec.num_inputs + 1):
            self._add_input(f"x{i}", "real")
        if spec.boolean:
            for i in range(1, spec.num_inputs + 1):
                self._add_input(f"p{i}", "bool")

    def _add_input(self, name: str, dtype: str) -> None:
        v = self.b.input(name)
        self.inputs[v] = dtype
        self.uses[v] = 0
        self.pools[dtype].append(v)

    def operand(self, rng: np.random.Generator, dtype: str, reuse_prob: float,
                first: bool = False) -> int:
        """Pick an operand; only operands after an op's first may reuse a consumed value."""
        pool = self.pools[dtype]
        used = [v for v in pool if self.uses[v] > 0]
        unused = [v for v in pool if self.uses[v] == 0]
        if used and not first and rng.random() < reuse_prob:
            choice = used
        elif unused:
            choice = unused
        else:
            choice = pool
        v = choice[int(rng.integers(len(choice)))]
        self.uses[v] += 1
        return v

    def add(self, kind: str, operands: Sequence[int], dtype: str) -> None:
        out = self.b.apply(kind, *operands)
        self.uses[out] = 0
        self.pools[dtype].append(out)

    def finish(self) -> Optional[Graph]:
        if any(self.uses[v] == 0 for v in self.inputs):
            return None
        sinks = [v for v, n in self.uses.items() if n == 0 and v not in self.inputs]
        if not sinks:
            return None
        for i, v in enumerate(sinks, start=1):
            self.b.mark_output(v, f"y{i}")
        return self.b.build()


def _operand_types(kind: str) -> Tuple[str, ...]:
    if kind in _OPERAND_TYPES:
        return _OPERAND_TYPES[kind]
    return ("real",) * resolve(_SPELLINGS.get(kind, kind)).n_in


def _draw_graph(spec: GenSpec, rng: np.random.Generator) -> Optional[Graph]:
    weights = spec.kind_weights()
    kinds = list(weights)
    probs = np.array([weights[k] for k in kinds], dtype=float)
    types = {k: _operand_types(k) for k in kinds}
    lo, hi = spec.op_range
    n_ops = int(rng.integers(lo, hi + 1))

    draft = _Draft(spec)
    for _ in range(n_ops):
        # kinds needing a Boolean operand wait until one exists
        available = [i for i, k in enumerate(kinds) if all(draft.pools[t] for t in types[k])]
        if not available:
            return None
        p = probs[available] / probs[available].sum()
        kind = kinds[available[int(rng.choice(len(available), p=p))]]
        operands = [draft.operand(rng, t, spec.reuse_prob, first=(i == 0))
                    for i, t in enumerate(types[kind])]
        draft.add(_SPELLINGS.get(kind, kind), operands,
                  "bool" if kind in _BOOL_RESULTS else "real")
    return draft.finish()


def sample_inputs(g: Graph, rng: np.random.Generator) -> Dict[str, Any]:
    """Standard normal reals; inputs named ``p<i>`` get fair coin flips."""
    out: Dict[str, Any] = {}
    for node in g.inputs():
        if node.name.startswith("p"):
            out[node.name] = bool(rng.random() < 0.5)
        else:
            out[node.name] = float(rng.standard_normal())
    return out


def invertible_at(g: Graph, inputs: Mapping[str, Any]) -> bool:
    """
    Whether the parameters extracted at ``inputs`` invert every op of ``g`` exactly.

    All forward values must be finite, every op output must lie in the domain
    its inverse reads, and every extracted parameter must lie in its space.
    Tied comparisons and pow outputs below epsilon fail the last two checks.
    """
    outputs, trace = run_forward(g, inputs)
    ann = propagate(g)
    for op_id, (xs, ys) in trace.items():
        if not all(is_finite_value(v) for v in list(xs) + list(ys)):
            return False
        base = g.node(op_id).op
        if not isinstance(base, Primitive):
            return False
        inv = InverseOperator(base.specialize([ann[v].dtype for v in g.op_inputs(op_id)]))
        if not all(d.contains(v) for d, v in zip(inv.y_domains, ys)):
            return False
        try:
            thetas = inv.extract(xs, ys)
        except (NotInDomain, NotImplementedError):
            return False
        if not all(s.contains(t) for s, t in zip(inv.theta_spaces, thetas)):
            return False
    return all(is_finite_value(v) for v in outputs.values())


def gen_random(spec: GenSpec) -> Graph:
    """
    Draw a random composition of primitives, deterministic in ``spec.seed``.

    Drafts that leave an input unused, or that are not :func:`invertible_at`
    sampled inputs, are rejected and redrawn.

    Raises:
        GenerationExhausted: After ``spec.max_rejections`` rejected drafts.
    """
    rng = np.random.default_rng(spec.seed)
    for attempt in range(spec.max_rejections):
        g = _draw_graph(spec, rng)
        if g is None:
            continue
        try:
            if invertible_at(g, sample_inputs(g, rng)):
                logger.debug(f"Generated graph for seed {spec.seed} after {attempt} rejections: "
                             f"{g.num_ops()} ops")
                return g
        except PinvError as e:
            logger.debug(f"Rejected draft: {e}")
    raise GenerationExhausted(
        f"no valid graph for seed {spec.seed} after {spec.max_rejections} attempts"
    )


# ---------------------------------------------------------------------------
# Emission-absorption integrator
# ---------------------------------------------------------------------------

def render1d_graph(n_samples: int, dt: float = 1.0) -> Graph:
    """
    Discretized emission-absorption integral along one ray.

    ``C = sum_i c_i * prod_{j<i} exp(-k_j * dt)``, with the exponential
    written as ``pow(e, -(k_j * dt))``. Inputs are ``c1..cN`` and
    ``k1..k(N-1)`` (the last sample's absorption never attenuates anything);
    the output is ``C``.
    """
    if not 2 <= n_samples <= 8:
        raise ConfigError(f"n_samples must be between 2 and 8, got {n_samples}")
    b = GraphBuilder()
    cs = [b.input(f"c{i}") for i in range(1, n_samples + 1)]
    ks = [b.input(f"k{i}") for i in range(1, n_samples)]
    total = cs[0]
    transmittance = None
    for i in range(1, n_samples):
        optical = b.apply("neg", b.apply("mul", ks[i - 1], b.constant(float(dt))))
        att = b.apply("pow", b.constant(math.e), optical)
        transmittance = att if transmittance is None else b.apply("mul", transmittance, att)
        total = b.apply("add", total, b.apply("mul", cs[i], transmittance))
    b.mark_output(total, "C")
    return b.build()


def render1d_forward(c: Sequence[float], k: Sequence[float], dt: float = 1.0) -> float:
    """Loop evaluation of the same sum."""
    total = 0.0
    transmittance = 1.0
    for i, ci in enumerate(c):
        if i > 0:
            transmittance *= math.exp(-k[i - 1] * dt)
        total += ci * transmittance
    return total


# ---------------------------------------------------------------------------
# Comparison harness
# ---------------------------------------------------------------------------

@dataclass
class BenchProblem:
    """One inversion problem: forward graph, target outputs and user loss."""

    name: str
    graph: Graph
    y: Dict[str, Any]
    loss: str = "abs-sum"
    input_shapes: Dict[str, Tuple[int, ...]] = field(default_factory=dict)
    pinned: Dict[str, Any] = field(default_factory=dict)

    def program(self, reduce: bool = True) -> InverseProgram:
        ip = invert_graph(self.graph, self.input_shapes, self.pinned)
        if reduce:
            ip = eliminate(ip)
        return totalize(ip)


def ik_problems(count: int, seed: int = 0, n_links: int = 3) -> List[BenchProblem]:
    """Arm problems with forward-sampled reachable targets."""
    g = ik_chain_graph(n_links)
    return [
        BenchProblem(f"ik{n_links}_{i:02d}", g, target)
        for i, target in enumerate(sample_reachable_targets(count, seed, n_links))
    ]


Row = Tuple[str, str, str, float]


def _init_rows(problem: BenchProblem, ip: InverseProgram, samples: int,
               rng: np.random.Generator, bound: int) -> List[Row]:
    rows: List[Row] = []
    spaces = ip.layout.spaces()
    for _ in range(samples):
        theta = np.array([
            s.members(bound)[int(rng.integers(len(s.members(bound))))] if s.discrete
            else float(s.contract(float(rng.standard_normal())))
            for s in spaces
        ])
        rows.append((problem.name, "theta", "init", run_inverse(ip, problem.y, theta).identity_loss))
    names = [n.name for n in problem.graph.inputs() if n.name not in problem.pinned]
    for _ in range(samples):
        x = {n: float(rng.standard_normal()) for n in names}
        outputs, _ = run_forward(problem.graph, {**problem.pinned, **x})
        keys = sorted(outputs)
        rows.append((problem.name, "x", "init",
                     metric_many([outputs[k] for k in keys], [problem.y[k] for k in keys])))
    return rows


def compare_harness(problems: Sequence[BenchProblem], config: Optional[SolveConfig] = None,
                    samples: int = 10, seed: int = 0,
                    success_tol: float = SUCCESS_TOLERANCE) -> List[Row]:
    """
    Identity losses of parameter-space and input-space search.

    For each problem: ``samples`` initial losses per method (random parameters
    through the totalized inverse, random inputs through the forward graph),
    then the final identity loss and objective of :func:`solve_theta` and
    :func:`solve_x_baseline` run with the same config. A ``success_rate`` row
    per method follows when there is at least one problem.

    Returns:
        Rows ``(problem, method, phase, loss)`` sorted by the first three fields.
    """
    config = config or SolveConfig()
    rows: List[Row] = []
    successes = {"theta": 0, "x": 0}
    seeds = np.random.SeedSequence(seed).spawn(len(problems)) if problems else []
    for problem, seq in zip(problems, seeds):
        rng = np.random.default_rng(seq)
        ip = problem.program()
        rows.extend(_init_rows(problem, ip, samples, rng, config.integer_bound))
        objective = Objective.named(problem.loss, problem.y, config.lambda_dm)
        results = {
            "theta": solve_theta(ip, objective, config),
            "x": solve_x_baseline(problem.graph, objective, config, problem.input_shapes,
                                  problem.pinned),
        }
        for method, result in results.items():
            rows.append((problem.name, method, "final_identity", result.losses["identity_loss"]))
            rows.append((problem.name, method, "final_objective", result.objective))
            if result.losses["identity_loss"] < success_tol:
                successes[method] += 1
        logger.info(f"{problem.name}: theta identity {results['theta'].losses['identity_loss']:.3g}, "
                    f"x identity {results['x'].losses['identity_loss']:.3g}")
    if problems:
        for method, count in successes.items():
            rows.append(("summary", method, "success_rate", count / len(problems)))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    return rows


def _format_loss(v: float) -> str:
    return repr(float(v)) if math.isfinite(v) else str(float(v))


def write_csv(rows: Sequence[Row], out: Union[str, IO[str]]) -> None:
    """Write harness rows with the ``problem,method,phase,loss`` header."""
    if isinstance(out, str):
        with open(out, "w", encoding="utf-8", newline="") as f:
            write_csv(rows, f)
        return
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for problem, method, phase, loss in rows:
        writer.writerow((problem, method, phase, _format_loss(loss)))


def rows_to_csv(rows: Sequence[Row]) -> str:
    buf = io.StringIO()
    write_csv(rows, buf)
    return buf.getvalue()
