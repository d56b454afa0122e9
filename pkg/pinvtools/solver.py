"""
Optimizers over the parameter space of an inverse program.

:func:`solve_theta` minimizes ``L(x(θ)) + λ · domain_loss(θ)`` over the
parameter vector of a totalized inverse program, where ``x(θ)`` are the
inputs the program recovers. :func:`solve_x_baseline` runs the same search
over the forward graph's inputs, minimizing ``d(f(x), y) + L(x)``, so the two
can be compared under one evaluation budget.

The search is a multi-start compass (pattern) search: every restart polls
each coordinate at ``±step``, tries a finite-difference descent step, and
halves the step when nothing improves. Discrete slots move through their
members instead (neighbouring integers, or every member of a finite set).
Restarts draw their initial points from independent generators spawned from
the configured seed, so results do not depend on how restarts are scheduled.
"""

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .config import SolveConfig
from .constraints import recover_full_theta
from .executor import metric_many, run_forward, run_inverse, run_inverse_fast
from .graph import Graph
from .inversion import InverseProgram
from .propagation import propagate
from .spaces import REAL, IntegerLine, ParamSpace
from .values import UNDEFINED, check_value, is_tensor, value_from_json, value_to_json
from .utils.logger import get_logger
from .utils.validation import ConfigError, NotTotalized

logger = get_logger("solver")

LossFn = Callable[[Mapping[str, Any]], float]


# ---------------------------------------------------------------------------
# Losses and objectives
# ---------------------------------------------------------------------------

def abs_sum_loss(x: Mapping[str, Any]) -> float:
    """Sum of absolute values of every recovered input (tensors elementwise)."""
    total = 0.0
    for name in sorted(x):
        v = x[name]
        if v is UNDEFINED:
            return math.inf
        if is_tensor(v):
            total += float(np.sum(np.abs(v)))
        else:
            total += abs(float(v))
    return total


def target_loss(target: Mapping[str, Any]) -> LossFn:
    """Loss measuring the distance of the named inputs to fixed values."""
    names = sorted(target)
    values = [check_value(target[n], f"target {n!r}") for n in names]

    def loss(x: Mapping[str, Any]) -> float:
        return metric_many([x[n] for n in names], values)

    return loss


def zero_loss(x: Mapping[str, Any]) -> float:
    return 0.0


def make_loss(spec: str) -> LossFn:
    """
    Resolve a loss by name: ``abs-sum``, ``zero`` or ``target:<json file>``.

    Raises:
        ConfigError: For unknown names or unreadable target files.
    """
    if spec == "abs-sum":
        return abs_sum_loss
    if spec == "zero":
        return zero_loss
    if spec.startswith("target:"):
        path = spec[len("target:"):]
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read loss target {path!r}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"loss target {path!r} must be a JSON object")
        return target_loss({k: value_from_json(v) for k, v in data.items()})
    raise ConfigError(f"unknown loss {spec!r} (expected abs-sum, zero or target:<file>)")


@dataclass(frozen=True)
class Objective:
    """User loss over recovered inputs, target outputs and the domain-loss weight."""

    loss: LossFn
    y: Dict[str, Any]
    lambda_dm: float = 1.0
    name: str = "custom"

    @classmethod
    def named(cls, spec: str, y: Mapping[str, Any], lambda_dm: float = 1.0) -> "Objective":
        return cls(make_loss(spec), {k: check_value(v) for k, v in y.items()}, lambda_dm, spec)


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------

def _json_float(x: float) -> Any:
    return x if math.isfinite(x) else str(x)


@dataclass
class SolveResult:
    """
    Outcome of a search.

    ``theta`` is None for input-space searches. ``trajectory`` holds the
    best objective seen so far after every poll, restarts concatenated in
    index order; it never increases.
    """

    theta: Optional[np.ndarray]
    x: Dict[str, Any]
    losses: Dict[str, float]
    trajectory: List[float] = field(default_factory=list)
    evaluations: int = 0
    method: str = "theta"
    best_restart: int = 0
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def objective(self) -> float:
        return self.losses["objective"]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "theta": None if self.theta is None else self.theta.tolist(),
            "x": {k: value_to_json(v) for k, v in sorted(self.x.items())},
            "losses": {k: _json_float(v) for k, v in sorted(self.losses.items())},
            "evaluations": self.evaluations,
            "best_restart": self.best_restart,
            "trajectory": [_json_float(v) for v in self.trajectory],
            "metadata": self.metadata,
        }


# ---------------------------------------------------------------------------
# Search core
# ---------------------------------------------------------------------------

class _BudgetExhausted(Exception):
    pass


class _Counted:
    """Objective wrapper enforcing the evaluation budget and tracking the incumbent."""

    def __init__(self, fn: Callable[[np.ndarray], float], budget: int):
        self.fn = fn
        self.budget = budget
        self.calls = 0
        self.best = math.inf
        self.best_x: Optional[np.ndarray] = None

    def __call__(self, x: np.ndarray) -> float:
        if self.calls >= self.budget:
            raise _BudgetExhausted()
        self.calls += 1
        value = self.fn(x)
        if math.isnan(value):
            value = math.inf
        if value < self.best or self.best_x is None:
            self.best = value
            self.best_x = x.copy()
        return value


@dataclass
class _RestartOutcome:
    index: int
    x: np.ndarray
    value: float
    calls: int
    trajectory: List[float]


def _initial_point(spaces: Sequence[ParamSpace], rng: np.random.Generator,
                   bound: int) -> np.ndarray:
    x = np.empty(len(spaces))
    for i, space in enumerate(spaces):
        if space.discrete:
            members = space.members(bound)
            x[i] = members[int(rng.integers(len(members)))]
        else:
            x[i] = float(space.contract(float(rng.standard_normal())))
    return x


def _discrete_moves(space: ParamSpace, value: float, bound: int) -> List[float]:
    if isinstance(space, IntegerLine):
        return [v for v in (value - 1.0, value + 1.0) if -bound <= v <= bound]
    return [m for m in space.members(bound) if m != value]


def _pattern_search(f: _Counted, spaces: Sequence[ParamSpace], x0: np.ndarray,
                    config: SolveConfig, trajectory: List[float]) -> None:
    continuous = [i for i, s in enumerate(spaces) if not s.discrete]
    discrete = [i for i, s in enumerate(spaces) if s.discrete]
    x = x0.copy()
    fx = f(x)
    trajectory.append(f.best)
    step = config.initial_step

    while True:
        improved = False

        for i in discrete:
            for candidate in _discrete_moves(spaces[i], x[i], config.integer_bound):
                trial = x.copy()
                trial[i] = candidate
                ft = f(trial)
                if ft < fx:
                    x, fx, improved = trial, ft, True

        for i in continuous:
            for sign in (1.0, -1.0):
                trial = x.copy()
                trial[i] += sign * step
                ft = f(trial)
                if ft < fx:
                    x, fx, improved = trial, ft, True
                    break

        if continuous and math.isfinite(fx):
            moved = _gradient_step(f, x, fx, continuous, step, config.fd_step)
            if moved is not None:
                x, fx = moved
                improved = True

        trajectory.append(f.best)
        if not improved:
            if not continuous:
                return
            step /= 2.0
            if step < config.min_step:
                return


def _gradient_step(f: _Counted, x: np.ndarray, fx: float, coords: Sequence[int],
                   step: float, fd_step: float) -> Optional[Tuple[np.ndarray, float]]:
    """Forward-difference gradient followed by a short backtracking line search."""
    grad = np.zeros_like(x)
    for i in coords:
        h = fd_step * max(1.0, abs(x[i]))
        trial = x.copy()
        trial[i] += h
        ft = f(trial)
        if not math.isfinite(ft):
            return None
        grad[i] = (ft - fx) / h
    norm = float(np.linalg.norm(grad))
    if norm == 0.0 or not math.isfinite(norm):
        return None
    direction = -grad / norm
    t = 2.0 * step
    for _ in range(4):
        trial = x + t * direction
        ft = f(trial)
        if ft < fx:
            return trial, ft
        t /= 2.0
    return None


def _run_restart(index: int, fn: Callable[[np.ndarray], float], spaces: Sequence[ParamSpace],
                 seed_seq: np.random.SeedSequence, config: SolveConfig) -> _RestartOutcome:
    rng = np.random.default_rng(seed_seq)
    f = _Counted(fn, config.max_evals)
    trajectory: List[float] = []
    x0 = _initial_point(spaces, rng, config.integer_bound)
    try:
        _pattern_search(f, spaces, x0, config, trajectory)
    except _BudgetExhausted:
        trajectory.append(f.best)
    best_x = f.best_x if f.best_x is not None else x0
    logger.debug(f"Restart {index}: objective {f.best:.6g} after {f.calls} evaluations")
    return _RestartOutcome(index, best_x, f.best, f.calls, trajectory)


def minimize(fn: Callable[[np.ndarray], float], spaces: Sequence[ParamSpace],
             config: SolveConfig) -> Tuple[_RestartOutcome, List[float], int]:
    """
    Multi-start pattern search over a box of spaces.

    Returns:
        (best restart, global best-so-far trajectory, total evaluations)
    """
    seeds = np.random.SeedSequence(config.seed).spawn(config.restarts)
    if config.workers > 1 and config.restarts > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(_run_restart, i, fn, spaces, s, config)
                       for i, s in enumerate(seeds)]
            outcomes = [fut.result() for fut in futures]
    else:
        outcomes = [_run_restart(i, fn, spaces, s, config) for i, s in enumerate(seeds)]

    best = outcomes[0]
    for outcome in outcomes[1:]:
        if outcome.value < best.value:
            best = outcome

    trajectory: List[float] = []
    running = math.inf
    for outcome in outcomes:
        for v in outcome.trajectory:
            running = min(running, v)
            trajectory.append(running)
    return best, trajectory, sum(o.calls for o in outcomes)


# ---------------------------------------------------------------------------
# Public solvers
# ---------------------------------------------------------------------------

def theta_objective(ip: InverseProgram, objective: Objective) -> Callable[[np.ndarray], float]:
    """The total objective of a parameter vector."""

    def fn(theta: np.ndarray) -> float:
        x, domain, _ = run_inverse_fast(ip, objective.y, theta)
        if not math.isfinite(domain):
            return math.inf
        total = objective.loss(x) + objective.lambda_dm * domain
        return total if math.isfinite(total) else math.inf

    return fn


def solve_theta(ip: InverseProgram, objective: Objective,
                config: Optional[SolveConfig] = None) -> SolveResult:
    """
    Search the parameter space of a totalized inverse program.

    Raises:
        NotTotalized: If ``ip`` has not been totalized.
    """
    config = config or SolveConfig()
    if not ip.totalized:
        raise NotTotalized("solve needs a totalized inverse program; run totalize first")
    spaces = ip.layout.spaces()
    fn = theta_objective(ip, objective)
    logger.info(f"Solving over {len(spaces)} parameter slots with {config.restarts} restarts "
                f"of at most {config.max_evals} evaluations")

    if spaces:
        best, trajectory, calls = minimize(fn, spaces, config)
        theta, restart = best.x, best.index
    else:
        theta, restart, calls = np.zeros(0), 0, 1
        trajectory = [fn(theta)]

    report = run_inverse(ip, objective.y, theta)
    user = objective.loss(report.outputs)
    total = user + objective.lambda_dm * report.domain_loss_total
    losses = {
        "objective": total if math.isfinite(total) else math.inf,
        "loss": user,
        "identity_loss": report.identity_loss,
        "domain_loss": report.domain_loss_total,
    }
    metadata: Dict[str, Any] = {"objective": objective.name, "config": config.to_dict()}
    if ip.reduced:
        metadata["theta_full"] = recover_full_theta(ip, objective.y, theta).tolist()
    logger.info(f"Best objective {losses['objective']:.6g} (identity loss "
                f"{losses['identity_loss']:.3g}) from restart {restart}, {calls} evaluations")
    return SolveResult(theta=theta, x=report.outputs, losses=losses, trajectory=trajectory,
                       evaluations=calls, method="theta", best_restart=restart,
                       metadata=metadata)


def _input_layout(g: Graph, input_shapes: Optional[Mapping[str, Sequence[int]]],
                  pinned: Mapping[str, Any]) -> List[Tuple[str, Tuple[int, ...]]]:
    ann = propagate(g, input_shapes, pinned)
    layout = []
    for node in g.inputs():
        if node.name in pinned:
            continue
        shape = ann[node.id].shape
        layout.append((node.name, tuple(shape) if shape else ()))
    return layout


def _unpack_inputs(layout: Sequence[Tuple[str, Tuple[int, ...]]], vec: np.ndarray
                   ) -> Dict[str, Any]:
    out = {}
    pos = 0
    for name, shape in layout:
        size = int(np.prod(shape)) if shape else 1
        seg = vec[pos:pos + size]
        out[name] = seg.reshape(shape).copy() if shape else float(seg[0])
        pos += size
    return out


def _forward_residual(g: Graph, x: Mapping[str, Any], y: Mapping[str, Any]) -> float:
    outputs, _ = run_forward(g, x)
    names = sorted(outputs)
    d = metric_many([outputs[n] for n in names], [y[n] for n in names])
    return d if math.isfinite(d) else math.inf


def solve_x_baseline(g: Graph, objective: Objective, config: Optional[SolveConfig] = None,
                     input_shapes: Optional[Mapping[str, Sequence[int]]] = None,
                     pinned: Optional[Mapping[str, Any]] = None) -> SolveResult:
    """
    Search the input space of a forward graph for ``argmin d(f(x), y) + L(x)``.

    Uses the same search core and per-restart budget as :func:`solve_theta`.
    """
    config = config or SolveConfig()
    pinned = dict(pinned or {})
    layout = _input_layout(g, input_shapes, pinned)
    size = sum(int(np.prod(s)) if s else 1 for _, s in layout)
    spaces = [REAL] * size

    def fn(vec: np.ndarray) -> float:
        x = _unpack_inputs(layout, vec)
        total = _forward_residual(g, {**pinned, **x}, objective.y) + objective.loss(x)
        return total if math.isfinite(total) else math.inf

    logger.info(f"Baseline search over {size} input slots with {config.restarts} restarts")
    if spaces:
        best, trajectory, calls = minimize(fn, spaces, config)
        vec, restart = best.x, best.index
    else:
        vec, restart, calls = np.zeros(0), 0, 1
        trajectory = [fn(vec)]

    x = _unpack_inputs(layout, vec)
    identity = _forward_residual(g, {**pinned, **x}, objective.y)
    user = objective.loss(x)
    losses = {"objective": identity + user, "loss": user, "identity_loss": identity,
              "domain_loss": 0.0}
    return SolveResult(theta=None, x=x, losses=losses, trajectory=trajectory, evaluations=calls,
                       method="x", best_restart=restart,
                       metadata={"objective": objective.name, "config": config.to_dict()})
