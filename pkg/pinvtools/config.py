"""
Configuration objects.

Settings are frozen dataclasses with module-level defaults. Each can be built
from a plain dict (for example a JSON config file) and turned back into one;
unknown keys are rejected.
"""

import json
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Dict, Mapping, Optional, Tuple, Type, TypeVar

from .utils.validation import (
    ConfigError, check_finite, check_nonneg_int, check_positive, check_positive_int,
    check_probability
)

# Solver defaults
DEFAULT_RESTARTS = 16
DEFAULT_MAX_EVALS = 5000
DEFAULT_LAMBDA_DM = 1.0
DEFAULT_SEED = 0
DEFAULT_INTEGER_BOUND = 4
DEFAULT_INITIAL_STEP = 1.0
DEFAULT_MIN_STEP = 1e-9
DEFAULT_FD_STEP = 1e-6

# Random graph generator defaults
DEFAULT_OP_RANGE = (2, 10)
DEFAULT_NUM_INPUTS = 2
DEFAULT_REUSE_PROB = 0.3
DEFAULT_MAX_REJECTIONS = 1000

C = TypeVar("C")


def _from_dict(cls: Type[C], data: Mapping[str, Any], where: str) -> C:
    if not isinstance(data, Mapping):
        raise ConfigError(f"{where}: expected an object")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    return cls(**dict(data))


@dataclass(frozen=True)
class SolveConfig:
    """Optimizer settings; the seed fully determines a run."""

    restarts: int = DEFAULT_RESTARTS
    max_evals: int = DEFAULT_MAX_EVALS
    lambda_dm: float = DEFAULT_LAMBDA_DM
    seed: int = DEFAULT_SEED
    integer_bound: int = DEFAULT_INTEGER_BOUND
    initial_step: float = DEFAULT_INITIAL_STEP
    min_step: float = DEFAULT_MIN_STEP
    fd_step: float = DEFAULT_FD_STEP
    workers: int = 1

    def __post_init__(self):
        check_positive_int("restarts", self.restarts)
        check_positive_int("max_evals", self.max_evals)
        check_finite("lambda_dm", self.lambda_dm)
        if self.lambda_dm < 0:
            raise ConfigError(f"lambda_dm must be non-negative, got {self.lambda_dm}")
        check_nonneg_int("seed", self.seed)
        check_positive_int("integer_bound", self.integer_bound)
        check_positive("initial_step", self.initial_step)
        check_positive("min_step", self.min_step)
        check_positive("fd_step", self.fd_step)
        check_positive_int("workers", self.workers)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SolveConfig":
        return _from_dict(cls, data, "solve config")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def with_overrides(self, **overrides: Any) -> "SolveConfig":
        """Copy with the given fields replaced; None values are ignored."""
        data = self.to_dict()
        data.update({k: v for k, v in overrides.items() if v is not None})
        return SolveConfig.from_dict(data)


@dataclass(frozen=True)
class PipelineConfig:
    """Which stages the pipeline runs: propagate, invert, reduce, totalize, solve."""

    reduce: bool = True
    totalize: bool = True
    dump_annotations: bool = False
    solve: SolveConfig = field(default_factory=SolveConfig)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PipelineConfig":
        data = dict(data)
        solve = data.pop("solve", None)
        cfg = _from_dict(cls, data, "pipeline config")
        if solve is not None:
            cfg = PipelineConfig(cfg.reduce, cfg.totalize, cfg.dump_annotations,
                                 SolveConfig.from_dict(solve))
        return cfg

    def to_dict(self) -> Dict[str, Any]:
        return {"reduce": self.reduce, "totalize": self.totalize,
                "dump_annotations": self.dump_annotations, "solve": self.solve.to_dict()}


# Forward kinds drawn by the random generator, with default weights
REAL_KIND_WEIGHTS: Dict[str, float] = {
    "add": 3.0, "sub": 2.0, "mul": 2.0, "div": 1.0, "neg": 1.0,
    "abs": 1.0, "sqr": 1.0, "exp": 0.5, "cos": 1.0, "sin": 1.0,
    "min": 1.0, "max": 1.0, "tan": 0.5, "clip": 0.5, "pow": 0.3, "log": 0.3,
    "gt": 0.3, "lt": 0.3, "eq": 0.2, "select": 0.3,
}

BOOL_KIND_WEIGHTS: Dict[str, float] = {"and": 1.0, "or": 1.0, "xor": 1.0}


@dataclass(frozen=True)
class GenSpec:
    """Parameters of the random graph generator."""

    seed: int = 0
    op_range: Tuple[int, int] = DEFAULT_OP_RANGE
    num_inputs: int = DEFAULT_NUM_INPUTS
    reuse_prob: float = DEFAULT_REUSE_PROB
    weights: Optional[Dict[str, float]] = None
    boolean: bool = False
    max_rejections: int = DEFAULT_MAX_REJECTIONS

    def __post_init__(self):
        check_nonneg_int("seed", self.seed)
        lo, hi = self.op_range
        check_positive_int("op_range[0]", lo)
        check_positive_int("op_range[1]", hi)
        if lo > hi:
            raise ConfigError(f"op_range must be ordered, got {self.op_range}")
        object.__setattr__(self, "op_range", (int(lo), int(hi)))
        check_positive_int("num_inputs", self.num_inputs)
        check_probability("reuse_prob", self.reuse_prob)
        check_positive_int("max_rejections", self.max_rejections)
        if self.weights is not None:
            for kind, w in self.weights.items():
                if kind not in REAL_KIND_WEIGHTS and kind not in BOOL_KIND_WEIGHTS:
                    raise ConfigError(f"weights: unsupported kind {kind!r}")
                check_finite(f"weights[{kind!r}]", w)
                if w < 0:
                    raise ConfigError(f"weights[{kind!r}] must be non-negative")

    def kind_weights(self) -> Dict[str, float]:
        """Effective weights; boolean kinds only when the boolean flag is set."""
        base = dict(REAL_KIND_WEIGHTS)
        if self.boolean:
            base.update(BOOL_KIND_WEIGHTS)
        if self.weights:
            for kind, w in self.weights.items():
                if kind in BOOL_KIND_WEIGHTS and not self.boolean:
                    continue
                base[kind] = w
        weights = {k: w for k, w in sorted(base.items()) if w > 0}
        if not weights:
            raise ConfigError("all kind weights are zero")
        return weights

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "GenSpec":
        data = dict(data)
        if "op_range" in data:
            data["op_range"] = tuple(data["op_range"])
        return _from_dict(cls, data, "generator spec")

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["op_range"] = list(self.op_range)
        return d


def load_config(path: str, cls: Type[C] = SolveConfig) -> C:
    """
    Read a JSON config file into ``cls``.

    Raises:
        ConfigError: If the file cannot be read or has unknown keys.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path!r}: {e}") from e
    return cls.from_dict(data)
