"""
Command-line interface.

Every subcommand reads JSON files and writes JSON (or CSV) results, either to
the file named by ``-o`` or to stdout. Diagnostics and logs go to stderr.
Exit status is 0 on success, 1 when the toolkit reports an error and 2 for
usage errors.
"""

import argparse
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional, Sequence

from . import __version__
from .bench import (
    compare_harness, gen_random, ik_chain_graph, ik_problems, render1d_graph,
    sample_reachable_targets, write_csv
)
from .config import GenSpec, PipelineConfig, SolveConfig, load_config
from .constraints import reduce_program
from .executor import run_forward, run_inverse
from .graph import Graph, from_json
from .inversion import InverseProgram, extract_theta_program, insert_dupl, invert
from .propagation import annotations_to_dict, propagate
from .solver import Objective, solve_theta
from .totalization import totalize
from .values import value_from_json, value_to_json
from .utils.logger import configure_logging, get_logger, log_exception
from .utils.validation import ParseError, PinvError

logger = get_logger("cli")


# ---------------------------------------------------------------------------
# File helpers
# ---------------------------------------------------------------------------

def _read_text(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return f.read()
    except OSError as e:
        raise ParseError(f"cannot read {path!r}: {e.strerror}") from e


def _read_json(path: str) -> Any:
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from e


def _read_values(path: Optional[str]) -> Dict[str, Any]:
    if path is None:
        return {}
    data = _read_json(path)
    if not isinstance(data, dict):
        raise ParseError(f"{path}: expected an object mapping names to values")
    return {k: value_from_json(v, f"{path}: {k}") for k, v in data.items()}


def _read_shapes(path: Optional[str]) -> Dict[str, List[int]]:
    if path is None:
        return {}
    data = _read_json(path)
    if not isinstance(data, dict):
        raise ParseError(f"{path}: expected an object mapping input names to shapes")
    try:
        return {k: [int(d) for d in v] for k, v in data.items()}
    except (TypeError, ValueError) as e:
        raise ParseError(f"{path}: shapes must be lists of integers ({e})") from e


def _read_graph(path: str) -> Graph:
    return from_json(_read_text(path))


def _read_program(path: str) -> InverseProgram:
    return InverseProgram.from_json(_read_text(path))


def _read_theta(path: str) -> List[float]:
    data = _read_json(path)
    if isinstance(data, dict):
        data = data.get("theta")
    if not isinstance(data, list):
        raise ParseError(f"{path}: expected a list of numbers or an object with a 'theta' list")
    try:
        return [float(v) for v in data]
    except (TypeError, ValueError) as e:
        raise ParseError(f"{path}: parameters must be numbers ({e})") from e


def _dumps(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    directory = os.path.dirname(out)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    logger.info(f"Wrote {out}")


def _solve_config(args: argparse.Namespace, base: Optional[SolveConfig] = None) -> SolveConfig:
    if base is None:
        base = load_config(args.config, SolveConfig) if getattr(args, "config", None) else SolveConfig()
    return base.with_overrides(
        seed=getattr(args, "seed", None), restarts=getattr(args, "restarts", None),
        max_evals=getattr(args, "max_evals", None), lambda_dm=getattr(args, "lambda_dm", None),
        workers=getattr(args, "workers", None),
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_validate(args: argparse.Namespace) -> int:
    g = _read_graph(args.graph)
    summary: Dict[str, Any] = {
        "valid": True, "ops": g.num_ops(), "values": g.num_values(),
        "inputs": g.input_names(), "outputs": g.output_names(),
    }
    if args.dump_annotations:
        ann = propagate(g, _read_shapes(args.shapes), _read_values(args.pinned))
        summary["annotations"] = annotations_to_dict(ann)
    _emit(_dumps(summary), args.output)
    return 0


def cmd_invert(args: argparse.Namespace) -> int:
    g = insert_dupl(_read_graph(args.graph))
    shapes, pinned = _read_shapes(args.shapes), _read_values(args.pinned)
    ann = propagate(g, shapes, pinned)
    if args.annotations:
        _emit(_dumps(annotations_to_dict(ann)), args.annotations)
    ip = invert(g, ann, input_shapes=shapes, pinned=pinned)
    if args.layout:
        _emit(_dumps(ip.layout.to_dict()), args.layout)
    _emit(ip.to_json(), args.output)
    return 0


def cmd_totalize(args: argparse.Namespace) -> int:
    _emit(totalize(_read_program(args.program)).to_json(), args.output)
    return 0


def cmd_reduce(args: argparse.Namespace) -> int:
    ip, report = reduce_program(_read_program(args.program))
    if args.report:
        _emit(_dumps(report.to_dict()), args.report)
    _emit(ip.to_json(), args.output)
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    outputs, _ = run_forward(_read_graph(args.graph), _read_values(args.inputs))
    _emit(_dumps({"outputs": {k: value_to_json(v) for k, v in outputs.items()}}), args.output)
    return 0


def cmd_runinv(args: argparse.Namespace) -> int:
    ip = _read_program(args.program)
    report = run_inverse(ip, _read_values(args.y), _read_theta(args.theta))
    _emit(_dumps(report.to_dict()), args.output)
    return 0


def cmd_extract(args: argparse.Namespace) -> int:
    ip = _read_program(args.program)
    outputs, theta = extract_theta_program(ip, _read_values(args.inputs))
    data = {"y": {k: value_to_json(v) for k, v in outputs.items()}, "theta": theta.tolist()}
    _emit(_dumps(data), args.output)
    return 0


def cmd_solve(args: argparse.Namespace) -> int:
    ip = _read_program(args.program)
    config = _solve_config(args)
    objective = Objective.named(args.loss, _read_values(args.y), config.lambda_dm)
    result = solve_theta(ip, objective, config)
    _emit(_dumps(result.to_dict()), args.output)
    return 0


def cmd_pipeline(args: argparse.Namespace) -> int:
    pcfg = load_config(args.config, PipelineConfig) if args.config else PipelineConfig()
    pcfg = PipelineConfig(
        reduce=pcfg.reduce and not args.no_reduce,
        totalize=pcfg.totalize and not args.no_totalize,
        dump_annotations=pcfg.dump_annotations or args.dump_annotations,
        solve=_solve_config(args, pcfg.solve),
    )
    out = args.out
    g = insert_dupl(_read_graph(args.graph))
    shapes, pinned = _read_shapes(args.shapes), _read_values(args.pinned)
    ann = propagate(g, shapes, pinned)
    if pcfg.dump_annotations:
        _emit(_dumps(annotations_to_dict(ann)), os.path.join(out, "annotations.json"))
    ip = invert(g, ann, input_shapes=shapes, pinned=pinned)
    _emit(ip.to_json(), os.path.join(out, "inverse.json"))
    if pcfg.reduce:
        ip, report = reduce_program(ip)
        _emit(_dumps(report.to_dict()), os.path.join(out, "constraints.json"))
        _emit(ip.to_json(), os.path.join(out, "reduced.json"))
    if pcfg.totalize:
        ip = totalize(ip)
        _emit(ip.to_json(), os.path.join(out, "totalized.json"))
    if args.y is not None:
        objective = Objective.named(args.loss, _read_values(args.y), pcfg.solve.lambda_dm)
        result = solve_theta(ip, objective, pcfg.solve)
        _emit(_dumps(result.to_dict()), os.path.join(out, "solve.json"))
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    out = args.out
    seed = 0 if args.seed is None else args.seed
    if args.suite == "ik":
        g = ik_chain_graph(args.links)
        _emit(g.to_json(), os.path.join(out, f"ik{args.links}.json"))
        targets = sample_reachable_targets(args.count, seed, args.links)
        _emit(_dumps(targets), os.path.join(out, "targets.json"))
    elif args.suite == "random":
        for s in range(seed, seed + args.count):
            g = gen_random(GenSpec(seed=s, op_range=(args.min_ops, args.max_ops)))
            _emit(g.to_json(), os.path.join(out, f"random_{s:04d}.json"))
    elif args.suite == "render1d":
        for n in args.samples:
            _emit(render1d_graph(n).to_json(), os.path.join(out, f"render1d_{n}.json"))
    else:
        config = _solve_config(args)
        rows = compare_harness(ik_problems(args.count, seed, args.links), config,
                               samples=args.init_samples, seed=seed)
        path = os.path.join(out, "compare.csv")
        os.makedirs(out, exist_ok=True)
        write_csv(rows, path)
        logger.info(f"Wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_solve_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--restarts", type=int, help="number of restarts")
    p.add_argument("--max-evals", type=int, dest="max_evals",
                   help="objective evaluations per restart")
    p.add_argument("--lambda-dm", type=float, dest="lambda_dm", help="domain-loss weight")
    p.add_argument("--workers", type=int, help="threads running restarts")


def _add_input_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--shapes", help="JSON object of input shapes")
    p.add_argument("--pinned", help="JSON object of inputs fixed to values")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pinvtools",
        description="Build, inspect and solve parametric inverses of dataflow graphs.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    parser.add_argument("--log-file", help="also write logs to this file")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("validate", help="check a graph file")
    p.add_argument("graph")
    p.add_argument("-o", "--output")
    p.add_argument("--dump-annotations", action="store_true",
                   help="include propagated annotations")
    _add_input_flags(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("invert", help="build the parametric inverse of a graph")
    p.add_argument("graph")
    p.add_argument("-o", "--output")
    p.add_argument("--annotations", help="also write propagated annotations here")
    p.add_argument("--layout", help="also write the parameter layout (spaces, origins) here")
    _add_input_flags(p)
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("totalize", help="insert contractions into an inverse program")
    p.add_argument("program")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_totalize)

    p = sub.add_parser("reduce", help="eliminate parameters fixed by equalities")
    p.add_argument("program")
    p.add_argument("-o", "--output")
    p.add_argument("--report", help="write collected constraints and eliminations here")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("run", help="evaluate a forward graph")
    p.add_argument("graph")
    p.add_argument("--inputs", required=True, help="JSON object of input values")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("runinv", help="evaluate an inverse program and report losses")
    p.add_argument("program")
    p.add_argument("--y", required=True, help="JSON object of target outputs")
    p.add_argument("--theta", required=True, help="JSON list of parameter values")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_runinv)

    p = sub.add_parser("extract", help="parameters that map f(x) back to x")
    p.add_argument("program")
    p.add_argument("--inputs", required=True, help="JSON object of input values")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("solve", help="optimize the parameters of a totalized program")
    p.add_argument("program")
    p.add_argument("--y", required=True, help="JSON object of target outputs")
    p.add_argument("--loss", default="abs-sum", help="abs-sum, zero or target:<file>")
    p.add_argument("--config", help="JSON solve config")
    p.add_argument("-o", "--output")
    _add_solve_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("pipeline", help="invert, reduce, totalize and solve in one go")
    p.add_argument("graph")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--y", help="JSON object of target outputs (solve is skipped without it)")
    p.add_argument("--loss", default="abs-sum", help="abs-sum, zero or target:<file>")
    p.add_argument("--config", help="JSON pipeline config")
    p.add_argument("--no-reduce", action="store_true")
    p.add_argument("--no-totalize", action="store_true")
    p.add_argument("--dump-annotations", action="store_true")
    _add_input_flags(p)
    _add_solve_flags(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("bench", help="write benchmark graphs and comparison reports")
    p.add_argument("suite", choices=["ik", "random", "render1d", "compare"])
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=20, help="targets or graphs to produce")
    p.add_argument("--links", type=int, default=3, help="links of the planar arm")
    p.add_argument("--min-ops", type=int, default=2, dest="min_ops")
    p.add_argument("--max-ops", type=int, default=8, dest="max_ops")
    p.add_argument("--samples", type=int, nargs="+", default=[2, 4, 8],
                   help="sample counts for render1d")
    p.add_argument("--init-samples", type=int, default=10, dest="init_samples",
                   help="random initial losses per method")
    p.add_argument("--config", help="JSON solve config")
    _add_solve_flags(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(level=logging.DEBUG if args.verbose else logging.WARNING,
                      log_file=args.log_file)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 2
    try:
        return args.func(args)
    except PinvError as e:
        log_exception(e, {"command": args.command})
        sys.stderr.write(f"error: {e}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
