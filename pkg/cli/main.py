"""Command-line entry point.

    python -m cli.main <subcommand> <problem> [options]

`problem` is a JSON problem file or `builtin:<name>`. Reports go to stdout (or
--output) as canonical JSON; the human-readable summary goes to stderr.
Exit codes: 0 success, 2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pydantic
import scipy
from pydantic import ValidationError

from cli import __version__
from cli.builtin_examples import BUILTINS, builtin_example
from cli.problem_io import (
    ProblemFile,
    ProblemMetadata,
    RunReport,
    build_space,
    emit_problem,
    emit_report,
    load_problem_file,
)
from config.settings import settings
from core.errors import InputError, NumericalFailure
from core.ncp_residual import NcpKind, ResidualConfig
from core.stochastic_model import SampleSpace, expectation_tensor
from core.tensor_core import Tensor
from optimization.solver import (
    DirectionGridSpec,
    SolverOptions,
    boundedness_probe,
    coercivity_scan,
    default_lambda_grid,
    ray_probe,
    solve_erm,
    solve_ev,
)
from structure_check import (
    CheckOptions,
    check_prop41,
    check_prop42_conditions,
    check_r0,
    check_stochastic_r0,
    check_theorem41_conditions,
    compare_with_claim,
    find_xi_points,
    perturbation_stability_test,
)

logger = logging.getLogger(__name__)

BUILTIN_PREFIX = "builtin:"
LOG_FORMAT = "[%(asctime)s] %(levelname)s: %(message)s"
DEFAULT_B_GRID = [0.1, 0.5, 1.0, 2.0, 5.0]

# Configuration sections each analysis subcommand resolves and echoes
SECTIONS = {
    "check-r0": ("check",),
    "check-sr0": ("check",),
    "xi": ("check",),
    "solve": ("solver", "residual"),
    "ray-probe": ("residual", "lambdas"),
    "coercivity-scan": ("residual", "grid"),
    "boundedness-probe": ("residual", "lambdas", "check"),
    "prop41": ("check",),
    "prop42": ("check",),
    "stability": ("check",),
}

Payload = Dict[str, Any]
Handler = Callable[[argparse.Namespace, SampleSpace, ProblemMetadata, Dict[str, Any]], Payload]


# ---------- Argument parsing ----------

def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _vector_list(text: str) -> List[List[float]]:
    return [_float_list(part) for part in text.split(";") if part.strip()]


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (default from config)")
    common.add_argument("--tol", type=float, default=None, help="zero tolerance of the R0 verdict")
    common.add_argument("--grid", type=int, default=None, help="simplex grid resolution")
    common.add_argument("--starts", type=int, default=None,
                        help="random simplex starts (checks) or multistart count (solve)")
    common.add_argument("--output", type=Path, default=None, help="write the report here instead of stdout")
    common.add_argument("--timing", action="store_true", help="include wall-clock time in the report")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return common


def _problem_options() -> argparse.ArgumentParser:
    problem = argparse.ArgumentParser(add_help=False)
    problem.add_argument("problem", help="problem file path or builtin:<name>")
    problem.add_argument("--order", type=int, default=3, help="order of builtin identity/zero")
    problem.add_argument("--dim", type=int, default=2, help="dimension of builtin identity/zero")
    problem.add_argument("--omega-values", type=_vector_list, default=None,
                         help="pinned ω vectors for builtin generators, e.g. --omega-values=-0.25;0.25")
    problem.add_argument("--samples", type=int, default=None, help="draw count for builtin generators")
    return problem


def _target_options(parser: argparse.ArgumentParser) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--realization", type=int, default=None, help="act on realization k")
    group.add_argument("--mean", action="store_true", help="act on the mean tensor")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stcp", description="Stochastic tensor complementarity: ERM and structure checks")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    common = _common_options()
    analysis = [common, _problem_options()]

    s = sub.add_parser("check-r0", parents=analysis, help="R0 check of realizations or the mean tensor")
    _target_options(s)

    sub.add_parser("check-sr0", parents=analysis, help="stochastic R0 check of the whole space")

    s = sub.add_parser("xi", parents=analysis, help="degenerate directions of one tensor")
    _target_options(s)

    s = sub.add_parser("solve", parents=analysis, help="solve the ERM or expected-value problem")
    s.add_argument("--method", choices=["erm", "ev"], default="erm")
    s.add_argument("--ncp", choices=[k.value for k in NcpKind], default=NcpKind.FB.value)
    s.add_argument("--mu", type=float, default=0.0, help="smoothing parameter of the MIN residual")

    s = sub.add_parser("ray-probe", parents=analysis, help="objective along one ray")
    s.add_argument("--direction", type=_float_list, required=True)
    s.add_argument("--ncp", choices=[k.value for k in NcpKind], default=NcpKind.MIN.value)
    s.add_argument("--lambdas", type=_float_list, default=None)

    s = sub.add_parser("coercivity-scan", parents=analysis, help="ray probes over a direction grid")
    s.add_argument("--ncp", choices=[k.value for k in NcpKind], default=NcpKind.MIN.value)
    s.add_argument("--directions", type=int, default=None, help="random directions added to the grid")
    s.add_argument("--lambdas", type=_float_list, default=None)

    s = sub.add_parser("boundedness-probe", parents=analysis, help="G(0) against the ray limit at a witness")
    s.add_argument("--witness", type=_float_list, required=True)
    s.add_argument("--ncp", choices=[k.value for k in NcpKind], default=NcpKind.MIN.value)
    s.add_argument("--lambdas", type=_float_list, default=None)

    sub.add_parser("prop41", parents=analysis, help="R0 of the mean tensor next to stochastic R0")

    s = sub.add_parser("prop42", parents=analysis, help="perturbation conditions on the degenerate set of the mean")
    s.add_argument("--b-grid", type=_float_list, default=None)

    s = sub.add_parser("stability", parents=analysis, help="R0 survival under random perturbations")
    _target_options(s)
    s.add_argument("--radius", type=float, required=True)
    s.add_argument("--draws", type=int, default=20)

    s = sub.add_parser("example", parents=[common], help="dump a built-in problem file")
    s.add_argument("name", choices=sorted(BUILTINS))
    s.add_argument("--order", type=int, default=3)
    s.add_argument("--dim", type=int, default=2)
    s.add_argument("--omega-values", type=_vector_list, default=None)
    s.add_argument("--samples", type=int, default=None)

    s = sub.add_parser("replay", parents=[common], help="re-run the command echoed in a report")
    s.add_argument("report", type=Path)
    return p


# ---------- Problem and configuration ----------

def _resolved_seed(args: argparse.Namespace) -> int:
    return settings.runtime.seed if args.seed is None else args.seed


def _load_problem(args: argparse.Namespace, seed: int) -> ProblemFile:
    if args.problem.startswith(BUILTIN_PREFIX):
        return builtin_example(
            args.problem[len(BUILTIN_PREFIX):],
            order=args.order,
            dim=args.dim,
            omega_values=args.omega_values,
            samples=args.samples,
            seed=seed,
        )
    return load_problem_file(args.problem)


def _section(name: str, args: argparse.Namespace, dim: int, seed: int) -> Any:
    if name == "check":
        overrides = {"seed": seed}
        if args.tol is not None:
            overrides["zero_tolerance"] = args.tol
        if args.grid is not None:
            overrides["grid_resolution"] = args.grid
        if args.starts is not None:
            overrides["random_starts"] = args.starts
        options = CheckOptions(**overrides)
        return options.model_copy(update={"grid_resolution": options.resolution_for(dim)}).model_dump(mode="json")
    if name == "solver":
        overrides = {"seed": seed}
        if args.starts is not None:
            overrides["multistart_count"] = args.starts
        return SolverOptions(**overrides).model_dump(mode="json")
    if name == "residual":
        mu = getattr(args, "mu", 0.0)
        return ResidualConfig(ncp_kind=NcpKind(args.ncp), smoothing_mu=mu).model_dump(mode="json")
    if name == "lambdas":
        return list(args.lambdas) if args.lambdas else default_lambda_grid()
    if name == "grid":
        overrides = {"seed": seed, "resolution": args.grid, "lambdas": args.lambdas}
        if args.directions is not None:
            overrides["random_directions"] = args.directions
        return DirectionGridSpec(**overrides).resolved(dim).model_dump(mode="json")
    raise KeyError(name)


def resolve_configuration(args: argparse.Namespace, dim: int, seed: int) -> Dict[str, Any]:
    """Every option the command will use, with defaults filled in from settings."""
    try:
        configuration = {name: _section(name, args, dim, seed) for name in SECTIONS[args.command]}
    except ValidationError as e:
        raise InputError(f"invalid option: {e.errors()[0]['msg']}") from e
    configuration["seed"] = seed
    return configuration


def _target(space: SampleSpace, args: argparse.Namespace, default_all: bool) -> List[Tuple[str, Tensor]]:
    if args.mean:
        return [("mean", expectation_tensor(space))]
    if args.realization is not None:
        if not 0 <= args.realization < space.size:
            raise InputError(f"realization {args.realization} out of range for {space.size} realization(s)")
        return [(f"realization {args.realization}", space.realizations[args.realization].tensor)]
    if default_all:
        return [(f"realization {k}", r.tensor) for k, r in enumerate(space.realizations)]
    return [("realization 0", space.realizations[0].tensor)]


# ---------- Handlers ----------

def _run_check_r0(args, space, metadata, config) -> Payload:
    options = CheckOptions(**config["check"])
    return {
        "targets": [
            {"target": label, "report": check_r0(tensor, options).model_dump(mode="json")}
            for label, tensor in _target(space, args, default_all=True)
        ]
    }


def _run_check_sr0(args, space, metadata, config) -> Payload:
    report = check_stochastic_r0(space, CheckOptions(**config["check"]))
    return compare_with_claim(report, metadata.claimed_verdict, metadata.claim_source).model_dump(mode="json")


def _run_xi(args, space, metadata, config) -> Payload:
    [(label, tensor)] = _target(space, args, default_all=False)
    points = find_xi_points(tensor, CheckOptions(**config["check"]))
    return {"target": label, "points": [p.model_dump(mode="json") for p in points]}


def _run_solve(args, space, metadata, config) -> Payload:
    solve = solve_ev if args.method == "ev" else solve_erm
    result = solve(space, ResidualConfig(**config["residual"]), SolverOptions(**config["solver"]))
    return {"method": args.method, **result.model_dump(mode="json")}


def _run_ray_probe(args, space, metadata, config) -> Payload:
    report = ray_probe(space, args.direction, config["lambdas"], ResidualConfig(**config["residual"]))
    return report.model_dump(mode="json")


def _run_coercivity_scan(args, space, metadata, config) -> Payload:
    grid = DirectionGridSpec(**config["grid"])
    return coercivity_scan(space, ResidualConfig(**config["residual"]), grid).model_dump(mode="json")


def _run_boundedness_probe(args, space, metadata, config) -> Payload:
    report = boundedness_probe(space, args.witness, config["lambdas"], ResidualConfig(**config["residual"]))
    options = CheckOptions(**config["check"])
    conditions = check_theorem41_conditions(space, report.witness, options.condition_tolerance)
    return {"probe": report.model_dump(mode="json"), "conditions": conditions.model_dump(mode="json")}


def _run_prop41(args, space, metadata, config) -> Payload:
    return check_prop41(space, CheckOptions(**config["check"])).model_dump(mode="json")


def _run_prop42(args, space, metadata, config) -> Payload:
    options = CheckOptions(**config["check"])
    base = expectation_tensor(space)
    xi_points = find_xi_points(base, options)
    b_grid = args.b_grid or DEFAULT_B_GRID
    return check_prop42_conditions(base, space.centered(), xi_points, b_grid, options).model_dump(mode="json")


def _run_stability(args, space, metadata, config) -> Payload:
    options = CheckOptions(**config["check"])
    [(label, tensor)] = _target(space, args, default_all=False)
    report = perturbation_stability_test(tensor, args.radius, args.draws, seed=options.seed, options=options)
    return {"target": label, **report.model_dump(mode="json")}


HANDLERS: Dict[str, Handler] = {
    "check-r0": _run_check_r0,
    "check-sr0": _run_check_sr0,
    "xi": _run_xi,
    "solve": _run_solve,
    "ray-probe": _run_ray_probe,
    "coercivity-scan": _run_coercivity_scan,
    "boundedness-probe": _run_boundedness_probe,
    "prop41": _run_prop41,
    "prop42": _run_prop42,
    "stability": _run_stability,
}


# ---------- Runs ----------

def _versions() -> Dict[str, str]:
    return {
        "stcp": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pydantic": pydantic.VERSION,
    }


# Flags that only steer where the report and the log go; left out of the echoed argv
UNECHOED_FLAGS = ("--output", "--log-level")


def echoed_argv(argv: Sequence[str]) -> List[str]:
    """argv without the report destination and log level, so reruns to other files compare equal."""
    echoed: List[str] = []
    skip = False
    for token in argv:
        if skip:
            skip = False
        elif token in UNECHOED_FLAGS:
            skip = True
        elif not token.startswith(tuple(f"{flag}=" for flag in UNECHOED_FLAGS)):
            echoed.append(token)
    return echoed


def execute(
    args: argparse.Namespace,
    argv: Sequence[str],
    configuration: Optional[Dict[str, Any]] = None,
) -> RunReport:
    """Run one analysis subcommand; `configuration` replaces option resolution when replaying."""
    seed = configuration["seed"] if configuration else _resolved_seed(args)
    problem = _load_problem(args, seed)
    space = build_space(problem)
    if configuration is None:
        configuration = resolve_configuration(args, space.dim, seed)

    logger.info(f"Running {args.command} on {problem.metadata.name or args.problem}: {space}")
    started = time.perf_counter()
    result = HANDLERS[args.command](args, space, problem.metadata, configuration)
    elapsed = time.perf_counter() - started
    logger.info(f"{args.command} finished in {elapsed:.2f}s")

    return RunReport(
        command=args.command,
        argv=echoed_argv(argv),
        problem={
            "source": args.problem,
            "name": problem.metadata.name,
            "order": space.order,
            "dim": space.dim,
            "realizations": space.size,
        },
        configuration=configuration,
        result=result,
        versions=_versions(),
        seed=seed,
        wall_clock_seconds=elapsed,
    )


def replay(path: Path, parser: argparse.ArgumentParser) -> RunReport:
    """Re-run the command echoed in a saved report with its echoed configuration."""
    try:
        saved = json.loads(Path(path).read_text(encoding="utf-8"))
        argv, configuration = saved["argv"], saved["configuration"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as e:
        raise InputError(f"cannot replay {path}: {e}") from e
    args = parser.parse_args(argv)
    if args.command not in HANDLERS:
        raise InputError(f"report command {args.command!r} cannot be replayed")
    logger.info(f"Replaying {args.command} from {path}")
    return execute(args, argv, configuration)


def _write(text: str, output: Optional[Path]) -> None:
    if output is None:
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        output.write_text(text, encoding="utf-8")
        logger.info(f"Report written to {output}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format=LOG_FORMAT, stream=sys.stderr)

    try:
        if args.command == "example":
            problem = builtin_example(
                args.name,
                order=args.order,
                dim=args.dim,
                omega_values=args.omega_values,
                samples=args.samples,
                seed=_resolved_seed(args),
            )
            _write(emit_problem(problem), args.output)
            return 0
        report = replay(args.report, parser) if args.command == "replay" else execute(args, argv)
        _write(emit_report(report, timing=args.timing), args.output)
    except (InputError, ValidationError) as e:
        logger.error(f"Input error: {e}")
        return 2
    except NumericalFailure as e:
        logger.error(f"Numerical failure: {e}")
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
