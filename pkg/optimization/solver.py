"""ERM / EV solves over x >= 0 and ray probes of the level sets of G.

Solves run projected gradient (BB + Armijo) per smoothing stage, warm-started
across stages, from several seeded starting points; the best start wins
(lowest objective, then lowest start index). Each start keeps the iterate with
the lowest objective under the caller's configuration, so its trace never
rises even where a new smoothing stage starts above the previous one.

Ray probes evaluate G(λd) on a logarithmic λ grid and classify the ray:

    GROWS         last 5 values strictly increasing and the final value is
                  at least max(1e6·eps, 1e3·G(d)), or overflow was clamped
    BOUNDED       last 5 values within 1% of their maximum and no value above
                  2·G(d) + that plateau
    INCONCLUSIVE  anything else
"""

from __future__ import annotations

import logging
from enum import Enum
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from config.settings import settings
from core.errors import InputError
from core.ncp_residual import NcpKind, ResidualConfig, support_sets
from core.stochastic_model import SampleSpace, expected_q_moments
from optimization.erm_objective import ev_space, objective_value, value_and_gradient
from optimization.projected_gradient import descend, project_nonnegative
from optimization.simplex import simplex_grid
from utils.parallel import ordered_map
from utils.rng import Stream, keyed_generator, random_simplex_point

logger = logging.getLogger(__name__)

MACHINE_EPSILON = float(np.finfo(float).eps)
TAIL_LENGTH = 5


# ---------- Options and results ----------

class SolverOptions(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    max_iterations: int = Field(default_factory=lambda: settings.solver.max_iterations, ge=1)
    gradient_tolerance: float = Field(default_factory=lambda: settings.solver.gradient_tolerance, gt=0)
    objective_tolerance: float = Field(default_factory=lambda: settings.solver.objective_tolerance, gt=0)
    armijo_initial_step: float = Field(default_factory=lambda: settings.solver.armijo_initial_step, gt=0)
    armijo_backtrack: float = Field(default_factory=lambda: settings.solver.armijo_backtrack, gt=0, lt=1)
    armijo_sufficient_decrease: float = Field(
        default_factory=lambda: settings.solver.armijo_sufficient_decrease, gt=0, lt=1
    )
    mu_schedule: List[float] = Field(default_factory=lambda: list(settings.solver.mu_schedule))
    multistart_count: int = Field(default_factory=lambda: settings.solver.multistart_count, ge=1)
    multistart_high: float = Field(default_factory=lambda: settings.solver.multistart_high, gt=0)
    exact_min_mu_tail: List[float] = Field(default_factory=lambda: list(settings.solver.exact_min_mu_tail))
    refine_gradient_tolerance: float = Field(default_factory=lambda: settings.solver.refine_gradient_tolerance, gt=0)
    refine_objective_tolerance: float = Field(default_factory=lambda: settings.solver.refine_objective_tolerance, gt=0)
    seed: int = Field(default_factory=lambda: settings.runtime.seed)

    @field_validator("mu_schedule")
    @classmethod
    def _strictly_decreasing(cls, schedule: List[float]) -> List[float]:
        if not schedule:
            raise ValueError("mu_schedule must not be empty")
        return _check_decreasing(schedule, "mu_schedule")

    @field_validator("exact_min_mu_tail")
    @classmethod
    def _tail_decreasing(cls, tail: List[float]) -> List[float]:
        return _check_decreasing(tail, "exact_min_mu_tail")

    @property
    def armijo_params(self) -> Tuple[float, float, float]:
        """(initial step, backtrack factor, sufficient-decrease constant)."""
        return self.armijo_initial_step, self.armijo_backtrack, self.armijo_sufficient_decrease


def _check_decreasing(schedule: List[float], name: str) -> List[float]:
    if any(mu <= 0 for mu in schedule):
        raise ValueError(f"{name} entries must be positive")
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError(f"{name} must be strictly decreasing")
    return schedule


class TracePoint(BaseModel):
    """`objective` is the best caller objective so far; `stage_objective` is what the stage minimizes."""

    iteration: int
    mu: float
    objective: float
    stage_objective: float


class StartResult(BaseModel):
    start_index: int
    x: List[float]
    objective: float
    converged: bool
    iterations: int


class SolveResult(BaseModel):
    x_star: List[float]
    objective: float
    converged: bool
    iterations: int
    start_index: int
    trace: List[TracePoint]
    starts: List[StartResult]


class RayVerdict(str, Enum):
    GROWS = "GROWS"
    BOUNDED = "BOUNDED"
    INCONCLUSIVE = "INCONCLUSIVE"


class RayProbeReport(BaseModel):
    direction: List[float]
    lambdas: List[float]
    values: List[float]
    value_at_one: float
    verdict: RayVerdict
    bound_estimate: float
    clamped: bool = False


class DirectionGridSpec(BaseModel):
    """Directions for a coercivity scan: a simplex grid plus seeded random points."""

    model_config = ConfigDict(extra="forbid")

    resolution: Optional[int] = Field(default=None, ge=1)
    random_directions: int = Field(default_factory=lambda: settings.probe.random_directions, ge=0)
    seed: int = Field(default_factory=lambda: settings.runtime.seed)
    lambdas: Optional[List[float]] = None

    def resolved(self, dim: int) -> "DirectionGridSpec":
        return self.model_copy(update={
            "resolution": self.resolution or settings.probe.resolution_for(dim),
            "lambdas": list(self.lambdas) if self.lambdas else default_lambda_grid(),
        })


class CoercivityScanReport(BaseModel):
    verdict: RayVerdict
    witness: Optional[List[float]] = None
    grid: DirectionGridSpec
    probes: List[RayProbeReport]


class BoundednessRegime(str, Enum):
    ORIGIN_BELOW_PLATEAU = "ORIGIN_BELOW_PLATEAU"
    VANISHING = "VANISHING"
    GROWS = "GROWS"
    INDETERMINATE = "INDETERMINATE"


class BoundednessReport(BaseModel):
    witness: List[float]
    zero_indices: List[int]
    nonzero_indices: List[int]
    origin_value: float
    origin_prediction: float
    plateau_prediction: float
    lambdas: List[float]
    values: List[float]
    limit_estimate: float
    ray_verdict: RayVerdict
    regime: BoundednessRegime


# ---------- Solves ----------

class _Stage(NamedTuple):
    config: ResidualConfig
    refine: bool


def _stages(config: ResidualConfig, options: SolverOptions) -> List[_Stage]:
    """Stages in order; refine stages run with the tight refine tolerances."""
    if config.ncp_kind is NcpKind.FB:
        return [_Stage(config, False), _Stage(config, True)]
    if config.smoothing_mu > 0:
        mus = [mu for mu in options.mu_schedule if mu > config.smoothing_mu] + [config.smoothing_mu]
        return [_Stage(config.with_mu(mu), False) for mu in mus]
    # Exact MIN: the smoothed minimizers sit O(μ^{2/3}) away, so continue well below the schedule
    tail = [mu for mu in options.exact_min_mu_tail if mu < options.mu_schedule[-1]]
    return [_Stage(config.with_mu(mu), False) for mu in options.mu_schedule] + [
        _Stage(config.with_mu(mu), True) for mu in tail
    ]


def _solve_from(
    space: SampleSpace, config: ResidualConfig, options: SolverOptions, start_index: int
) -> Tuple[StartResult, List[TracePoint]]:
    x = keyed_generator(options.seed, Stream.MULTISTART, start_index).uniform(
        0.0, options.multistart_high, size=space.dim
    )
    trace: List[TracePoint] = []
    best_x, best = x, float("inf")
    iterations = 0
    converged = False

    initial_step, backtrack, sufficient_decrease = options.armijo_params
    for stage in _stages(config, options):
        def record(iteration: int, z: np.ndarray, f: float, mu: float = stage.config.smoothing_mu) -> None:
            nonlocal best_x, best
            exact = objective_value(space, z, config)
            if exact < best:
                best_x, best = z, exact
            trace.append(TracePoint(iteration=iteration, mu=mu, objective=best, stage_objective=f))

        gradient_tolerance, objective_tolerance = options.gradient_tolerance, options.objective_tolerance
        if stage.refine:
            gradient_tolerance = min(gradient_tolerance, options.refine_gradient_tolerance)
            objective_tolerance = min(objective_tolerance, options.refine_objective_tolerance)
        run = descend(
            lambda z, cfg=stage.config: value_and_gradient(space, z, cfg),
            lambda z, cfg=stage.config: objective_value(space, z, cfg),
            x,
            project_nonnegative,
            max_iterations=options.max_iterations,
            gradient_tolerance=gradient_tolerance,
            objective_tolerance=objective_tolerance,
            initial_step=initial_step,
            backtrack=backtrack,
            sufficient_decrease=sufficient_decrease,
            iteration_offset=iterations,
            monitor=record,
        )
        iterations += run.iterations
        x = run.x
        converged = converged or run.converged
        logger.debug(
            f"start {start_index}, mu={stage.config.smoothing_mu:g}{' (refine)' if stage.refine else ''}: "
            f"{run.iterations} iterations, stage objective {run.value:.3e}, best objective {best:.3e}"
        )

    result = StartResult(
        start_index=start_index,
        x=[float(v) for v in best_x],
        objective=best,
        converged=converged or best <= options.objective_tolerance,
        iterations=iterations,
    )
    return result, trace


def solve_erm(
    space: SampleSpace,
    config: Optional[ResidualConfig] = None,
    options: Optional[SolverOptions] = None,
) -> SolveResult:
    """Minimize G over the nonnegative orthant from `multistart_count` seeded starts."""
    config = config or ResidualConfig(ncp_kind=NcpKind.FB)
    options = options or SolverOptions()

    runs = ordered_map(
        lambda s: _solve_from(space, config, options, s),
        range(options.multistart_count),
        desc="multistart",
    )
    best_index = min(range(len(runs)), key=lambda s: (runs[s][0].objective, s))
    best, trace = runs[best_index]
    logger.info(
        f"Solved {config.ncp_kind.value.upper()} ERM over {space.size} realization(s): "
        f"objective {best.objective:.3e} from start {best_index} (converged={best.converged})"
    )
    return SolveResult(
        x_star=best.x,
        objective=best.objective,
        converged=best.converged,
        iterations=best.iterations,
        start_index=best_index,
        trace=trace,
        starts=[start for start, _ in runs],
    )


def solve_ev(
    space: SampleSpace,
    config: Optional[ResidualConfig] = None,
    options: Optional[SolverOptions] = None,
) -> SolveResult:
    """Solve the expected-value system: ERM on the singleton space (Ā, q̄)."""
    return solve_erm(ev_space(space), config, options)


# ---------- Ray probes ----------

def default_lambda_grid() -> List[float]:
    probe = settings.probe
    exponents = np.arange(probe.lambda_exponent_min, probe.lambda_exponent_max + probe.lambda_exponent_step / 2,
                          probe.lambda_exponent_step)
    return [float(10.0 ** e) for e in exponents]


def _unit_direction(direction: Sequence[float], dim: int, name: str = "direction") -> np.ndarray:
    d = np.array(direction, dtype=float)
    if d.shape != (dim,):
        raise InputError(f"dimension mismatch: {name} has shape {d.shape}, expected ({dim},)")
    if not np.all(np.isfinite(d)) or np.any(d < 0):
        raise InputError(f"{name} must be finite and nonnegative")
    norm = np.linalg.norm(d)
    if norm == 0.0:
        raise InputError(f"{name} must be nonzero")
    return d / norm


def _checked_lambdas(lambdas: Optional[Sequence[float]]) -> List[float]:
    grid = [float(v) for v in (lambdas if lambdas else default_lambda_grid())]
    if any(v <= 0 for v in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise InputError("lambda grid must be positive and strictly increasing")
    return grid


def _ray_values(
    space: SampleSpace, d: np.ndarray, lambdas: Sequence[float], config: ResidualConfig
) -> Tuple[List[float], bool]:
    clamp = settings.probe.overflow_clamp
    values, clamped = [], False
    with np.errstate(over="ignore", invalid="ignore"):
        for lam in lambdas:
            value = objective_value(space, lam * d, config)
            if not np.isfinite(value) or value > clamp:
                value, clamped = clamp, True
            values.append(value)
    if clamped:
        logger.warning(f"Ray values clamped at {clamp:g} (overflow along the ray)")
    return values, clamped


def classify_ray(values: Sequence[float], value_at_one: float, clamped: bool = False) -> RayVerdict:
    if clamped:
        return RayVerdict.GROWS
    tail = np.asarray(values[-TAIL_LENGTH:], dtype=float)
    final = tail[-1]
    if len(tail) >= 2 and np.all(np.diff(tail) > 0) and final >= max(1e6 * MACHINE_EPSILON, 1e3 * value_at_one):
        return RayVerdict.GROWS
    plateau = tail.max()
    if plateau - tail.min() <= 0.01 * plateau and max(values) <= 2.0 * value_at_one + plateau:
        return RayVerdict.BOUNDED
    return RayVerdict.INCONCLUSIVE


def ray_probe(
    space: SampleSpace,
    direction: Sequence[float],
    lambda_grid: Optional[Sequence[float]] = None,
    config: Optional[ResidualConfig] = None,
) -> RayProbeReport:
    """G(λ·d/‖d‖) along the grid, with a GROWS / BOUNDED / INCONCLUSIVE verdict."""
    config = config or ResidualConfig()
    d = _unit_direction(direction, space.dim)
    lambdas = _checked_lambdas(lambda_grid)
    values, clamped = _ray_values(space, d, lambdas, config)
    value_at_one = objective_value(space, d, config)
    return RayProbeReport(
        direction=[float(v) for v in d],
        lambdas=lambdas,
        values=values,
        value_at_one=value_at_one,
        verdict=classify_ray(values, value_at_one, clamped),
        bound_estimate=max(values),
        clamped=clamped,
    )


def scan_directions(dim: int, grid: DirectionGridSpec) -> List[np.ndarray]:
    """Simplex grid points (e₁ first) followed by the seeded random directions."""
    directions = simplex_grid(dim, grid.resolution)
    directions += [
        random_simplex_point(grid.seed, Stream.DIRECTIONS, r, dim=dim) for r in range(grid.random_directions)
    ]
    return directions


def coercivity_scan(
    space: SampleSpace,
    config: Optional[ResidualConfig] = None,
    grid: Optional[DirectionGridSpec] = None,
) -> CoercivityScanReport:
    """Ray probes over many directions; GROWS only if every ray grows.

    The first BOUNDED direction in scan order is returned as the witness.
    """
    config = config or ResidualConfig()
    grid = (grid or DirectionGridSpec()).resolved(space.dim)
    directions = scan_directions(space.dim, grid)

    probes = ordered_map(
        lambda d: ray_probe(space, d, grid.lambdas, config),
        directions,
        desc="coercivity scan",
    )
    bounded = [p for p in probes if p.verdict is RayVerdict.BOUNDED]
    if bounded:
        verdict, witness = RayVerdict.BOUNDED, bounded[0].direction
    elif all(p.verdict is RayVerdict.GROWS for p in probes):
        verdict, witness = RayVerdict.GROWS, None
    else:
        verdict, witness = RayVerdict.INCONCLUSIVE, None

    logger.info(f"Coercivity scan over {len(probes)} directions: {verdict.value}")
    return CoercivityScanReport(verdict=verdict, witness=witness, grid=grid, probes=probes)


def boundedness_probe(
    space: SampleSpace,
    witness: Sequence[float],
    lambda_grid: Optional[Sequence[float]] = None,
    config: Optional[ResidualConfig] = None,
) -> BoundednessReport:
    """Compare G(0) with the large-λ behaviour of G(λx̃) along a degenerate direction.

    For the MIN residual G(0) = Σ_i E{q_i²·1[q_i < 0]}, and at a degenerate
    witness the ray settles at Σ_{i ∈ 𝕁(x̃)} E{q_i²}.
    """
    config = config or ResidualConfig()
    d = _unit_direction(witness, space.dim, name="witness")
    lambdas = _checked_lambdas(lambda_grid)
    values, clamped = _ray_values(space, d, lambdas, config)
    value_at_one = objective_value(space, d, config)
    ray_verdict = classify_ray(values, value_at_one, clamped)

    _, q_squares, negative_part = expected_q_moments(space)
    sets = support_sets(d)
    plateau_prediction = float(sum(q_squares[i] for i in sets.nonzero_indices))
    origin_value = objective_value(space, np.zeros(space.dim), config)
    limit_estimate = values[-1]

    if ray_verdict is RayVerdict.GROWS:
        regime = BoundednessRegime.GROWS
    elif limit_estimate <= settings.probe.vanishing_tolerance:
        regime = BoundednessRegime.VANISHING
    elif ray_verdict is RayVerdict.BOUNDED and origin_value < limit_estimate:
        regime = BoundednessRegime.ORIGIN_BELOW_PLATEAU
    else:
        regime = BoundednessRegime.INDETERMINATE

    logger.info(f"Boundedness probe: G(0)={origin_value:.6g}, limit≈{limit_estimate:.6g}, regime {regime.value}")
    return BoundednessReport(
        witness=[float(v) for v in d],
        zero_indices=list(sets.zero_indices),
        nonzero_indices=list(sets.nonzero_indices),
        origin_value=origin_value,
        origin_prediction=float(np.sum(negative_part)),
        plateau_prediction=plateau_prediction,
        lambdas=lambdas,
        values=values,
        limit_estimate=limit_estimate,
        ray_verdict=ray_verdict,
        regime=regime,
    )
