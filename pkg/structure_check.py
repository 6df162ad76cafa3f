from __future__ import annotations

import itertools
import logging
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import linprog

from config.settings import settings
from core.errors import InputError
from core.ncp_residual import NcpKind, ResidualConfig, support_sets
from core.stochastic_model import SampleSpace, expectation_tensor
from core.tensor_core import DENSE_LIMIT, Tensor, contract_to_vector, frobenius_norm
from optimization.erm_objective import objective_value, value_and_gradient
from optimization.projected_gradient import descend
from optimization.simplex import project_to_simplex, simplex_grid
from utils.parallel import ordered_map
from utils.rng import Stream, keyed_generator, random_simplex_point

logger = logging.getLogger(__name__)

EXACT_MIN = ResidualConfig(ncp_kind=NcpKind.MIN, smoothing_mu=0.0)
# Polish runs to these (stationarity on the simplex, smoothed merit floor)
POLISH_GRADIENT_TOLERANCE = 1e-14
POLISH_OBJECTIVE_TOLERANCE = 1e-30
# Distinct Ξ points must differ by more than this in max-norm
XI_DEDUP_DISTANCE = 1e-6
# Strictly positive LP optimum needed to certify an R0-violating support
MATRIX_SUPPORT_MARGIN = 1e-9
MATRIX_MAX_DIM = 12


class Verdict(str, Enum):
    IS_R0 = "IS_R0"
    NOT_R0 = "NOT_R0"
    INCONCLUSIVE = "INCONCLUSIVE"


class CheckOptions(BaseModel):
    """Thresholds and search effort for the simplex-restricted checks."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    zero_tolerance: float = Field(default_factory=lambda: settings.checker.zero_tolerance, ge=0)
    decision_tolerance: float = Field(default_factory=lambda: settings.checker.decision_tolerance, gt=0)
    support_tolerance: float = Field(default_factory=lambda: settings.checker.support_tolerance, ge=0)
    condition_tolerance: float = Field(default_factory=lambda: settings.checker.condition_tolerance, ge=0)
    xi_tolerance: float = Field(default_factory=lambda: settings.checker.xi_tolerance, ge=0)
    grid_resolution: Optional[int] = Field(default=None, ge=1)
    random_starts: int = Field(default_factory=lambda: settings.checker.random_starts, ge=0)
    polish_count: int = Field(default_factory=lambda: settings.checker.polish_count, ge=0)
    polish_iterations: int = Field(default_factory=lambda: settings.checker.polish_iterations, ge=1)
    polish_mu_schedule: List[float] = Field(default_factory=lambda: list(settings.checker.polish_mu_schedule))
    seed: int = Field(default_factory=lambda: settings.runtime.seed)

    def resolution_for(self, dim: int) -> int:
        return self.grid_resolution or settings.checker.resolution_for(dim)


class GridRecord(BaseModel):
    resolution: int
    grid_points: int
    random_starts: int
    polish_count: int
    polish_iterations: int
    polish_mu_schedule: List[float]
    zero_tolerance: float
    decision_tolerance: float
    seed: int


class CheckReport(BaseModel):
    verdict: Verdict
    witness: Optional[List[float]] = None
    certificate_residual: float
    grid_spec: GridRecord
    discrepancy: Optional[str] = None


class XiPoint(BaseModel):
    x: List[float]
    max_violation: float


class Theorem41Conditions(BaseModel):
    cond_a: bool
    cond_b: bool


class Prop42PointRecord(BaseModel):
    x: List[float]
    cond1: bool
    cond2: bool


class Prop42Report(BaseModel):
    points: List[Prop42PointRecord]
    all_points_covered: bool
    b_max: float
    note: str
    analytic_note: Optional[str] = None


class Prop41Report(BaseModel):
    mean_is_r0: bool
    mean_report: CheckReport
    stochastic_r0: CheckReport
    implication_holds: Optional[bool] = None


class StabilityReport(BaseModel):
    radius: float
    draws: int
    survived: int
    fraction: float
    verdicts: List[Verdict]


class MatrixCheckReport(BaseModel):
    verdict: Verdict
    witness: Optional[List[float]] = None
    support: Optional[List[int]] = None


# ---------- Simplex search ----------

def _verdict(residual: float, options: CheckOptions) -> Verdict:
    if residual <= options.zero_tolerance:
        return Verdict.NOT_R0
    if residual > options.decision_tolerance:
        return Verdict.IS_R0
    return Verdict.INCONCLUSIVE


def _grid_record(dim: int, options: CheckOptions, grid_points: int) -> GridRecord:
    return GridRecord(
        resolution=options.resolution_for(dim),
        grid_points=grid_points,
        random_starts=options.random_starts,
        polish_count=options.polish_count,
        polish_iterations=options.polish_iterations,
        polish_mu_schedule=list(options.polish_mu_schedule),
        zero_tolerance=options.zero_tolerance,
        decision_tolerance=options.decision_tolerance,
        seed=options.seed,
    )


def _polish(merit_space: SampleSpace, x0: np.ndarray, options: CheckOptions) -> np.ndarray:
    """Simplex-projected descent on the smoothed MIN merit, one stage per μ."""
    x = x0
    for mu in options.polish_mu_schedule:
        config = ResidualConfig(ncp_kind=NcpKind.MIN, smoothing_mu=mu)
        run = descend(
            lambda z: value_and_gradient(merit_space, z, config),
            lambda z: objective_value(merit_space, z, config),
            x,
            project_to_simplex,
            max_iterations=options.polish_iterations,
            gradient_tolerance=POLISH_GRADIENT_TOLERANCE,
            objective_tolerance=POLISH_OBJECTIVE_TOLERANCE,
        )
        x = run.x
    return x


def _simplex_seeds(dim: int, options: CheckOptions, with_random: bool = True) -> List[np.ndarray]:
    seeds = simplex_grid(dim, options.resolution_for(dim))
    if with_random:
        seeds += [
            random_simplex_point(options.seed, Stream.CHECK_SEEDS, r, dim=dim) for r in range(options.random_starts)
        ]
    return seeds


def _minimize_merit(space: SampleSpace, options: CheckOptions) -> Tuple[float, np.ndarray, int]:
    """Smallest G₀(x) = Σ_k w_k ‖min(x, A_k x^{N-1})‖² found on the simplex.

    Returns (value, point, number of grid points). Ties go to the earliest
    seed, and a seed beats its own polished point.
    """
    merit_space = space.with_zero_q()
    seeds = _simplex_seeds(space.dim, options)
    grid_points = len(seeds) - options.random_starts

    seed_values = [objective_value(merit_space, x, EXACT_MIN) for x in seeds]
    chosen = [int(s) for s in np.argsort(seed_values, kind="stable")[: options.polish_count]]
    polished = ordered_map(lambda s: _polish(merit_space, seeds[s], options), chosen, desc="polish")

    candidates = [(value, s, 0, seeds[s]) for s, value in enumerate(seed_values)]
    candidates += [
        (objective_value(merit_space, x, EXACT_MIN), s, 1, x) for s, x in zip(chosen, polished)
    ]
    value, _, _, point = min(candidates, key=lambda c: c[:3])
    return value, point, grid_points


def check_stochastic_r0(space: SampleSpace, options: Optional[CheckOptions] = None) -> CheckReport:
    """Decide stochastic R0 by minimizing G₀ over the unit simplex.

    The zero set of G₀ is a cone (complementarity survives positive scaling),
    so it meets the simplex unless it is {0}.
    """
    options = options or CheckOptions()
    value, point, grid_points = _minimize_merit(space, options)
    verdict = _verdict(value, options)
    witness = None if verdict is Verdict.IS_R0 else [float(v) for v in point]
    logger.info(f"Stochastic R0 check over {space.size} realization(s): {verdict.value} (merit {value:.3e})")
    return CheckReport(
        verdict=verdict,
        witness=witness,
        certificate_residual=value,
        grid_spec=_grid_record(space.dim, options, grid_points),
    )


def check_r0(A: Tensor, options: Optional[CheckOptions] = None) -> CheckReport:
    """R0 check of one tensor: the stochastic check on a one-point space."""
    return check_stochastic_r0(SampleSpace.singleton(A, np.zeros(A.dim)), options)


def compare_with_claim(
    report: CheckReport, claimed_verdict: Optional[Verdict], claim_source: Optional[str] = None
) -> CheckReport:
    """Attach a discrepancy note when a definite verdict contradicts a claimed one."""
    if claimed_verdict is None or report.verdict is Verdict.INCONCLUSIVE:
        return report
    claimed_verdict = Verdict(claimed_verdict)
    if claimed_verdict is report.verdict:
        return report
    source = claim_source or "problem metadata"
    note = f"computed {report.verdict.value}, but {source} claims {claimed_verdict.value}"
    if report.witness is not None:
        note += f"; witness merit {report.certificate_residual:.3e}"
    logger.warning(f"Discrepancy: {note}")
    return report.model_copy(update={"discrepancy": note})


# ---------- Degenerate directions ----------

def _nonzero_nonnegative(x: Sequence[float], dim: int) -> np.ndarray:
    x = np.array(x, dtype=float)
    if x.shape != (dim,):
        raise InputError(f"dimension mismatch: x has shape {x.shape}, expected ({dim},)")
    if np.any(x < 0) or not np.any(x > 0):
        raise InputError("x must be nonnegative and nonzero")
    return x


def check_theorem41_conditions(
    space: SampleSpace, x: Sequence[float], tol: Optional[float] = None
) -> Theorem41Conditions:
    """cond_a: some (A_k x^{N-1})_i, i ∈ 𝕁(x), is nonzero; cond_b: some (A_k x^{N-1})_i, i ∈ 𝕀(x), is negative."""
    tol = settings.checker.condition_tolerance if tol is None else tol
    x = _nonzero_nonnegative(x, space.dim)
    sets = support_sets(x)
    values = space.stack.contract(x)
    on_support = values[:, list(sets.nonzero_indices)]
    off_support = values[:, list(sets.zero_indices)]
    return Theorem41Conditions(
        cond_a=bool(np.any(np.abs(on_support) > tol)),
        cond_b=bool(np.any(off_support < -tol)),
    )


def xi_violation(A: Tensor, x: Sequence[float], support_tol: Optional[float] = None) -> float:
    """Largest deviation of x from Ξ(A): |(Ax^{N-1})_i| on 𝕁(x), negative part on 𝕀(x)."""
    sets = support_sets(x, support_tol)
    values = contract_to_vector(A, x)
    on_support = np.abs(values[list(sets.nonzero_indices)])
    off_support = np.maximum(-values[list(sets.zero_indices)], 0.0)
    return float(max(on_support.max(initial=0.0), off_support.max(initial=0.0)))


def find_xi_points(A: Tensor, options: Optional[CheckOptions] = None) -> List[XiPoint]:
    """Grid points of the simplex lying in Ξ(A), plus polished near-misses.

    The scan is not exhaustive: an empty result means nothing was found at
    this resolution, not that Ξ(A) is empty.
    """
    options = options or CheckOptions()
    merit_space = SampleSpace.singleton(A, np.zeros(A.dim))
    grid = _simplex_seeds(A.dim, options, with_random=False)

    def violation(x: np.ndarray) -> float:
        return xi_violation(A, x, options.support_tolerance)

    grid_violations = [violation(x) for x in grid]
    found = [x for x, v in zip(grid, grid_violations) if v <= options.xi_tolerance]
    points = [XiPoint(x=[float(c) for c in x], max_violation=v)
              for x, v in zip(grid, grid_violations) if v <= options.xi_tolerance]

    misses = [s for s, v in enumerate(grid_violations) if v > options.xi_tolerance]
    merits = [objective_value(merit_space, grid[s], EXACT_MIN) for s in misses]
    chosen = [misses[int(i)] for i in np.argsort(merits, kind="stable")[: options.polish_count]]
    for x in ordered_map(lambda s: _polish(merit_space, grid[s], options), chosen, desc="xi polish"):
        v = violation(x)
        if v > options.xi_tolerance:
            continue
        if any(np.max(np.abs(x - y)) <= XI_DEDUP_DISTANCE for y in found):
            continue
        found.append(x)
        points.append(XiPoint(x=[float(c) for c in x], max_violation=v))

    logger.info(f"Found {len(points)} point(s) of the degenerate set")
    return points


# ---------- Construction checks ----------

def check_prop42_conditions(
    base: Tensor,
    perturbation_space: SampleSpace,
    xi_points: Sequence[Union[XiPoint, Sequence[float]]],
    b_grid: Sequence[float],
    options: Optional[CheckOptions] = None,
) -> Prop42Report:
    """Per Ξ(base) point: cond1 (E{((A₀x^{N-1})_i)²} > 0 on 𝕁(x)) and
    cond2 (for some i ∈ 𝕀(x), P{(A₀x^{N-1})_i < -b} > 0 for every b in b_grid).
    """
    options = options or CheckOptions()
    if base.order != perturbation_space.order or base.dim != perturbation_space.dim:
        raise InputError("base tensor and perturbation space differ in shape")
    mean_norm = frobenius_norm(expectation_tensor(perturbation_space))
    if mean_norm > options.condition_tolerance:
        raise InputError(f"perturbation space must have zero mean tensor, got ‖E A₀‖_F = {mean_norm:.3e}")
    b_values = [float(b) for b in b_grid]
    if not b_values or any(b <= 0 for b in b_values):
        raise InputError("b_grid must be a nonempty list of positive values")

    weights = perturbation_space.weights
    records = []
    for point in xi_points:
        x = np.asarray(point.x if isinstance(point, XiPoint) else point, dtype=float)
        sets = support_sets(x, options.support_tolerance)
        values = perturbation_space.stack.contract(x)
        cond1 = any(weights @ values[:, i] ** 2 > options.condition_tolerance for i in sets.nonzero_indices)
        cond2 = any(
            all(weights @ (values[:, i] < -b).astype(float) > 0 for b in b_values) for i in sets.zero_indices
        )
        records.append(Prop42PointRecord(x=[float(c) for c in x], cond1=bool(cond1), cond2=bool(cond2)))

    analytic_note = None
    spec = perturbation_space.provenance.spec
    if spec is not None and not all(d.bounded for d in spec.omega_dists):
        analytic_note = (
            "generator has normal coordinates with unbounded support; "
            "condition (2) then holds for every b > 0 wherever it holds for the grid"
        )
    return Prop42Report(
        points=records,
        all_points_covered=all(r.cond1 or r.cond2 for r in records),
        b_max=max(b_values),
        note=f"condition (2) is empirical, checked up to b_max = {max(b_values):g}",
        analytic_note=analytic_note,
    )


def check_prop41(space: SampleSpace, options: Optional[CheckOptions] = None) -> Prop41Report:
    """R0 status of the mean tensor next to the stochastic R0 verdict of the space."""
    mean_report = check_r0(expectation_tensor(space), options)
    stochastic = check_stochastic_r0(space, options)
    mean_is_r0 = mean_report.verdict is Verdict.IS_R0
    implication = (stochastic.verdict is Verdict.IS_R0) if mean_is_r0 else None
    if implication is False:
        logger.warning("Mean tensor is R0 but the stochastic check did not confirm it")
    return Prop41Report(
        mean_is_r0=mean_is_r0,
        mean_report=mean_report,
        stochastic_r0=stochastic,
        implication_holds=implication,
    )


def _perturbation(A: Tensor, radius: float, seed: int, draw: int) -> Tensor:
    rng = keyed_generator(seed, Stream.PERTURBATION, draw)
    dense = rng.standard_normal((A.dim,) * A.order)
    norm = np.linalg.norm(dense)
    scale = radius * rng.uniform() / norm if norm > 0 else 0.0
    return Tensor.from_dense(scale * dense)


def perturbation_stability_test(
    A: Tensor,
    radius: float,
    draws: int,
    seed: Optional[int] = None,
    options: Optional[CheckOptions] = None,
) -> StabilityReport:
    """Fraction of random perturbations with ‖P‖_F <= radius that keep A + P R0."""
    options = options or CheckOptions()
    seed = settings.runtime.seed if seed is None else seed
    if radius < 0 or draws < 1:
        raise InputError("radius must be >= 0 and draws >= 1")
    if A.dim ** A.order > DENSE_LIMIT:
        raise InputError(f"dense perturbations refused: {A.dim}^{A.order} entries exceed {DENSE_LIMIT}")
    base = check_r0(A, options)
    if base.verdict is not Verdict.IS_R0:
        raise InputError(f"stability test needs an R0 tensor, check returned {base.verdict.value}")

    verdicts = ordered_map(
        lambda k: check_r0(A + _perturbation(A, radius, seed, k), options).verdict,
        range(draws),
        desc="stability",
    )
    survived = sum(v is Verdict.IS_R0 for v in verdicts)
    logger.info(f"Stability at radius {radius:g}: {survived}/{draws} perturbed tensors stay R0")
    return StabilityReport(radius=radius, draws=draws, survived=survived, fraction=survived / draws, verdicts=verdicts)


# ---------- Matrices ----------

def check_r0_matrix(M: Union[np.ndarray, Tensor]) -> MatrixCheckReport:
    """Exact R0 decision for a matrix by support enumeration.

    For each support α one LP maximizes t subject to Σx = 1, x_α >= t,
    M_αα x_α = 0, M_ᾱα x_α >= 0, x_ᾱ = 0. M is not R0 iff some LP reaches
    t > 0.
    """
    M = M.matrix_view() if isinstance(M, Tensor) else np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InputError(f"expected a square matrix, got shape {M.shape}")
    n = M.shape[0]
    if n > MATRIX_MAX_DIM:
        raise InputError(f"support enumeration limited to dimension {MATRIX_MAX_DIM}, got {n}")

    for size in range(1, n + 1):
        for alpha in itertools.combinations(range(n), size):
            alpha = list(alpha)
            rest = [i for i in range(n) if i not in alpha]
            m = len(alpha)
            cost = np.zeros(m + 1)
            cost[-1] = -1.0
            # t - x_j <= 0 and -M_ᾱα x_α <= 0
            a_ub = np.hstack([-np.eye(m), np.ones((m, 1))])
            if rest:
                a_ub = np.vstack([a_ub, np.hstack([-M[np.ix_(rest, alpha)], np.zeros((len(rest), 1))])])
            a_eq = np.vstack([
                np.append(np.ones(m), 0.0),
                np.hstack([M[np.ix_(alpha, alpha)], np.zeros((m, 1))]),
            ])
            b_eq = np.zeros(m + 1)
            b_eq[0] = 1.0
            result = linprog(
                cost,
                A_ub=a_ub,
                b_ub=np.zeros(len(a_ub)),
                A_eq=a_eq,
                b_eq=b_eq,
                bounds=[(0, None)] * m + [(None, 1.0)],
                method="highs",
            )
            if result.status == 0 and -result.fun > MATRIX_SUPPORT_MARGIN:
                witness = np.zeros(n)
                witness[alpha] = result.x[:m]
                return MatrixCheckReport(verdict=Verdict.NOT_R0, witness=[float(v) for v in witness], support=alpha)
    return MatrixCheckReport(verdict=Verdict.IS_R0)
