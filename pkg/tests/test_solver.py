import math
import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from cli.builtin_examples import EXAMPLE_4_2_ENTRIES
from core.errors import InputError
from core.ncp_residual import FB_UPPER_RATIO, NcpKind, ResidualConfig
from core.stochastic_model import SampleSpace, expected_q_moments
from core.tensor_core import Tensor
from optimization.erm_objective import objective_value
from optimization.projected_gradient import descend, project_nonnegative
from optimization.simplex import project_to_simplex, simplex_grid
from optimization.solver import (
    BoundednessRegime,
    DirectionGridSpec,
    RayVerdict,
    SolverOptions,
    boundedness_probe,
    classify_ray,
    coercivity_scan,
    default_lambda_grid,
    ray_probe,
    solve_erm,
    solve_ev,
)

FB = ResidualConfig(ncp_kind=NcpKind.FB)
EXACT_MIN = ResidualConfig()


# ---------- Simplex helpers and descent ----------

@pytest.mark.parametrize("y, expected", [
    ([0.5, 0.5], [0.5, 0.5]),
    ([2.0, 0.0], [1.0, 0.0]),
    ([1.0, 1.0, 1.0], [1 / 3, 1 / 3, 1 / 3]),
    ([-1.0, 0.2, 0.4], [0.0, 0.4, 0.6]),
])
def test_project_to_simplex(y, expected):
    assert_allclose(project_to_simplex(np.array(y)), expected, atol=1e-15)


def test_projection_lands_on_simplex(rng):
    for _ in range(50):
        x = project_to_simplex(rng.normal(scale=3.0, size=6))
        assert np.all(x >= 0)
        assert x.sum() == pytest.approx(1.0)


def test_simplex_grid_order():
    grid = simplex_grid(3, 2)
    assert [tuple(2 * p) for p in grid] == [(2, 0, 0), (1, 1, 0), (1, 0, 1), (0, 2, 0), (0, 1, 1), (0, 0, 2)]
    assert len(simplex_grid(5, 8)) == math.comb(12, 4)
    with pytest.raises(ValueError):
        simplex_grid(3, 0)


def test_descend_on_nonnegative_quadratic():
    c = np.array([1.0, -1.0, 2.0])

    def value(x):
        return 0.5 * float((x - c) @ (x - c))

    seen = []
    run = descend(lambda x: (value(x), x - c), value, np.ones(3), project_nonnegative,
                  max_iterations=100, gradient_tolerance=1e-12, objective_tolerance=0.0,
                  monitor=lambda i, x, f: seen.append((i, f)))
    assert run.converged
    assert_allclose(run.x, [1.0, 0.0, 2.0], atol=1e-10)
    values = [f for _, f in run.trace]
    assert all(b <= a for a, b in zip(values, values[1:]))
    assert seen == run.trace


# ---------- Solves ----------

def test_solver_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(mu_schedule=[1e-2, 1e-1])
    with pytest.raises(ValueError):
        SolverOptions(mu_schedule=[])
    with pytest.raises(ValueError):
        SolverOptions(exact_min_mu_tail=[1e-12, 1e-8])
    assert SolverOptions(exact_min_mu_tail=[]).exact_min_mu_tail == []
    assert SolverOptions(armijo_backtrack=0.25).armijo_params == (1.0, 0.25, 1e-4)
    with pytest.raises(ValueError):
        SolverOptions(unknown=1)


@pytest.mark.parametrize("config", [FB, EXACT_MIN])
def test_solve_recovers_known_solution(identity_space, config):
    result = solve_erm(identity_space, config)
    assert_allclose(result.x_star, [1.0, 2.0], atol=1e-4)
    assert result.objective <= 1e-8
    assert result.objective == objective_value(identity_space, result.x_star, config)
    assert len(result.starts) == SolverOptions().multistart_count


@pytest.mark.parametrize("config", [FB, EXACT_MIN, ResidualConfig(smoothing_mu=1e-3)])
def test_trace_never_rises(identity_space, config):
    result = solve_erm(identity_space, config)
    objectives = [p.objective for p in result.trace]
    assert all(b <= a for a, b in zip(objectives, objectives[1:]))
    assert objectives[-1] == result.objective
    iterations = [p.iteration for p in result.trace]
    assert iterations == sorted(iterations)


def test_exact_min_continues_below_the_schedule(identity_space):
    options = SolverOptions()
    result = solve_erm(identity_space, EXACT_MIN, options)
    assert sorted({p.mu for p in result.trace}, reverse=True) == options.mu_schedule + options.exact_min_mu_tail


def test_smoothing_target_truncates_schedule(identity_space):
    result = solve_erm(identity_space, ResidualConfig(smoothing_mu=5e-3))
    assert sorted({p.mu for p in result.trace}, reverse=True) == [1e-1, 1e-2, 5e-3]


def test_solve_is_deterministic(identity_space):
    options = SolverOptions(multistart_count=3, seed=11)
    first = solve_erm(identity_space, FB, options)
    second = solve_erm(identity_space, FB, options)
    assert first.model_dump() == second.model_dump()


@pytest.mark.parametrize("config", [FB, EXACT_MIN])
def test_every_start_converges(identity_space, config):
    result = solve_erm(identity_space, config)
    assert len(result.starts) == 8
    assert all(start.converged for start in result.starts)
    assert [start.start_index for start in result.starts] == list(range(8))
    for start in result.starts:
        assert_allclose(start.x, [1.0, 2.0], atol=1e-4)
        assert start.objective <= 1e-10


def perturbed_identity_space():
    """Identity ± 0.5·e0∘e1∘e1 with q ≡ 0: both realizations vanish only at the origin."""
    identity = Tensor.identity(3, 2)
    shift = Tensor.from_entries(3, 2, [((0, 1, 1), 0.5)])
    return SampleSpace.from_pairs([(identity + shift, [0.0, 0.0]), (identity - shift, [0.0, 0.0])])


@pytest.mark.parametrize("config", [FB, EXACT_MIN])
def test_solve_with_zero_q_reaches_the_origin(config):
    result = solve_erm(perturbed_identity_space(), config)
    assert np.linalg.norm(result.x_star) <= 1e-4
    assert result.objective <= 1e-10


@pytest.mark.parametrize("config", [FB, EXACT_MIN])
def test_nonnegative_q_gives_the_origin(config):
    space = SampleSpace.singleton(Tensor.identity(3, 3), [0.0, 1.0, 2.0])
    result = solve_erm(space, config)
    assert_allclose(result.x_star, 0.0, atol=1e-4)
    assert result.objective <= 1e-10


def test_solve_ev_solves_the_mean_system():
    A = Tensor.identity(3, 2)
    space = SampleSpace.from_pairs([(A, [-2.0, -4.0]), (A.scaled(3.0), [0.0, -4.0])])
    result = solve_ev(space, FB)
    assert_allclose(result.x_star, [math.sqrt(0.5), math.sqrt(2.0)], atol=1e-4)


# ---------- Ray probes ----------

def test_default_lambda_grid():
    grid = default_lambda_grid()
    assert grid[0] == 1.0
    assert grid[-1] == pytest.approx(1e4)
    assert len(grid) == 9


def test_classify_ray():
    assert classify_ray([1.0, 2.0], 1.0, clamped=True) is RayVerdict.GROWS
    assert classify_ray([3.0] * 9, 3.0) is RayVerdict.BOUNDED
    assert classify_ray([1.0, 5.0, 1.0, 5.0, 1.0, 5.0], 1.0) is RayVerdict.INCONCLUSIVE
    assert classify_ray([10.0 ** k for k in range(9)], 1.0) is RayVerdict.GROWS


def test_ray_grows_for_identity():
    space = SampleSpace.singleton(Tensor.identity(3, 2), [0.0, 0.0])
    report = ray_probe(space, [1.0, 1.0])
    assert report.verdict is RayVerdict.GROWS
    assert_allclose(report.direction, [1 / math.sqrt(2), 1 / math.sqrt(2)])


def test_ray_rejects_bad_directions():
    space = SampleSpace.singleton(Tensor.identity(3, 2), [0.0, 0.0])
    with pytest.raises(InputError):
        ray_probe(space, [0.0, 0.0])
    with pytest.raises(InputError):
        ray_probe(space, [1.0, -1.0])
    with pytest.raises(InputError):
        ray_probe(space, [1.0, 0.0], lambda_grid=[10.0, 1.0])


def test_ray_overflow_is_clamped():
    space = SampleSpace.singleton(Tensor.identity(3, 2), [0.0, 0.0])
    report = ray_probe(space, [1.0, 0.0], lambda_grid=[1.0, 1e100, 1e200], config=FB)
    assert report.clamped
    assert report.verdict is RayVerdict.GROWS


def q_linear_space():
    """Degenerate tensor held fixed, q = ω·(1, ..., 1) with ω = ±1."""
    A = Tensor.from_entries(3, 5, EXAMPLE_4_2_ENTRIES)
    return SampleSpace.from_pairs([(A, np.ones(5)), (A, -np.ones(5))])


def test_ray_along_degenerate_direction_stays_below_q_moment():
    space = q_linear_space()
    second_moment = expected_q_moments(space)[0]
    report = ray_probe(space, [1.0, 0.0, 0.0, 0.0, 0.0])
    assert report.verdict is RayVerdict.BOUNDED
    assert_allclose(report.values, 3.0)
    assert max(report.values) <= second_moment

    fb_report = ray_probe(space, [1.0, 0.0, 0.0, 0.0, 0.0], config=FB)
    assert max(fb_report.values) <= FB_UPPER_RATIO ** 2 * second_moment


def test_coercivity_scan(example4_2_tensor):
    identity = SampleSpace.singleton(Tensor.identity(3, 2), [0.0, 0.0])
    grid = DirectionGridSpec(random_directions=10)
    report = coercivity_scan(identity, grid=grid)
    assert report.verdict is RayVerdict.GROWS
    assert report.witness is None
    assert len(report.probes) == 9 + 10

    degenerate = SampleSpace.singleton(example4_2_tensor, np.zeros(5))
    report = coercivity_scan(degenerate, grid=DirectionGridSpec(resolution=2, random_directions=0))
    assert report.verdict is RayVerdict.BOUNDED
    assert report.witness == [1.0, 0.0, 0.0, 0.0, 0.0]


def test_boundedness_origin_below_plateau():
    A = Tensor.zeros(3, 2)
    space = SampleSpace.from_pairs([(A, [1.0, 2.0]), (A, [-1.0, 0.0])])
    report = boundedness_probe(space, [1.0, 0.0])
    assert report.origin_value == pytest.approx(0.5)
    assert report.origin_prediction == pytest.approx(0.5)
    assert report.plateau_prediction == pytest.approx(1.0)
    assert report.limit_estimate == pytest.approx(1.0)
    assert report.zero_indices == [1] and report.nonzero_indices == [0]
    assert report.regime is BoundednessRegime.ORIGIN_BELOW_PLATEAU


def test_boundedness_vanishing():
    A = Tensor.from_entries(3, 2, [((1, 0, 0), 1.0)])
    space = SampleSpace.from_pairs([(A, [0.0, -1.0]), (A, [0.0, -0.5])])
    report = boundedness_probe(space, [1.0, 0.0])
    assert report.origin_value == pytest.approx(0.625)
    assert_allclose(report.values, 0.0, atol=1e-15)
    assert report.regime is BoundednessRegime.VANISHING


def test_boundedness_grows_for_identity():
    space = SampleSpace.singleton(Tensor.identity(3, 2), [-1.0, -1.0])
    assert boundedness_probe(space, [0.0, 1.0]).regime is BoundednessRegime.GROWS


def test_boundedness_rejects_zero_witness():
    with pytest.raises(InputError):
        boundedness_probe(SampleSpace.singleton(Tensor.zeros(3, 2), [0.0, 0.0]), [0.0, 0.0])
