import numpy as np
import pytest
from numpy.testing import assert_allclose

from core.errors import NonsmoothObjectiveError, NumericalFailure
from core.ncp_residual import FB_LOWER_RATIO, FB_UPPER_RATIO, NcpKind, ResidualConfig, residual
from core.stochastic_model import SampleSpace
from core.tensor_core import Tensor
from optimization.erm_objective import (
    erm_gradient,
    erm_objective,
    ev_objective,
    ev_space,
    objective_value,
    value_and_gradient,
)

FB = ResidualConfig(ncp_kind=NcpKind.FB)
SMOOTH_MIN = ResidualConfig(smoothing_mu=1e-2)


def random_space(rng, size=4, dim=3):
    pairs = []
    for _ in range(size):
        entries = [((i, j, k), float(rng.normal()))
                   for i in range(dim) for j in range(dim) for k in range(dim) if rng.uniform() < 0.3]
        pairs.append((Tensor.from_entries(3, dim, entries), rng.normal(size=dim)))
    return SampleSpace.from_pairs(pairs)


def test_objective_is_weighted_sum_of_squared_residuals(rng):
    space = random_space(rng)
    x = rng.uniform(0, 1, size=3)
    brute = sum(
        r.weight * float(np.sum(residual(r.tensor, r.q, x, ResidualConfig()) ** 2)) for r in space.realizations
    )
    result = erm_objective(space, x)
    assert result.value == pytest.approx(brute, rel=1e-12)
    assert len(result.per_realization) == space.size
    assert all(w == pytest.approx(0.25) for w, _ in result.per_realization)


def test_objective_vanishes_at_a_solution(identity_space):
    assert erm_objective(identity_space, [1.0, 2.0]).value == 0.0
    assert erm_objective(identity_space, [1.0, 2.0], FB).value == pytest.approx(0.0, abs=1e-30)
    assert erm_objective(identity_space, [0.0, 0.0]).value == pytest.approx(17.0)


def test_objective_does_not_depend_on_realization_order(rng):
    space = random_space(rng, size=6)
    reversed_space = SampleSpace(tuple(reversed(space.realizations)))
    x = rng.uniform(0, 2, size=3)
    assert objective_value(space, x, FB) == objective_value(reversed_space, x, FB)


@pytest.mark.parametrize("config", [FB, ResidualConfig(smoothing_mu=1e-3)], ids=["fb", "smoothed-min"])
@pytest.mark.parametrize("seed", range(50))
def test_gradient_matches_finite_differences(seed, config):
    rng = np.random.default_rng(seed)
    space = random_space(rng)
    x = rng.uniform(0.2, 1.0, size=3)
    h = 1e-7
    numeric = np.array([
        (objective_value(space, x + h * e, config) - objective_value(space, x - h * e, config)) / (2 * h)
        for e in np.eye(3)
    ])
    value, grad = value_and_gradient(space, x, config)
    assert value == pytest.approx(objective_value(space, x, config))
    assert_allclose(grad, numeric, rtol=1e-5, atol=1e-6)
    assert_allclose(erm_gradient(space, x, config), grad)


def test_fb_gradient_is_finite_at_origin(identity_space):
    grad = erm_gradient(identity_space.with_zero_q(), np.zeros(2), FB)
    assert np.all(np.isfinite(grad))


def test_exact_min_gradient_is_refused(identity_space):
    with pytest.raises(NonsmoothObjectiveError):
        erm_gradient(identity_space, [1.0, 1.0], ResidualConfig())


def test_overflow_raises_numerical_failure(identity_space):
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(NumericalFailure):
            erm_objective(identity_space, [1e200, 1e200])
        assert objective_value(identity_space, [1e200, 1e200], ResidualConfig()) == float("inf")


def test_ev_objective_uses_mean_data():
    A = Tensor.identity(3, 2)
    space = SampleSpace.from_pairs([(A, [-2.0, -4.0]), (A.scaled(3.0), [0.0, -4.0])])
    mean = ev_space(space)
    assert mean.size == 1
    assert mean.realizations[0].tensor == A.scaled(2.0)
    assert_allclose(mean.realizations[0].q, [-1.0, -4.0])
    # 2x² - 1 = 0 and 2x² - 4 = 0
    x = [np.sqrt(0.5), np.sqrt(2.0)]
    assert ev_objective(space, x).value == pytest.approx(0.0, abs=1e-28)
    assert erm_objective(space, x).value > 1e-3


def test_origin_value_is_the_negative_part_of_q():
    A = Tensor.identity(3, 2)
    space = SampleSpace.from_pairs([(A, [1.0, -2.0]), (A.scaled(-1.0), [-3.0, 4.0])])
    assert erm_objective(space, [0.0, 0.0]).value == 6.5


def test_gradient_vanishes_at_an_interior_solution(identity_space):
    assert np.linalg.norm(erm_gradient(identity_space, [1.0, 2.0], FB)) <= 1e-8


@pytest.mark.parametrize("seed", range(20))
def test_erm_equals_ev_on_singletons(seed):
    rng = np.random.default_rng(seed)
    space = random_space(rng, size=1)
    x = rng.uniform(0, 2, size=3)
    for config in (ResidualConfig(), FB, SMOOTH_MIN):
        assert erm_objective(space, x, config).value == ev_objective(space, x, config).value


def test_ev_objective_vanishes_for_mean_zero_perturbation():
    identity = Tensor.identity(3, 2)
    shift = Tensor.from_entries(3, 2, [((0, 1, 1), 0.5), ((1, 0, 0), -0.25)])
    space = SampleSpace.from_pairs([(identity + shift, [-1.0, -4.0]), (identity - shift, [-1.0, -4.0])])
    assert ev_objective(space, [1.0, 2.0]).value == pytest.approx(0.0, abs=1e-28)
    assert ev_objective(SampleSpace.singleton(identity, [0.0, 3.0]), [0.0, 0.0]).value == 0.0


@pytest.mark.parametrize("lam", [0.5, 2.0, 10.0])
def test_zero_set_is_a_cone(example4_1_space, lam):
    witness = np.array([0.0, 0.0, 1.0])
    assert erm_objective(example4_1_space, witness).value == 0.0
    assert erm_objective(example4_1_space, lam * witness).value == 0.0

    zero_space = SampleSpace.singleton(Tensor.zeros(3, 2), [0.0, 0.0])
    assert erm_objective(zero_space, lam * np.array([1.0, 0.0])).value == 0.0


def test_fb_residuals_stay_within_min_bounds(rng):
    space = random_space(rng, size=8)
    for _ in range(50):
        x = rng.uniform(0, 2, size=3)
        for r in space.realizations:
            exact = np.abs(residual(r.tensor, r.q, x, ResidualConfig()))
            fb = np.abs(residual(r.tensor, r.q, x, FB))
            assert np.all(fb >= FB_LOWER_RATIO * exact - 1e-12)
            assert np.all(fb <= FB_UPPER_RATIO * exact + 1e-12)
