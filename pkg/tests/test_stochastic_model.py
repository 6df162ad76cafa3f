import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from cli.builtin_examples import EXAMPLE_4_1_ABS, EXAMPLE_4_1_LINEAR
from core.errors import InputError
from core.stochastic_model import (
    CoefficientTerm,
    GeneratorSpec,
    OmegaDistribution,
    ProvenanceKind,
    Realization,
    SampleSpace,
    Transform,
    expectation_q,
    expectation_tensor,
    expected_q_moments,
    materialize,
)
from core.tensor_core import Tensor, frobenius_norm


def example4_1_spec():
    return GeneratorSpec(
        base_tensor=Tensor.zeros(3, 3),
        q_base=[0.0, 0.0, 0.0],
        terms=(
            CoefficientTerm(0, Tensor.from_entries(3, 3, EXAMPLE_4_1_LINEAR), Transform.LINEAR),
            CoefficientTerm(0, Tensor.from_entries(3, 3, EXAMPLE_4_1_ABS), Transform.ABS),
        ),
        q_coefficients=([0.0, 0.0, 0.0],),
        omega_dists=(OmegaDistribution.uniform(-0.5, 0.5),),
    )


def q_only_spec():
    return GeneratorSpec(
        base_tensor=Tensor.identity(3, 2),
        q_base=[1.0, -1.0],
        terms=(),
        q_coefficients=([1.0, 2.0],),
        omega_dists=(OmegaDistribution.normal(0.0, 1.0),),
    )


def test_weights_must_sum_to_one():
    A = Tensor.identity(3, 2)
    with pytest.raises(InputError):
        SampleSpace((Realization(0.5, A, [0, 0]), Realization(0.4, A, [0, 0])))
    with pytest.raises(InputError):
        Realization(0.0, A, [0, 0])
    with pytest.raises(InputError):
        SampleSpace(())


def test_realizations_must_share_shape():
    with pytest.raises(InputError):
        SampleSpace.from_pairs([(Tensor.identity(3, 2), [0, 0]), (Tensor.identity(3, 3), [0, 0, 0])])


def test_q_is_frozen():
    r = Realization(1.0, Tensor.identity(2, 2), [1.0, 2.0])
    with pytest.raises(ValueError):
        r.q[0] = 5.0


@pytest.mark.parametrize("factory", [
    lambda: OmegaDistribution.uniform(1.0, 1.0),
    lambda: OmegaDistribution.normal(0.0, 0.0),
])
def test_invalid_distributions(factory):
    with pytest.raises(InputError):
        factory()


def test_expected_transforms():
    assert OmegaDistribution.uniform(-0.5, 0.5).expected(Transform.LINEAR) == pytest.approx(0.0)
    assert OmegaDistribution.uniform(-0.5, 0.5).expected(Transform.ABS) == pytest.approx(0.25)
    assert OmegaDistribution.uniform(1.0, 3.0).expected(Transform.ABS) == pytest.approx(2.0)
    assert OmegaDistribution.normal().expected(Transform.ABS) == pytest.approx(math.sqrt(2.0 / math.pi))


def test_generator_validation():
    with pytest.raises(InputError):
        GeneratorSpec(Tensor.zeros(3, 2), [0, 0], (), ([0, 0], [0, 0]), (OmegaDistribution.normal(),))
    with pytest.raises(InputError):
        GeneratorSpec(
            Tensor.zeros(3, 2), [0, 0], (CoefficientTerm(1, Tensor.zeros(3, 2)),), ([0, 0],),
            (OmegaDistribution.normal(),),
        )
    with pytest.raises(InputError):
        GeneratorSpec(
            Tensor.zeros(3, 2), [0, 0], (CoefficientTerm(0, Tensor.zeros(3, 3)),), ([0, 0],),
            (OmegaDistribution.normal(),),
        )


def test_materialize_is_deterministic():
    spec = q_only_spec()
    first, second = materialize(spec, 20, seed=7), materialize(spec, 20, seed=7)
    assert_array_equal(first.q_matrix, second.q_matrix)
    assert not np.array_equal(first.q_matrix, materialize(spec, 20, seed=8).q_matrix)
    assert first.provenance.kind is ProvenanceKind.GENERATED
    assert first.size == 20
    assert_allclose(first.weights, np.full(20, 0.05))


def test_materialize_prefix_is_stable():
    spec = q_only_spec()
    assert_array_equal(materialize(spec, 5, seed=3).q_matrix, materialize(spec, 10, seed=3).q_matrix[:5])


def test_pinned_omega_values():
    space = materialize(example4_1_spec(), 2, seed=0, omega_values=[[-0.25], [0.25]])
    linear = Tensor.from_entries(3, 3, EXAMPLE_4_1_LINEAR)
    absolute = Tensor.from_entries(3, 3, EXAMPLE_4_1_ABS)
    expected = Tensor.linear_combination([(-0.25, linear), (0.25, absolute)])
    assert space.realizations[0].tensor == expected
    with pytest.raises(InputError):
        materialize(example4_1_spec(), 3, seed=0, omega_values=[[-0.25], [0.25]])


def test_example4_1_mean_matches_analytic_mean(example4_1_space):
    mean = expectation_tensor(example4_1_space)
    expected = Tensor.from_entries(3, 3, [
        ((0, 0, 1), -0.25), ((0, 1, 0), -0.25), ((0, 2, 2), 0.25), ((1, 1, 1), 0.25), ((1, 2, 2), 0.25),
    ])
    assert frobenius_norm(mean - expected) == pytest.approx(0.0, abs=1e-15)
    analytic, q = example4_1_spec().analytic_mean()
    assert analytic == expected
    assert_array_equal(q, np.zeros(3))


def test_expectation_q_and_moments():
    A = Tensor.zeros(3, 2)
    space = SampleSpace.from_pairs([(A, [1.0, 2.0]), (A, [-1.0, 0.0])])
    assert_allclose(expectation_q(space), [0.0, 1.0])
    total, per_component, negative_part = expected_q_moments(space)
    assert total == pytest.approx(3.0)
    assert_allclose(per_component, [1.0, 2.0])
    assert_allclose(negative_part, [0.5, 0.0])


def test_mixture_and_independent_sum():
    A, B = Tensor.identity(3, 2), Tensor.identity(3, 2).scaled(2.0)
    first = SampleSpace.from_pairs([(A, [1.0, 0.0]), (B, [0.0, 1.0])])
    second = SampleSpace.from_pairs([(A, [0.0, 0.0]), (A.scaled(-1.0), [2.0, 2.0])])

    mixed = SampleSpace.mixture([first, second], [0.25, 0.75])
    assert_allclose(mixed.weights, [0.125, 0.125, 0.375, 0.375])

    summed = SampleSpace.independent_sum(first, second)
    assert summed.size == 4
    assert_allclose(summed.weights, np.full(4, 0.25))
    assert summed.realizations[0].tensor == A + A
    assert_allclose(summed.realizations[3].q, [2.0, 3.0])
    with pytest.raises(InputError):
        SampleSpace.mixture([first, second], [0.5, 0.6])


def test_centered_scaled_and_zero_q(example4_1_space):
    centered = example4_1_space.centered()
    assert frobenius_norm(expectation_tensor(centered)) <= 1e-15
    assert_allclose(expectation_q(centered), np.zeros(3))
    assert centered.provenance is example4_1_space.provenance

    doubled = example4_1_space.scaled(2.0)
    assert doubled.realizations[1].tensor == example4_1_space.realizations[1].tensor.scaled(2.0)
    with pytest.raises(InputError):
        example4_1_space.scaled(0.0)

    space = SampleSpace.singleton(Tensor.identity(3, 2), [1.0, -1.0])
    assert_array_equal(space.with_zero_q().q_matrix, np.zeros((1, 2)))


def test_bounded_support():
    assert OmegaDistribution.uniform(-1.0, 1.0).bounded
    assert not OmegaDistribution.normal().bounded


def random_space(rng, size):
    pairs = []
    for _ in range(size):
        entries = {tuple(rng.integers(0, 3, size=3)): rng.normal() for _ in range(6)}
        pairs.append((Tensor.from_entries(3, 3, entries.items()), rng.normal(size=3)))
    weights = rng.uniform(0.1, 1.0, size=size)
    weights /= math.fsum(weights)
    weights[-1] = 1.0 - math.fsum(weights[:-1])
    return SampleSpace(tuple(Realization(w, A, q) for w, (A, q) in zip(weights, pairs)))


@pytest.mark.parametrize("seed", range(10))
def test_expectation_is_linear_over_mixtures(seed):
    rng = np.random.default_rng(seed)
    spaces = [random_space(rng, size) for size in (1, 3, 4)]
    alphas = rng.uniform(0.1, 1.0, size=3)
    alphas /= alphas.sum()
    mixed = SampleSpace.mixture(spaces, list(alphas))

    expected_tensor = Tensor.linear_combination([(a, expectation_tensor(s)) for a, s in zip(alphas, spaces)])
    assert frobenius_norm(expectation_tensor(mixed) - expected_tensor) <= 1e-12
    expected_q = sum(a * expectation_q(s) for a, s in zip(alphas, spaces))
    assert_allclose(expectation_q(mixed), expected_q, atol=1e-12)


@pytest.mark.parametrize("distribution", [OmegaDistribution.uniform(-0.5, 0.5), OmegaDistribution.normal(0.0, 1.0)])
def test_empirical_mean_approaches_analytic_mean(distribution):
    linear = Tensor.from_entries(3, 3, EXAMPLE_4_1_LINEAR)
    absolute = Tensor.from_entries(3, 3, EXAMPLE_4_1_ABS)
    spec = GeneratorSpec(
        base_tensor=Tensor.identity(3, 3),
        q_base=[1.0, 0.0, -1.0],
        terms=(CoefficientTerm(0, linear, Transform.LINEAR), CoefficientTerm(0, absolute, Transform.ABS)),
        q_coefficients=([1.0, -2.0, 0.5],),
        omega_dists=(distribution,),
    )
    space = materialize(spec, 10_000, seed=0)
    analytic_tensor, analytic_q = spec.analytic_mean()
    scale = frobenius_norm(linear) + frobenius_norm(absolute)
    assert frobenius_norm(expectation_tensor(space) - analytic_tensor) <= 0.05 * scale
    assert np.linalg.norm(expectation_q(space) - analytic_q) <= 0.05 * np.linalg.norm([1.0, -2.0, 0.5])


def test_negative_part_moment_of_two_samples():
    A = Tensor.zeros(3, 2)
    space = SampleSpace((Realization(0.5, A, [1.0, -2.0]), Realization(0.5, A, [-3.0, 4.0])))
    _, _, negative_part = expected_q_moments(space)
    assert math.fsum(negative_part) == pytest.approx(6.5)

    deterministic = SampleSpace.singleton(A, [1.0, -2.0])
    total, _, negative_part = expected_q_moments(deterministic)
    assert total == pytest.approx(5.0)
    assert_allclose(negative_part, [0.0, 4.0])
