"""Built-in problems, addressable from the CLI as `builtin:<name>`.

Entry lists are 0-based coordinate lists [[i1, ..., iN], value].
"""

from typing import Callable, Dict, List, Optional, Sequence

from cli.problem_io import (
    GeneratorModel,
    OmegaModel,
    ProblemFile,
    ProblemMetadata,
    SampleModel,
    TermModel,
)
from core.errors import InputError
from core.stochastic_model import OmegaKind, Transform
from structure_check import Verdict

# Third-order, three-dimensional; tensor(ω) = ω·LINEAR + |ω|·ABS, ω ~ U(-0.5, 0.5)
EXAMPLE_4_1_LINEAR = [
    [[0, 0, 0], -2.0],
    [[0, 0, 1], 1.0],
    [[0, 1, 0], 1.0],
    [[0, 1, 1], -2.0],
    [[0, 2, 2], 1.0],
    [[1, 1, 1], 1.0],
    [[1, 1, 2], -2.0],
    [[1, 2, 1], -2.0],
    [[1, 2, 2], 1.0],
]

EXAMPLE_4_1_ABS = [
    [[0, 0, 1], -1.0],
    [[0, 1, 0], -1.0],
    [[0, 2, 2], 1.0],
    [[1, 1, 1], 1.0],
    [[1, 2, 2], 1.0],
]

EXAMPLE_4_1_OMEGA_VALUES = [[-0.25], [0.25]]

# Third-order, five-dimensional degenerate tensor
EXAMPLE_4_2_ENTRIES = [
    [[0, 2, 2], 1.0],
    [[0, 3, 3], -2.0],
    [[0, 4, 4], -3.0],
    [[1, 2, 2], 1.0],
    [[1, 3, 3], -6.0],
    [[1, 4, 4], -3.0],
    [[2, 0, 2], -1.0],
    [[2, 1, 2], -1.0],
    [[3, 0, 3], 2.0],
    [[3, 1, 3], 6.0],
    [[4, 0, 4], 3.0],
    [[4, 1, 4], 3.0],
]

# Mean-zero perturbation A₀(ω) = ω·EXAMPLE_4_2_PERTURBATION, ω ~ N(0, 1)
EXAMPLE_4_2_PERTURBATION = [
    [[0, 2, 2], 0.5],
    [[2, 0, 2], -0.5],
    [[2, 2, 0], -0.5],
]

PERTURBED_DEFAULT_SAMPLES = 10_000

CLAIM_SOURCE = "published construction (claimed stochastic R0)"


def _example4_1(order: int, dim: int, omega_values: Optional[List[List[float]]], samples: Optional[int],
                seed: int) -> ProblemFile:
    if omega_values is None and samples is None:
        omega_values = EXAMPLE_4_1_OMEGA_VALUES
    return ProblemFile(
        order=3,
        dim=3,
        generator=GeneratorModel(
            q_base=[0.0, 0.0, 0.0],
            terms=[
                TermModel(coordinate=0, entries=EXAMPLE_4_1_LINEAR, transform=Transform.LINEAR),
                TermModel(coordinate=0, entries=EXAMPLE_4_1_ABS, transform=Transform.ABS),
            ],
            q_coefficients=[[0.0, 0.0, 0.0]],
            omega=[OmegaModel(kind=OmegaKind.UNIFORM, lo=-0.5, hi=0.5)],
            num_samples=len(omega_values) if omega_values is not None else samples,
            seed=seed,
            omega_values=omega_values,
        ),
        metadata=ProblemMetadata(
            name="example4_1",
            description="ω-dependent third-order tensor on R^3 with a uniform scalar ω and q ≡ 0",
            claimed_verdict=Verdict.IS_R0,
            claim_source=CLAIM_SOURCE,
        ),
    )


def _example4_2(order: int, dim: int, omega_values, samples, seed: int) -> ProblemFile:
    return ProblemFile(
        order=3,
        dim=5,
        samples=[SampleModel(weight=1.0, entries=EXAMPLE_4_2_ENTRIES, q=[0.0] * 5)],
        metadata=ProblemMetadata(
            name="example4_2",
            description="deterministic degenerate third-order tensor on R^5 (not R0)",
        ),
    )


def _example4_2_perturbed(order: int, dim: int, omega_values: Optional[List[List[float]]],
                          samples: Optional[int], seed: int) -> ProblemFile:
    count = len(omega_values) if omega_values is not None else (samples or PERTURBED_DEFAULT_SAMPLES)
    return ProblemFile(
        order=3,
        dim=5,
        generator=GeneratorModel(
            base_entries=EXAMPLE_4_2_ENTRIES,
            q_base=[0.0] * 5,
            terms=[TermModel(coordinate=0, entries=EXAMPLE_4_2_PERTURBATION)],
            q_coefficients=[[0.0] * 5],
            omega=[OmegaModel(kind=OmegaKind.NORMAL, mean=0.0, stddev=1.0)],
            num_samples=count,
            seed=seed,
            omega_values=omega_values,
        ),
        metadata=ProblemMetadata(
            name="example4_2_perturbed",
            description="degenerate tensor plus a mean-zero Gaussian perturbation",
            claimed_verdict=Verdict.IS_R0,
            claim_source=CLAIM_SOURCE,
        ),
    )


def _diagonal_entries(order: int, dim: int) -> List[list]:
    return [[[i] * order, 1.0] for i in range(dim)]


def _identity(order: int, dim: int, omega_values, samples, seed: int) -> ProblemFile:
    return ProblemFile(
        order=order,
        dim=dim,
        samples=[SampleModel(weight=1.0, entries=_diagonal_entries(order, dim), q=[0.0] * dim)],
        metadata=ProblemMetadata(name="identity", description=f"order-{order} identity tensor on R^{dim}"),
    )


def _zero(order: int, dim: int, omega_values, samples, seed: int) -> ProblemFile:
    return ProblemFile(
        order=order,
        dim=dim,
        samples=[SampleModel(weight=1.0, entries=[], q=[0.0] * dim)],
        metadata=ProblemMetadata(name="zero", description=f"order-{order} zero tensor on R^{dim}"),
    )


BUILTINS: Dict[str, Callable[..., ProblemFile]] = {
    "example4_1": _example4_1,
    "example4_2": _example4_2,
    "example4_2_perturbed": _example4_2_perturbed,
    "identity": _identity,
    "zero": _zero,
}


def builtin_example(
    name: str,
    order: int = 3,
    dim: int = 2,
    omega_values: Optional[Sequence[Sequence[float]]] = None,
    samples: Optional[int] = None,
    seed: int = 0,
) -> ProblemFile:
    """Built-in ProblemFile by name.

    `order`/`dim` apply to identity and zero; `omega_values`, `samples` and
    `seed` to the generated examples.
    """
    try:
        factory = BUILTINS[name]
    except KeyError:
        raise InputError(f"unknown built-in example {name!r}; choose from {', '.join(sorted(BUILTINS))}") from None
    values = [list(map(float, w)) for w in omega_values] if omega_values is not None else None
    return factory(order, dim, values, samples, seed)
