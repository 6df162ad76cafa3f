from pathlib import Path

import numpy as np
import pytest

from cli.builtin_examples import EXAMPLE_4_2_ENTRIES, builtin_example
from cli.problem_io import build_space
from core.stochastic_model import SampleSpace
from core.tensor_core import Tensor
from structure_check import CheckOptions

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def example4_2_tensor():
    return Tensor.from_entries(3, 5, EXAMPLE_4_2_ENTRIES)


@pytest.fixture
def example4_1_space():
    """Two realizations, ω = -0.25 and ω = +0.25."""
    return build_space(builtin_example("example4_1"))


@pytest.fixture
def identity_space():
    """Order-3 identity on R^2 with q = (-1, -4); the solution is (1, 2)."""
    return SampleSpace.singleton(Tensor.identity(3, 2), [-1.0, -4.0])


@pytest.fixture
def fast_check():
    return CheckOptions(random_starts=20, polish_count=4, polish_iterations=50)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
