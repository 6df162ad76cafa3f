"""ERM objective G(x) = Σ_k w_k ‖Φ(x, ω_k)‖² and the EV merit function.

The weighted sum is taken with `math.fsum`, which is exactly rounded, so
the value does not depend on the order of the realizations.
"""

from __future__ import annotations

import logging
import math
from typing import List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from core.errors import NonsmoothObjectiveError, NumericalFailure
from core.ncp_residual import NcpKind, ResidualConfig, ncp_value, phi_partials
from core.stochastic_model import SampleSpace, expectation_q, expectation_tensor
from core.tensor_core import as_vector

logger = logging.getLogger(__name__)


class ObjectiveValue(BaseModel):
    value: float = Field(ge=0.0)
    per_realization: List[Tuple[float, float]]


def _residuals(space: SampleSpace, x: np.ndarray, config: ResidualConfig) -> Tuple[np.ndarray, np.ndarray]:
    """(F, Φ) with F[k] = A_k x^{N-1} + q_k and Φ[k] = φ(F[k], x); both (K, I)."""
    F = space.stack.contract(x) + space.q_matrix
    return F, ncp_value(config, F, x[np.newaxis, :])


def _weighted_sum(weights: np.ndarray, squared_norms: np.ndarray) -> float:
    return math.fsum(weights * squared_norms)


def objective_value(space: SampleSpace, x: Sequence[float], config: ResidualConfig) -> float:
    """G(x) as a bare float; may be inf or nan when the contraction overflows."""
    x = as_vector(x, space.dim)
    _, phi = _residuals(space, x, config)
    squared = np.sum(phi * phi, axis=1)
    if not np.all(np.isfinite(squared)):
        return float("nan") if np.any(np.isnan(squared)) else float("inf")
    return _weighted_sum(space.weights, squared)


def erm_objective(space: SampleSpace, x: Sequence[float], config: ResidualConfig | None = None) -> ObjectiveValue:
    """G(x) with the per-realization breakdown (weight, ‖Φ(x, ω_k)‖²)."""
    config = config or ResidualConfig()
    x = as_vector(x, space.dim)
    _, phi = _residuals(space, x, config)
    squared = np.sum(phi * phi, axis=1)
    if not np.all(np.isfinite(squared)):
        raise NumericalFailure(f"non-finite residual at x with max |x_i| = {np.max(np.abs(x)):.3g}")
    return ObjectiveValue(
        value=_weighted_sum(space.weights, squared),
        per_realization=[(float(w), float(s)) for w, s in zip(space.weights, squared)],
    )


def value_and_gradient(space: SampleSpace, x: Sequence[float], config: ResidualConfig) -> Tuple[float, np.ndarray]:
    """(G(x), ∇G(x)) for FB or smoothed MIN."""
    if config.ncp_kind is NcpKind.MIN and config.smoothing_mu <= 0.0:
        raise NonsmoothObjectiveError("the exact MIN objective is nonsmooth; set smoothing_mu > 0 or use FB")
    x = as_vector(x, space.dim)
    F, phi = _residuals(space, x, config)
    d_a, d_b = phi_partials(config, F, np.broadcast_to(x, F.shape))

    weighted = 2.0 * space.weights[:, np.newaxis] * phi
    # Chain rule: through a = A x^{N-1} + q (Jacobian) and through b = x (identity)
    grad = space.stack.vjp(x, weighted * d_a) + np.sum(weighted * d_b, axis=0)
    value = _weighted_sum(space.weights, np.sum(phi * phi, axis=1))
    return value, grad


def erm_gradient(space: SampleSpace, x: Sequence[float], config: ResidualConfig) -> np.ndarray:
    """∇G(x); raises NonsmoothObjectiveError for exact MIN."""
    return value_and_gradient(space, x, config)[1]


def ev_space(space: SampleSpace) -> SampleSpace:
    """Singleton space (Ā, q̄) of the expected-value method."""
    return SampleSpace.singleton(expectation_tensor(space), expectation_q(space))


def ev_objective(space: SampleSpace, x: Sequence[float], config: ResidualConfig | None = None) -> ObjectiveValue:
    """‖Φ̄(x)‖² with Φ̄ built from the mean tensor and mean q."""
    return erm_objective(ev_space(space), x, config)
