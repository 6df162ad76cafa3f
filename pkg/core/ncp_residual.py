"""NCP functions and the residual Φ(x, ω) of one complementarity realization.

Two NCP functions are supported:

    MIN  φ(a, b) = min(a, b)
    FB   φ(a, b) = a + b - sqrt(a² + b²)      (Fischer-Burmeister)

Both vanish exactly when a >= 0, b >= 0 and ab = 0. For gradient-based solving
the MIN function is replaced by its smoothing

    min_μ(a, b) = ½(a + b - sqrt((a - b)² + 4μ²)),   |min_μ - min| <= μ.

FB needs no smoothing (its square is differentiable everywhere), so μ is
ignored for FB.
"""

from __future__ import annotations

import math
from enum import Enum
from typing import Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from config.settings import settings
from core.errors import InputError, NonsmoothObjectiveError
from core.tensor_core import Tensor, as_vector, contract_to_vector

SQRT2 = math.sqrt(2.0)
# Growth-rate constants relating |FB| and |min|
FB_LOWER_RATIO = 2.0 / (SQRT2 + 2.0)
FB_UPPER_RATIO = SQRT2 + 2.0
# Element of the generalized gradient of FB used at (0, 0)
FB_ORIGIN_PARTIAL = 1.0 - 1.0 / SQRT2


class NcpKind(str, Enum):
    MIN = "min"
    FB = "fb"


class ResidualConfig(BaseModel):
    """Choice of NCP function and smoothing parameter for one evaluation."""

    model_config = ConfigDict(frozen=True)

    ncp_kind: NcpKind = NcpKind.MIN
    smoothing_mu: float = Field(default=0.0, ge=0.0)

    @property
    def is_smooth(self) -> bool:
        return self.ncp_kind is NcpKind.FB or self.smoothing_mu > 0.0

    def with_mu(self, mu: float) -> "ResidualConfig":
        return ResidualConfig(ncp_kind=self.ncp_kind, smoothing_mu=mu)


class SupportSets(BaseModel):
    """Partition of {0..I-1} into (near-)zero and nonzero coordinates of x."""

    zero_indices: Tuple[int, ...]
    nonzero_indices: Tuple[int, ...]
    tolerance: float


def sign(values):
    """Three-valued sign with sign(0) = 0."""
    return np.sign(values)


def phi(kind: NcpKind | str, a, b):
    """Exact NCP function; works on scalars and arrays."""
    kind = NcpKind(kind)
    if kind is NcpKind.MIN:
        return np.minimum(a, b)
    return a + b - np.hypot(a, b)


def smoothed_min(a, b, mu: float):
    return 0.5 * (a + b - np.sqrt((a - b) ** 2 + 4.0 * mu * mu))


def ncp_value(config: ResidualConfig, a, b):
    """φ under `config`: smoothed MIN when μ > 0, otherwise the exact function."""
    if config.ncp_kind is NcpKind.MIN and config.smoothing_mu > 0.0:
        return smoothed_min(a, b, config.smoothing_mu)
    return phi(config.ncp_kind, a, b)


def phi_partials(config: ResidualConfig, a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(∂φ/∂a, ∂φ/∂b) for FB or smoothed MIN.

    At (a, b) = (0, 0) FB uses (1 - 1/√2, 1 - 1/√2).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if config.ncp_kind is NcpKind.FB:
        r = np.hypot(a, b)
        at_origin = r == 0.0
        safe_r = np.where(at_origin, 1.0, r)
        da = np.where(at_origin, FB_ORIGIN_PARTIAL, 1.0 - a / safe_r)
        db = np.where(at_origin, FB_ORIGIN_PARTIAL, 1.0 - b / safe_r)
        return da, db

    mu = config.smoothing_mu
    if mu <= 0.0:
        raise NonsmoothObjectiveError("exact MIN has no gradient; use smoothing_mu > 0")
    s = np.sqrt((a - b) ** 2 + 4.0 * mu * mu)
    ratio = (a - b) / s
    return 0.5 * (1.0 - ratio), 0.5 * (1.0 + ratio)


def residual(A: Tensor, q: Sequence[float], x: Sequence[float], config: ResidualConfig) -> np.ndarray:
    """Φ(x, ω) for one realization: component i is φ((Ax^{N-1})_i + q_i, x_i)."""
    x = as_vector(x, A.dim)
    q = as_vector(q, A.dim, name="q")
    return ncp_value(config, contract_to_vector(A, x) + q, x)


def growth_bounds_holds(a: float, b: float, slack: float = 1e-12) -> bool:
    """(2/(√2+2))|min(a,b)| <= |FB(a,b)| <= (√2+2)|min(a,b)|, within `slack`."""
    m = abs(min(a, b))
    fb = abs(a + b - math.hypot(a, b))
    return FB_LOWER_RATIO * m <= fb + slack and fb <= FB_UPPER_RATIO * m + slack


def min_via_sign(a, b):
    """2 min(a, b) = a + b - sign(a - b)(a - b), returned halved."""
    return 0.5 * (a + b - sign(a - b) * (a - b))


def squared_min_via_sign(a, b):
    """4 min(a, b)² = 2a(1 - sign(a-b))a + 2b(1 + sign(a-b))b, returned quartered."""
    s = sign(a - b)
    return 0.25 * (2.0 * a * (1.0 - s) * a + 2.0 * b * (1.0 + s) * b)


def quadratic_form_residual(A: Tensor, q: Sequence[float], x: Sequence[float]) -> float:
    """‖Φ_MIN(x)‖² through the diagonal sign matrix D = diag(sign(Ax^{N-1} + q - x)).

    Value: ½ F^T (I - D) F + ½ x^T (I + D) x with F = Ax^{N-1} + q.
    """
    x = as_vector(x, A.dim)
    q = as_vector(q, A.dim, name="q")
    F = contract_to_vector(A, x) + q
    d = sign(F - x)
    return float(0.5 * F @ ((1.0 - d) * F) + 0.5 * x @ ((1.0 + d) * x))


def support_sets(x: Sequence[float], tol: float | None = None) -> SupportSets:
    """Zero set 𝕀(x) = {i : |x_i| <= tol} and support 𝕁(x), its complement."""
    tol = settings.checker.support_tolerance if tol is None else tol
    if tol < 0:
        raise InputError(f"support tolerance must be nonnegative, got {tol}")
    x = np.asarray(x, dtype=float)
    zero = np.abs(x) <= tol
    return SupportSets(
        zero_indices=tuple(int(i) for i in np.flatnonzero(zero)),
        nonzero_indices=tuple(int(i) for i in np.flatnonzero(~zero)),
        tolerance=tol,
    )
