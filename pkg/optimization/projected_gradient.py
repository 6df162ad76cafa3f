"""Projected gradient descent with Barzilai-Borwein trial steps and Armijo backtracking.

One engine serves both feasible sets used in this package: the nonnegative
orthant (ERM/EV solves) and the unit simplex (structure-check polish).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

# Bounds on the BB trial step
STEP_MIN = 1e-12
STEP_MAX = 1e12
# Backtracking gives up below this step
STEP_FLOOR = 1e-20

ValueFn = Callable[[np.ndarray], float]
ValueGradFn = Callable[[np.ndarray], Tuple[float, np.ndarray]]
Projection = Callable[[np.ndarray], np.ndarray]
Monitor = Callable[[int, np.ndarray, float], None]


def project_nonnegative(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


@dataclass
class DescentRun:
    x: np.ndarray
    value: float
    iterations: int
    converged: bool
    trace: List[Tuple[int, float]] = field(default_factory=list)


def projected_gradient_norm(x: np.ndarray, grad: np.ndarray, project: Projection) -> float:
    """‖x - P(x - ∇f(x))‖, zero exactly at stationary points of f over the set."""
    return float(np.linalg.norm(x - project(x - grad)))


def descend(
    value_and_grad: ValueGradFn,
    value: ValueFn,
    x0: np.ndarray,
    project: Projection,
    *,
    max_iterations: int,
    gradient_tolerance: float,
    objective_tolerance: float,
    initial_step: float = 1.0,
    backtrack: float = 0.5,
    sufficient_decrease: float = 1e-4,
    iteration_offset: int = 0,
    monitor: Optional[Monitor] = None,
) -> DescentRun:
    """Minimize f over the set behind `project`, starting from P(x0).

    Every accepted step satisfies f(x⁺) <= f(x) + c ∇f(x)ᵀ(x⁺ - x), so the
    trace is non-increasing. Stops when the projected-gradient norm or the
    objective drops below its tolerance. `monitor` sees (iteration, x, f) for
    the start point and every accepted iterate.
    """
    x = project(np.asarray(x0, dtype=float))
    f, g = value_and_grad(x)
    trace = [(iteration_offset, f)]
    if monitor:
        monitor(iteration_offset, x, f)
    step = initial_step

    for iteration in range(1, max_iterations + 1):
        if f <= objective_tolerance or projected_gradient_norm(x, g, project) <= gradient_tolerance:
            return DescentRun(x, f, iteration - 1, True, trace=trace)

        t = min(max(step, STEP_MIN), STEP_MAX)
        while True:
            x_new = project(x - t * g)
            f_new = value(x_new)
            if np.isfinite(f_new) and f_new <= f and f_new <= f + sufficient_decrease * float(g @ (x_new - x)):
                break
            t *= backtrack
            if t < STEP_FLOOR:
                logger.debug(f"Backtracking stalled at iteration {iteration} (f={f:.3e})")
                return DescentRun(x, f, iteration - 1, False, trace=trace)

        f_new, g_new = value_and_grad(x_new)
        s, y = x_new - x, g_new - g
        sy = float(s @ y)
        step = float(s @ s) / sy if sy > 0 else initial_step
        x, f, g = x_new, f_new, g_new
        trace.append((iteration_offset + iteration, f))
        if monitor:
            monitor(iteration_offset + iteration, x, f)

    converged = f <= objective_tolerance or projected_gradient_norm(x, g, project) <= gradient_tolerance
    return DescentRun(x, f, max_iterations, converged, trace=trace)
