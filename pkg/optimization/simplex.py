"""Unit-simplex helpers: Euclidean projection and regular grids."""

from __future__ import annotations

from typing import Iterator, List, Tuple

import numpy as np


def project_to_simplex(y: np.ndarray, radius: float = 1.0) -> np.ndarray:
    """argmin ½‖x - y‖² over {x >= 0, Σx = radius} (sort-based)."""
    y = np.asarray(y, dtype=float)
    u = np.sort(y)[::-1]
    cumulative = np.cumsum(u) - radius
    thresholds = cumulative / np.arange(1, len(y) + 1)
    k = np.nonzero(thresholds < u)[0][-1]
    return np.maximum(y - thresholds[k], 0.0)


def _compositions(total: int, parts: int) -> Iterator[Tuple[int, ...]]:
    # Descending lexicographic order: (total, 0, ..., 0) first
    if parts == 1:
        yield (total,)
        return
    for head in range(total, -1, -1):
        for tail in _compositions(total - head, parts - 1):
            yield (head,) + tail


def simplex_grid(dim: int, resolution: int) -> List[np.ndarray]:
    """All points of the simplex with coordinates in {0, 1/r, ..., 1}, e₁ first."""
    if resolution < 1:
        raise ValueError(f"grid resolution must be >= 1, got {resolution}")
    return [np.array(c, dtype=float) / resolution for c in _compositions(resolution, dim)]
