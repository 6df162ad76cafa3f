"""Order-N, dimension-I real tensors in sparse coordinate form.

Indices are 0-based: the entry a_{i1 i2 ... iN} of the usual 1-based notation
is stored under the tuple (i1-1, i2-1, ..., iN-1).

Ax^{N-1} contracts the trailing N-1 modes exactly as written; no
symmetrization is applied.
"""

from __future__ import annotations

import logging
import math
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from core.errors import InputError

logger = logging.getLogger(__name__)

# Desk-scale guard for dense materialization (I^N entries)
DENSE_LIMIT = 1_000_000

Entry = Tuple[Tuple[int, ...], float]


def _readonly(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


class Tensor:
    """Immutable sparse tensor; entries are kept in lexicographic index order."""

    __slots__ = ("order", "dim", "indices", "values")

    def __init__(self, order: int, dim: int, indices: np.ndarray, values: np.ndarray):
        # Trusted constructor: callers pass sorted, unique, in-range coordinates.
        self.order = order
        self.dim = dim
        self.indices = _readonly(np.asarray(indices, dtype=np.int64).reshape(-1, order))
        self.values = _readonly(np.asarray(values, dtype=float).reshape(-1))

    # ---------- Construction ----------

    @classmethod
    def from_entries(cls, order: int, dim: int, entries: Iterable[Entry]) -> "Tensor":
        """Build a tensor from (index-tuple, value) pairs.

        Raises InputError for an invalid shape, an out-of-range index or a
        repeated index tuple (repeats are rejected, never summed).
        """
        if int(order) != order or order < 2:
            raise InputError(f"tensor order must be an integer >= 2, got {order}")
        if int(dim) != dim or dim < 1:
            raise InputError(f"tensor dimension must be an integer >= 1, got {dim}")

        seen = set()
        rows: List[Tuple[int, ...]] = []
        vals: List[float] = []
        for position, (index, value) in enumerate(entries):
            index = tuple(int(i) for i in index)
            if len(index) != order:
                raise InputError(
                    f"entry {position}: index {index} has length {len(index)}, expected {order}"
                )
            if any(i < 0 or i >= dim for i in index):
                raise InputError(f"entry {position}: index {index} out of range [0, {dim})")
            if index in seen:
                raise InputError(f"entry {position}: duplicate index tuple {index}")
            value = float(value)
            if not math.isfinite(value):
                raise InputError(f"entry {position}: value {value} is not finite")
            seen.add(index)
            rows.append(index)
            vals.append(value)

        return cls._sorted(order, dim, np.array(rows, dtype=np.int64).reshape(-1, order), np.array(vals))

    @classmethod
    def _sorted(cls, order: int, dim: int, indices: np.ndarray, values: np.ndarray) -> "Tensor":
        if len(values):
            perm = np.lexsort(indices.T[::-1])
            indices, values = indices[perm], values[perm]
        return cls(order, dim, indices, values)

    @classmethod
    def zeros(cls, order: int, dim: int) -> "Tensor":
        return cls.from_entries(order, dim, [])

    @classmethod
    def identity(cls, order: int, dim: int, value: float = 1.0) -> "Tensor":
        """Diagonal tensor with a_{i...i} = value."""
        return cls.from_entries(order, dim, [((i,) * order, value) for i in range(dim)])

    @classmethod
    def from_dense(cls, array: np.ndarray) -> "Tensor":
        """Sparse copy of a dense hypercubic array; exact zeros are not stored."""
        array = np.asarray(array, dtype=float)
        if array.ndim < 2 or len(set(array.shape)) != 1:
            raise InputError(f"dense tensor must be hypercubic with order >= 2, got shape {array.shape}")
        indices = np.argwhere(array != 0.0)
        return cls(array.ndim, array.shape[0], indices, array[tuple(indices.T)])

    @classmethod
    def linear_combination(cls, terms: Sequence[Tuple[float, "Tensor"]]) -> "Tensor":
        """Σ c_k T_k over tensors of one shape; entries that cancel to 0.0 are dropped."""
        if not terms:
            raise InputError("linear combination needs at least one term")
        order, dim = terms[0][1].order, terms[0][1].dim
        for _, tensor in terms:
            _check_same_shape(terms[0][1], tensor)

        stacked = np.concatenate([t.indices for _, t in terms])
        weighted = np.concatenate([c * t.values for c, t in terms])
        if len(weighted) == 0:
            return cls.zeros(order, dim)
        union, inverse = np.unique(stacked, axis=0, return_inverse=True)
        summed = np.zeros(len(union))
        np.add.at(summed, inverse.reshape(-1), weighted)
        keep = summed != 0.0
        return cls(order, dim, union[keep], summed[keep])

    # ---------- Views ----------

    @property
    def nnz(self) -> int:
        return len(self.values)

    def entries(self) -> List[Entry]:
        return [(tuple(int(i) for i in row), float(v)) for row, v in zip(self.indices, self.values)]

    def to_dense(self) -> np.ndarray:
        if self.dim ** self.order > DENSE_LIMIT:
            raise InputError(
                f"dense materialization refused: {self.dim}^{self.order} entries exceed {DENSE_LIMIT}"
            )
        dense = np.zeros((self.dim,) * self.order)
        dense[tuple(self.indices.T)] = self.values
        return dense

    def matrix_view(self) -> np.ndarray:
        """The I x I matrix of an order-2 tensor."""
        if self.order != 2:
            raise InputError(f"matrix view needs an order-2 tensor, got order {self.order}")
        return self.to_dense()

    def scaled(self, factor: float) -> "Tensor":
        return Tensor(self.order, self.dim, self.indices, factor * self.values)

    def __add__(self, other: "Tensor") -> "Tensor":
        return Tensor.linear_combination([(1.0, self), (1.0, other)])

    def __sub__(self, other: "Tensor") -> "Tensor":
        return Tensor.linear_combination([(1.0, self), (-1.0, other)])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Tensor):
            return NotImplemented
        return (
            self.order == other.order
            and self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None  # compared by value, not hashable

    def __repr__(self) -> str:
        return f"Tensor(order={self.order}, dim={self.dim}, nnz={self.nnz})"


# ---------- Helpers ----------

def _check_same_shape(a: Tensor, b: Tensor) -> None:
    if a.order != b.order or a.dim != b.dim:
        raise InputError(f"shape mismatch: ({a.order}, {a.dim}) vs ({b.order}, {b.dim})")


def as_vector(x: Sequence[float], dim: int, name: str = "x") -> np.ndarray:
    """Float copy of `x`, checked to have length `dim`."""
    vector = np.array(x, dtype=float)
    if vector.shape != (dim,):
        raise InputError(f"dimension mismatch: {name} has shape {vector.shape}, expected ({dim},)")
    return vector


# ---------- Multilinear evaluations ----------

def contract_to_vector(A: Tensor, x: Sequence[float]) -> np.ndarray:
    """Ax^{N-1}: component i sums a_{i i2..iN} x_{i2} ... x_{iN}."""
    x = as_vector(x, A.dim)
    if A.nnz == 0:
        return np.zeros(A.dim)
    terms = A.values * np.prod(x[A.indices[:, 1:]], axis=1)
    return np.bincount(A.indices[:, 0], weights=terms, minlength=A.dim)


def contract_to_scalar(A: Tensor, x: Sequence[float]) -> float:
    """Ax^N = x^T (Ax^{N-1})."""
    x = as_vector(x, A.dim)
    return float(x @ contract_to_vector(A, x))


def jacobian(A: Tensor, x: Sequence[float]) -> np.ndarray:
    """Jacobian of x -> Ax^{N-1}, summing the derivative over all N-1 trailing slots."""
    x = as_vector(x, A.dim)
    J = np.zeros((A.dim, A.dim))
    if A.nnz == 0:
        return J
    factors = x[A.indices[:, 1:]]
    for slot in range(A.order - 1):
        partial = A.values * np.prod(np.delete(factors, slot, axis=1), axis=1)
        np.add.at(J, (A.indices[:, 0], A.indices[:, slot + 1]), partial)
    return J


def frobenius_norm(A: Tensor) -> float:
    return float(np.sqrt(np.sum(A.values ** 2)))


def scalar_product(A: Tensor, B: Tensor) -> float:
    """<A, B> = Σ a_{i1..iN} b_{i1..iN} over aligned entries."""
    _check_same_shape(A, B)
    lookup = {index: value for index, value in B.entries()}
    return math.fsum(value * lookup.get(index, 0.0) for index, value in A.entries())


class TensorStack:
    """A family of same-shape tensors on their union sparsity pattern.

    Row k of `values` holds realization k; evaluating every realization at a
    point costs one monomial pass plus one scatter-add over the pattern.
    """

    def __init__(self, tensors: Sequence[Tensor]):
        if not tensors:
            raise InputError("tensor stack needs at least one tensor")
        first = tensors[0]
        for tensor in tensors[1:]:
            _check_same_shape(first, tensor)
        self.order = first.order
        self.dim = first.dim
        self.size = len(tensors)

        all_indices = np.concatenate([t.indices for t in tensors])
        if len(all_indices):
            union, inverse = np.unique(all_indices, axis=0, return_inverse=True)
            inverse = inverse.reshape(-1)
        else:
            union, inverse = np.zeros((0, self.order), dtype=np.int64), np.zeros(0, dtype=np.int64)

        values = np.zeros((self.size, len(union)))
        offset = 0
        for k, tensor in enumerate(tensors):
            values[k, inverse[offset:offset + tensor.nnz]] = tensor.values
            offset += tensor.nnz

        self.indices = _readonly(union)
        self.values = _readonly(values)

    def contract(self, x: np.ndarray) -> np.ndarray:
        """Row k is A_k x^{N-1}; shape (K, I)."""
        if not len(self.indices):
            return np.zeros((self.size, self.dim))
        monomials = np.prod(x[self.indices[:, 1:]], axis=1)
        # Padding zeros contribute nothing, even against an overflowed monomial
        terms = np.multiply(self.values, monomials, out=np.zeros_like(self.values), where=self.values != 0.0)
        out = np.zeros((self.size, self.dim))
        # Entries are added in pattern order, so a row does not depend on its position in the stack
        np.add.at(out.T, self.indices[:, 0], terms.T)
        return out

    def vjp(self, x: np.ndarray, cotangent: np.ndarray) -> np.ndarray:
        """Σ_k J_k(x)^T cotangent_k, with J_k the Jacobian of realization k at x."""
        grad = np.zeros(self.dim)
        if not len(self.indices):
            return grad
        leading = (cotangent[:, self.indices[:, 0]] * self.values).sum(axis=0)
        factors = x[self.indices[:, 1:]]
        for slot in range(self.order - 1):
            partial = leading * np.prod(np.delete(factors, slot, axis=1), axis=1)
            np.add.at(grad, self.indices[:, slot + 1], partial)
        return grad

    def weighted_mean(self, weights: np.ndarray) -> Tensor:
        """Σ_k w_k A_k; entries averaging to exactly 0.0 are dropped."""
        mean = np.asarray(weights, dtype=float) @ self.values
        keep = mean != 0.0
        return Tensor(self.order, self.dim, self.indices[keep], mean[keep])

    def tensor(self, k: int) -> Tensor:
        row = self.values[k]
        keep = row != 0.0
        return Tensor(self.order, self.dim, self.indices[keep], row[keep])
