"""Finite probability spaces for random complementarity data (A(ω), q(ω)).

A continuous ω is represented by weighted realizations: either listed
explicitly or drawn from an affine generator (sample-average approximation).
Expectations are weighted sums; "almost surely" means "for every realization",
since every stored weight is positive.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core.errors import InputError
from core.tensor_core import Tensor, TensorStack, as_vector
from utils.parallel import ordered_map
from utils.rng import Stream, keyed_generator

logger = logging.getLogger(__name__)

WEIGHT_SUM_TOLERANCE = 1e-12


def _frozen_vector(values: Sequence[float], dim: int, name: str) -> np.ndarray:
    vector = as_vector(values, dim, name=name)
    if not np.all(np.isfinite(vector)):
        raise InputError(f"{name} contains non-finite values")
    vector.flags.writeable = False
    return vector


# ---------- Random coordinates ----------

class OmegaKind(str, Enum):
    UNIFORM = "uniform"
    NORMAL = "normal"


@dataclass(frozen=True)
class OmegaDistribution:
    """One ω coordinate: UNIFORM(lo, hi) or NORMAL(mean, stddev)."""

    kind: OmegaKind
    lo: float = 0.0
    hi: float = 1.0
    mean: float = 0.0
    stddev: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", OmegaKind(self.kind))
        if self.kind is OmegaKind.UNIFORM and not self.hi > self.lo:
            raise InputError(f"uniform distribution needs lo < hi, got lo={self.lo}, hi={self.hi}")
        if self.kind is OmegaKind.NORMAL and not self.stddev > 0:
            raise InputError(f"normal distribution needs stddev > 0, got {self.stddev}")

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "OmegaDistribution":
        return cls(OmegaKind.UNIFORM, lo=lo, hi=hi)

    @classmethod
    def normal(cls, mean: float = 0.0, stddev: float = 1.0) -> "OmegaDistribution":
        return cls(OmegaKind.NORMAL, mean=mean, stddev=stddev)

    @property
    def bounded(self) -> bool:
        """Whether the support is a bounded interval."""
        return self.kind is OmegaKind.UNIFORM

    def draw(self, rng: np.random.Generator) -> float:
        if self.kind is OmegaKind.UNIFORM:
            return float(rng.uniform(self.lo, self.hi))
        return float(rng.normal(self.mean, self.stddev))

    def expected(self, transform: "Transform") -> float:
        """E[t(ω)] for t the identity (LINEAR) or the absolute value (ABS)."""
        if self.kind is OmegaKind.UNIFORM:
            if transform is Transform.LINEAR:
                return 0.5 * (self.lo + self.hi)
            if self.lo >= 0:
                return 0.5 * (self.lo + self.hi)
            if self.hi <= 0:
                return -0.5 * (self.lo + self.hi)
            return (self.lo ** 2 + self.hi ** 2) / (2.0 * (self.hi - self.lo))

        if transform is Transform.LINEAR:
            return self.mean
        # Folded normal mean
        m, s = self.mean, self.stddev
        return s * math.sqrt(2.0 / math.pi) * math.exp(-m * m / (2 * s * s)) + m * math.erf(m / (s * math.sqrt(2.0)))


# ---------- Affine generator ----------

class Transform(str, Enum):
    LINEAR = "linear"
    ABS = "abs"

    def apply(self, omega: float) -> float:
        return omega if self is Transform.LINEAR else abs(omega)


@dataclass(frozen=True, eq=False)
class CoefficientTerm:
    """Contributes t(ω_coordinate)·tensor to A(ω)."""

    coordinate: int
    tensor: Tensor
    transform: Transform = Transform.LINEAR

    def __post_init__(self):
        object.__setattr__(self, "transform", Transform(self.transform))


@dataclass(frozen=True, eq=False)
class GeneratorSpec:
    """A(ω) = base + Σ_terms t(ω_j)·C,  q(ω) = q_base + Σ_j ω_j·q_coefficients[j]."""

    base_tensor: Tensor
    q_base: np.ndarray
    terms: Tuple[CoefficientTerm, ...]
    q_coefficients: Tuple[np.ndarray, ...]
    omega_dists: Tuple[OmegaDistribution, ...]

    def __post_init__(self):
        base = self.base_tensor
        object.__setattr__(self, "q_base", _frozen_vector(self.q_base, base.dim, "q_base"))
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "omega_dists", tuple(self.omega_dists))
        object.__setattr__(
            self,
            "q_coefficients",
            tuple(_frozen_vector(c, base.dim, f"q_coefficients[{j}]") for j, c in enumerate(self.q_coefficients)),
        )
        if len(self.q_coefficients) != self.omega_dim:
            raise InputError(
                f"generator has {self.omega_dim} omega coordinates but {len(self.q_coefficients)} q coefficient vectors"
            )
        for position, term in enumerate(self.terms):
            if not 0 <= term.coordinate < self.omega_dim:
                raise InputError(f"terms[{position}]: coordinate {term.coordinate} out of range [0, {self.omega_dim})")
            if term.tensor.order != base.order or term.tensor.dim != base.dim:
                raise InputError(f"terms[{position}]: tensor shape does not match the base tensor")

    @property
    def omega_dim(self) -> int:
        return len(self.omega_dists)

    @property
    def order(self) -> int:
        return self.base_tensor.order

    @property
    def dim(self) -> int:
        return self.base_tensor.dim

    def tensor_at(self, omega: Sequence[float]) -> Tensor:
        parts = [(1.0, self.base_tensor)]
        parts += [(term.transform.apply(omega[term.coordinate]), term.tensor) for term in self.terms]
        return Tensor.linear_combination(parts)

    def q_at(self, omega: Sequence[float]) -> np.ndarray:
        q = self.q_base.copy()
        for j, coefficient in enumerate(self.q_coefficients):
            q = q + omega[j] * coefficient
        return q

    def analytic_mean(self) -> Tuple[Tensor, np.ndarray]:
        """(E A(ω), E q(ω)) under the declared distributions."""
        parts = [(1.0, self.base_tensor)]
        parts += [(self.omega_dists[t.coordinate].expected(t.transform), t.tensor) for t in self.terms]
        q = self.q_base.copy()
        for j, coefficient in enumerate(self.q_coefficients):
            q = q + self.omega_dists[j].expected(Transform.LINEAR) * coefficient
        return Tensor.linear_combination(parts), q


# ---------- Sample spaces ----------

class ProvenanceKind(str, Enum):
    EXPLICIT = "explicit"
    GENERATED = "generated"


@dataclass(frozen=True, eq=False)
class Provenance:
    kind: ProvenanceKind = ProvenanceKind.EXPLICIT
    spec: Optional[GeneratorSpec] = None
    seed: Optional[int] = None
    count: Optional[int] = None
    omega_values: Optional[Tuple[Tuple[float, ...], ...]] = None


@dataclass(frozen=True, eq=False)
class Realization:
    """One (A(ω), q(ω)) pair with its probability mass."""

    weight: float
    tensor: Tensor
    q: np.ndarray

    def __post_init__(self):
        if not (self.weight > 0 and self.weight <= 1 + WEIGHT_SUM_TOLERANCE):
            raise InputError(f"realization weight must lie in (0, 1], got {self.weight}")
        object.__setattr__(self, "q", _frozen_vector(self.q, self.tensor.dim, "q"))


@dataclass(frozen=True, eq=False)
class SampleSpace:
    """Nonempty, immutable list of weighted realizations sharing one shape."""

    realizations: Tuple[Realization, ...]
    provenance: Provenance = field(default_factory=Provenance)

    def __post_init__(self):
        object.__setattr__(self, "realizations", tuple(self.realizations))
        if not self.realizations:
            raise InputError("sample space needs at least one realization")
        first = self.realizations[0].tensor
        for k, realization in enumerate(self.realizations[1:], start=1):
            if realization.tensor.order != first.order or realization.tensor.dim != first.dim:
                raise InputError(
                    f"realization {k}: shape ({realization.tensor.order}, {realization.tensor.dim}) "
                    f"differs from ({first.order}, {first.dim})"
                )
        total = math.fsum(r.weight for r in self.realizations)
        if abs(total - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise InputError(f"weights sum to {total!r}, expected 1 within {WEIGHT_SUM_TOLERANCE}")

    # ---------- Constructors ----------

    @classmethod
    def singleton(cls, tensor: Tensor, q: Sequence[float]) -> "SampleSpace":
        return cls((Realization(1.0, tensor, q),))

    @classmethod
    def from_pairs(cls, pairs: Sequence[Tuple[Tensor, Sequence[float]]]) -> "SampleSpace":
        """Equally weighted realizations."""
        if not pairs:
            raise InputError("sample space needs at least one realization")
        weight = 1.0 / len(pairs)
        return cls(tuple(Realization(weight, tensor, q) for tensor, q in pairs))

    @classmethod
    def mixture(cls, spaces: Sequence["SampleSpace"], coefficients: Sequence[float]) -> "SampleSpace":
        """Convex combination Σ c_s P_s of spaces."""
        if len(spaces) != len(coefficients) or not spaces:
            raise InputError("mixture needs one coefficient per space")
        if any(c <= 0 for c in coefficients) or abs(math.fsum(coefficients) - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise InputError(f"mixture coefficients must be positive and sum to 1, got {list(coefficients)}")
        return cls(tuple(
            Realization(c * r.weight, r.tensor, r.q)
            for c, space in zip(coefficients, spaces)
            for r in space.realizations
        ))

    @classmethod
    def independent_sum(cls, first: "SampleSpace", second: "SampleSpace") -> "SampleSpace":
        """Product measure of two independent spaces; tensors and q vectors add."""
        return cls(tuple(
            Realization(a.weight * b.weight, a.tensor + b.tensor, a.q + b.q)
            for a in first.realizations
            for b in second.realizations
        ))

    # ---------- Derived spaces ----------

    def centered(self) -> "SampleSpace":
        """Every realization minus the weighted means (mean-zero tensors and q).

        Provenance is kept so the distribution of the generating ω stays visible.
        """
        mean_tensor, mean_q = expectation_tensor(self), expectation_q(self)
        return SampleSpace(
            tuple(Realization(r.weight, r.tensor - mean_tensor, r.q - mean_q) for r in self.realizations),
            self.provenance,
        )

    def scaled(self, factor: float) -> "SampleSpace":
        if not factor > 0:
            raise InputError(f"scale factor must be positive, got {factor}")
        return SampleSpace(tuple(
            Realization(r.weight, r.tensor.scaled(factor), r.q) for r in self.realizations
        ))

    def with_zero_q(self) -> "SampleSpace":
        return SampleSpace(
            tuple(Realization(r.weight, r.tensor, np.zeros(self.dim)) for r in self.realizations),
            self.provenance,
        )

    # ---------- Views ----------

    @property
    def size(self) -> int:
        return len(self.realizations)

    @property
    def order(self) -> int:
        return self.realizations[0].tensor.order

    @property
    def dim(self) -> int:
        return self.realizations[0].tensor.dim

    @cached_property
    def weights(self) -> np.ndarray:
        weights = np.array([r.weight for r in self.realizations])
        weights.flags.writeable = False
        return weights

    @cached_property
    def q_matrix(self) -> np.ndarray:
        """Row k is q(ω_k); shape (K, I)."""
        matrix = np.stack([r.q for r in self.realizations])
        matrix.flags.writeable = False
        return matrix

    @cached_property
    def stack(self) -> TensorStack:
        return TensorStack([r.tensor for r in self.realizations])

    def __repr__(self) -> str:
        return (
            f"SampleSpace(size={self.size}, order={self.order}, dim={self.dim}, "
            f"provenance={self.provenance.kind.value})"
        )


# ---------- Operations ----------

def materialize(
    spec: GeneratorSpec,
    n: int,
    seed: int,
    omega_values: Optional[Sequence[Sequence[float]]] = None,
) -> SampleSpace:
    """n equally weighted draws from `spec`.

    ω_{k,j} comes from the stream keyed by (seed, k, j). With `omega_values`
    the listed ω vectors are used instead of draws (n must match).
    """
    if int(n) != n or n < 1:
        raise InputError(f"sample count must be a positive integer, got {n}")

    if omega_values is not None:
        pinned = [tuple(float(v) for v in omega) for omega in omega_values]
        if len(pinned) != n:
            raise InputError(f"{len(pinned)} omega values given for {n} samples")
        for k, omega in enumerate(pinned):
            if len(omega) != spec.omega_dim:
                raise InputError(f"omega_values[{k}] has length {len(omega)}, expected {spec.omega_dim}")
    else:
        pinned = None

    def _omega(k: int) -> Tuple[float, ...]:
        if pinned is not None:
            return pinned[k]
        return tuple(dist.draw(keyed_generator(seed, Stream.OMEGA, k, j)) for j, dist in enumerate(spec.omega_dists))

    def _realization(k: int) -> Realization:
        omega = _omega(k)
        return Realization(1.0 / n, spec.tensor_at(omega), spec.q_at(omega))

    realizations = ordered_map(_realization, range(n), desc="materialize")
    logger.debug(f"Materialized {n} realizations (seed={seed}, pinned={pinned is not None})")
    provenance = Provenance(
        kind=ProvenanceKind.GENERATED,
        spec=spec,
        seed=seed,
        count=n,
        omega_values=tuple(pinned) if pinned is not None else None,
    )
    return SampleSpace(tuple(realizations), provenance)


def expectation_tensor(space: SampleSpace) -> Tensor:
    """Ā = Σ_k w_k A_k."""
    return space.stack.weighted_mean(space.weights)


def expectation_q(space: SampleSpace) -> np.ndarray:
    """q̄ = Σ_k w_k q_k."""
    return space.weights @ space.q_matrix


def expected_q_moments(space: SampleSpace) -> Tuple[float, np.ndarray, np.ndarray]:
    """(E‖q‖², E{q_i²}, E{q_i²·1[q_i < 0]}) as weighted sums."""
    squares = space.q_matrix ** 2
    per_component = space.weights @ squares
    negative_part = space.weights @ np.where(space.q_matrix < 0, squares, 0.0)
    return math.fsum(per_component), per_component, negative_part
