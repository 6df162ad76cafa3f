"""Problem files (JSON) in, canonical run reports out.

A problem file holds `order`, `dim`, optional `metadata` and exactly one of

    samples    [{"weight": w, "entries": [[[i1, ..., iN], value], ...], "q": [...]}, ...]
    generator  {"base_entries": ..., "q_base": [...], "terms": [...],
                "q_coefficients": [[...], ...], "omega": [...],
                "num_samples": n, "seed": s, "omega_values": [[...], ...]}

Indices are 0-based. See docs/PROBLEM_FILE_SCHEMA.md for the full schema.
"""

from __future__ import annotations

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from core.errors import InputError, ProblemFileError
from core.stochastic_model import (
    CoefficientTerm,
    GeneratorSpec,
    OmegaDistribution,
    OmegaKind,
    Realization,
    SampleSpace,
    Transform,
    WEIGHT_SUM_TOLERANCE,
    materialize,
)
from core.tensor_core import Tensor
from structure_check import Verdict

logger = logging.getLogger(__name__)

Entries = List[Tuple[List[int], float]]


# --- Schema ---

class SampleModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    weight: float
    entries: Entries = []
    q: List[float]


class OmegaModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: OmegaKind
    lo: Optional[float] = None
    hi: Optional[float] = None
    mean: float = 0.0
    stddev: float = 1.0

    @model_validator(mode="after")
    def _uniform_bounds(self) -> "OmegaModel":
        if self.kind is OmegaKind.UNIFORM and (self.lo is None or self.hi is None):
            raise ValueError("uniform coordinates need both lo and hi")
        return self


class TermModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    coordinate: int = Field(ge=0)
    entries: Entries
    transform: Transform = Transform.LINEAR


class GeneratorModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    base_entries: Entries = []
    q_base: List[float]
    terms: List[TermModel] = []
    q_coefficients: List[List[float]] = []
    omega: List[OmegaModel]
    num_samples: int = Field(ge=1)
    seed: int = 0
    omega_values: Optional[List[List[float]]] = None


class ProblemMetadata(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: Optional[str] = None
    description: Optional[str] = None
    claimed_verdict: Optional[Verdict] = None
    claim_source: Optional[str] = None


class ProblemFile(BaseModel):
    model_config = ConfigDict(extra="forbid")

    order: int = Field(ge=2)
    dim: int = Field(ge=1)
    samples: Optional[List[SampleModel]] = None
    generator: Optional[GeneratorModel] = None
    metadata: ProblemMetadata = ProblemMetadata()

    @model_validator(mode="after")
    def _exactly_one_source(self) -> "ProblemFile":
        if (self.samples is None) == (self.generator is None):
            raise ValueError("exactly one of 'samples' or 'generator' must be given")
        if self.samples is not None and not self.samples:
            raise ValueError("'samples' must not be empty")
        return self


class RunReport(BaseModel):
    """Everything needed to reproduce one CLI run, plus its result."""

    command: str
    argv: List[str]
    problem: Dict[str, Any]
    configuration: Dict[str, Any]
    result: Any
    versions: Dict[str, str]
    seed: int
    wall_clock_seconds: Optional[float] = None


# --- Parsing ---

def _tensor(order: int, dim: int, entries: Entries, field: str) -> Tensor:
    try:
        return Tensor.from_entries(order, dim, entries)
    except InputError as e:
        raise ProblemFileError(str(e), field=field) from e


def _validation_message(error: ValidationError) -> Tuple[str, str]:
    first = error.errors()[0]
    location = ".".join(str(part) for part in first["loc"])
    return first["msg"], location


def load_problem_file(source: Union[str, Path, Dict[str, Any]]) -> ProblemFile:
    """Validate a problem given as a path, JSON text or an already-decoded dict."""
    if isinstance(source, dict):
        data = source
    else:
        text = str(source)
        if not text.lstrip().startswith("{"):
            path = Path(text)
            try:
                text = path.read_text(encoding="utf-8")
            except OSError as e:
                raise ProblemFileError(f"cannot read problem file: {e}", field=str(path)) from e
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ProblemFileError(f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e

    try:
        return ProblemFile.model_validate(data)
    except ValidationError as e:
        message, location = _validation_message(e)
        raise ProblemFileError(message, field=location or None) from e


def build_space(problem: ProblemFile) -> SampleSpace:
    """SampleSpace described by a validated ProblemFile."""
    order, dim = problem.order, problem.dim

    if problem.samples is not None:
        total = math.fsum(s.weight for s in problem.samples)
        if abs(total - 1.0) > WEIGHT_SUM_TOLERANCE:
            raise ProblemFileError(f"weights sum to {total!r}, expected 1", field="samples[*].weight")
        realizations = []
        for k, sample in enumerate(problem.samples):
            tensor = _tensor(order, dim, sample.entries, f"samples[{k}].entries")
            try:
                realizations.append(Realization(sample.weight, tensor, sample.q))
            except InputError as e:
                raise ProblemFileError(str(e), field=f"samples[{k}]") from e
        return SampleSpace(tuple(realizations))

    generator = problem.generator
    try:
        spec = GeneratorSpec(
            base_tensor=_tensor(order, dim, generator.base_entries, "generator.base_entries"),
            q_base=generator.q_base,
            terms=tuple(
                CoefficientTerm(term.coordinate, _tensor(order, dim, term.entries, f"generator.terms[{t}].entries"),
                                term.transform)
                for t, term in enumerate(generator.terms)
            ),
            q_coefficients=tuple(generator.q_coefficients),
            omega_dists=tuple(
                OmegaDistribution(
                    kind=o.kind,
                    lo=o.lo if o.lo is not None else 0.0,
                    hi=o.hi if o.hi is not None else 1.0,
                    mean=o.mean,
                    stddev=o.stddev,
                )
                for o in generator.omega
            ),
        )
        return materialize(spec, generator.num_samples, generator.seed, generator.omega_values)
    except ProblemFileError:
        raise
    except InputError as e:
        raise ProblemFileError(str(e), field="generator") from e


def parse_problem(source: Union[str, Path, Dict[str, Any]]) -> Tuple[SampleSpace, ProblemMetadata]:
    """(SampleSpace, metadata) from a problem path, JSON text or decoded dict."""
    problem = load_problem_file(source)
    space = build_space(problem)
    logger.debug(f"Parsed problem {problem.metadata.name or '<unnamed>'}: {space}")
    return space, problem.metadata


def problem_to_file(space: SampleSpace, metadata: Optional[ProblemMetadata] = None) -> ProblemFile:
    """Explicit-samples ProblemFile for any SampleSpace."""
    return ProblemFile(
        order=space.order,
        dim=space.dim,
        samples=[
            SampleModel(weight=r.weight, entries=r.tensor.entries(), q=[float(v) for v in r.q])
            for r in space.realizations
        ],
        metadata=metadata or ProblemMetadata(),
    )


# --- Canonical serialization ---

def _format_float(value: float) -> str:
    if math.isnan(value):
        return '"NaN"'
    if math.isinf(value):
        return '"Infinity"' if value > 0 else '"-Infinity"'
    text = format(value, ".17g")
    if not any(c in text for c in ".en"):
        text += ".0"
    return text


def _is_scalar(value: Any) -> bool:
    return value is None or isinstance(value, (bool, int, float, str))


def canonical_json(value: Any, indent: int = 2, _level: int = 0) -> str:
    """JSON with sorted keys and 17-significant-digit floats; lists of scalars stay on one line."""
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return _format_float(value)
    if isinstance(value, str):
        return json.dumps(value, ensure_ascii=False)

    pad = " " * (indent * (_level + 1))
    closing = " " * (indent * _level)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [
            f"{pad}{json.dumps(str(key), ensure_ascii=False)}: {canonical_json(value[key], indent, _level + 1)}"
            for key in sorted(value, key=str)
        ]
        return "{\n" + ",\n".join(items) + "\n" + closing + "}"
    if isinstance(value, (list, tuple)):
        if not value:
            return "[]"
        if all(_is_scalar(v) for v in value):
            return "[" + ", ".join(canonical_json(v, indent, _level + 1) for v in value) + "]"
        items = [pad + canonical_json(v, indent, _level + 1) for v in value]
        return "[\n" + ",\n".join(items) + "\n" + closing + "]"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def emit_report(report: RunReport, timing: bool = False) -> str:
    """Canonical JSON text of a run report; wall-clock time only with `timing`."""
    exclude = None if timing else {"wall_clock_seconds"}
    return canonical_json(report.model_dump(mode="json", exclude=exclude)) + "\n"


def emit_problem(problem: ProblemFile) -> str:
    return canonical_json(problem.model_dump(mode="json", exclude_none=True)) + "\n"
