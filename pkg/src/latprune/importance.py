"""Saliency scores, per-dimension importance vectors, and the gated objective.

Raw saliency scores are supplied per element (one value per channel, head,
query/key unit, ...).  They are folded into importance vectors: entry ``j``
of a dimension's vector is the sum of its top ``kept_elements(dim, j)``
scores, so the vector directly prices each keep-count option.  The objective
of an assignment is the sum of the chosen entries over all blocks, with a
removed block contributing exactly zero.

Scoring is method-agnostic: any real-valued saliency works, negative values
included.  The descending sort breaks ties by original element index so that
structure extraction is deterministic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .arch import ArchitectureSpec, BlockSpec, DimensionSpec, MANIFEST_KEY, kept_elements
from .errors import ParseError, ValidationError


@dataclass(frozen=True)
class RawScores:
    dim_id: str
    scores: np.ndarray  # float64, one entry per element

    def __eq__(self, other):
        return (
            isinstance(other, RawScores)
            and self.dim_id == other.dim_id
            and np.array_equal(self.scores, other.scores)
        )


@dataclass(frozen=True)
class ImportanceVector:
    dim_id: str
    values: np.ndarray  # float64, one entry per keep-count option


@dataclass
class Assignment:
    """Chosen option per dimension plus keep/remove bit per removable block."""

    omega: dict[str, int] = field(default_factory=dict)
    kappa: dict[int, int] = field(default_factory=dict)

    def kappa_of(self, block: BlockSpec) -> int:
        if not block.removable:
            return 1
        try:
            return self.kappa[block.id]
        except KeyError:
            raise ValidationError(f"assignment missing kappa for block {block.id}") from None

    def copy(self) -> "Assignment":
        return Assignment(omega=dict(self.omega), kappa=dict(self.kappa))

    def validate_for(self, arch: ArchitectureSpec) -> None:
        for block in arch.blocks:
            k = self.kappa_of(block)
            if k not in (0, 1):
                raise ValidationError(f"block {block.id}: kappa must be 0 or 1, got {k}")
            for dim in arch.block_dims(block):
                j = self.omega.get(dim.id)
                if j is None:
                    raise ValidationError(f"assignment missing option for {dim.id!r}")
                if not 1 <= j <= dim.option_count:
                    raise ValidationError(
                        f"{dim.id!r}: option {j} out of range [1, {dim.option_count}]"
                    )
        for block_id in self.kappa:
            block = arch.blocks[block_id - 1] if 1 <= block_id <= len(arch.blocks) else None
            if block is None or not block.removable:
                raise ValidationError(
                    f"kappa given for block {block_id}, which is not a removable block"
                )


def ranked_indices(scores: np.ndarray) -> np.ndarray:
    """Element indices sorted by descending score, ties by original index."""
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")


def build_importance_vector(raw: RawScores, dim: DimensionSpec) -> ImportanceVector:
    """Fold element scores into per-option top-k prefix sums."""
    scores = np.asarray(raw.scores, dtype=np.float64)
    if scores.shape != (dim.max_elements,):
        raise ValidationError(
            f"scores for {dim.id!r}: expected {dim.max_elements} values, "
            f"found {scores.shape[0] if scores.ndim == 1 else scores.shape}"
        )
    ordered = scores[ranked_indices(scores)]
    prefix = np.cumsum(ordered)
    kept = [kept_elements(dim, j) for j in range(1, dim.option_count + 1)]
    return ImportanceVector(dim_id=dim.id, values=prefix[np.array(kept) - 1].copy())


def build_all_vectors(
    arch: ArchitectureSpec, raw_scores: dict[str, RawScores]
) -> dict[str, ImportanceVector]:
    vectors = {}
    for dim in arch.dims.values():
        raw = raw_scores.get(dim.id)
        if raw is None:
            raise ValidationError(f"missing raw scores for dimension {dim.id!r}")
        vectors[dim.id] = build_importance_vector(raw, dim)
    return vectors


def objective_value(
    assignment: Assignment,
    vectors: dict[str, ImportanceVector],
    arch: ArchitectureSpec,
) -> float:
    """Total importance of an assignment; removed blocks contribute zero.

    Accumulation order is fixed (blocks ascending, dimensions in declared
    order, per-block subtotal added to the running total) so that every
    evaluation path in the package produces bit-identical floats.
    """
    total = 0.0
    for block in arch.blocks:
        if assignment.kappa_of(block) == 0:
            continue
        subtotal = 0.0
        for dim_id in block.dims:
            vec = vectors.get(dim_id)
            if vec is None:
                raise ValidationError(f"missing importance vector for {dim_id!r}")
            j = assignment.omega[dim_id]
            dim = arch.dim(dim_id)
            if not 1 <= j <= dim.option_count:
                raise ValidationError(
                    f"{dim_id!r}: option {j} out of range [1, {dim.option_count}]"
                )
            subtotal += float(vec.values[j - 1])
        total += subtotal
    return total


def parse_scores(document: str) -> dict[str, RawScores]:
    """Parse a JSON scores document: a list of {dim_id, scores} records."""
    try:
        obj = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ParseError(f"scores: invalid JSON at line {exc.lineno} "
                         f"column {exc.colno}: {exc.msg}") from None
    if isinstance(obj, dict):
        extra = set(obj) - {"scores", MANIFEST_KEY}
        if extra:
            raise ParseError(f"scores: unknown keys {sorted(extra)}")
        obj = obj.get("scores")
    if not isinstance(obj, list):
        raise ParseError("scores: expected a list of {dim_id, scores} records")

    out: dict[str, RawScores] = {}
    for i, entry in enumerate(obj):
        if not isinstance(entry, dict) or set(entry) != {"dim_id", "scores"}:
            raise ParseError(f"scores[{i}]: expected keys {{dim_id, scores}}")
        dim_id = entry["dim_id"]
        if not isinstance(dim_id, str):
            raise ParseError(f"scores[{i}]: dim_id must be a string")
        if dim_id in out:
            raise ValidationError(f"scores: duplicate entry for dimension {dim_id!r}")
        values = entry["scores"]
        if not isinstance(values, list) or not values:
            raise ParseError(f"scores[{i}] ({dim_id!r}): scores must be a non-empty list")
        arr = np.empty(len(values), dtype=np.float64)
        for k, v in enumerate(values):
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                raise ValidationError(
                    f"scores for {dim_id!r}: non-finite or non-numeric value at "
                    f"element {k}: {v!r}"
                )
            arr[k] = float(v)
        out[dim_id] = RawScores(dim_id=dim_id, scores=arr)
    return out


def serialize_scores(scores: dict[str, RawScores], manifest: str | None = None) -> str:
    doc: dict = {
        "scores": [
            {"dim_id": s.dim_id, "scores": [float(v) for v in s.scores]}
            for s in scores.values()
        ]
    }
    if manifest is not None:
        doc[MANIFEST_KEY] = manifest
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def synth_scores(
    arch: ArchitectureSpec, seed: int, distribution: str = "uniform01"
) -> dict[str, RawScores]:
    """Draw deterministic nonnegative saliency scores for every dimension."""
    if distribution not in ("uniform01", "exponential"):
        raise ValidationError(f"unknown score distribution {distribution!r}")
    rng = np.random.default_rng(seed)
    out = {}
    for dim in arch.dims.values():
        if distribution == "uniform01":
            draws = rng.random(dim.max_elements)
        else:
            draws = rng.exponential(1.0, dim.max_elements)
        out[dim.id] = RawScores(dim_id=dim.id, scores=draws)
    return out
