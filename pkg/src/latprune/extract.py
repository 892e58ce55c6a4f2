"""Turn a solved assignment into a concrete pruned-structure description.

For every kept block the chosen option fixes how many elements survive along
each dimension; the survivors are the highest-scoring elements under the
same descending-score, original-index tie-break used to build the importance
vectors.  Removed blocks vanish entirely, whatever the solver assigned to
their dimensions.  Totals are recomputed here from the vectors and tables
rather than copied out of the solver, so extraction doubles as an
independent check of the reported solution.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .arch import MANIFEST_KEY, kept_elements
from .errors import ValidationError
from .importance import RawScores, objective_value, ranked_indices
from .latency import constraint_value
from .solver import PruningProblem, PruningSolution


@dataclass(frozen=True)
class DimOutcome:
    dim_id: str
    role: str
    option: int
    kept_count: int
    max_elements: int
    kept_elements: tuple[int, ...]  # 1-based original indices, ascending


@dataclass(frozen=True)
class BlockOutcome:
    block_id: int
    kind: str
    kept: bool
    dims: tuple[DimOutcome, ...]  # empty for removed blocks


@dataclass(frozen=True)
class PrunedStructure:
    name: str
    blocks: tuple[BlockOutcome, ...]
    importance: float
    latency: float
    depth_kept: int
    depth_total: int

    @property
    def degenerate(self) -> bool:
        return self.depth_kept == 0


def extract_structure(
    solution: PruningSolution,
    problem: PruningProblem,
    raw_scores: dict[str, RawScores],
) -> PrunedStructure:
    """Materialize the kept-element lists for a non-infeasible solution."""
    if solution.status == "infeasible" or solution.assignment is None:
        raise ValidationError("cannot extract a structure from an infeasible solve")
    assignment = solution.assignment
    arch = problem.arch

    blocks = []
    kept_blocks = 0
    for block in arch.blocks:
        if assignment.kappa_of(block) == 0:
            blocks.append(
                BlockOutcome(block_id=block.id, kind=block.kind, kept=False, dims=())
            )
            continue
        kept_blocks += 1
        dims = []
        for dim in arch.block_dims(block):
            raw = raw_scores.get(dim.id)
            if raw is None:
                raise ValidationError(
                    f"missing raw scores for retained dimension {dim.id!r}"
                )
            if raw.scores.shape != (dim.max_elements,):
                raise ValidationError(
                    f"scores for {dim.id!r}: expected {dim.max_elements} values, "
                    f"found {raw.scores.shape[0]}"
                )
            option = assignment.omega[dim.id]
            count = kept_elements(dim, option)
            chosen = sorted(int(i) + 1 for i in ranked_indices(raw.scores)[:count])
            dims.append(
                DimOutcome(
                    dim_id=dim.id,
                    role=dim.role,
                    option=option,
                    kept_count=count,
                    max_elements=dim.max_elements,
                    kept_elements=tuple(chosen),
                )
            )
        blocks.append(
            BlockOutcome(block_id=block.id, kind=block.kind, kept=True, dims=tuple(dims))
        )

    importance = objective_value(assignment, problem.vectors, arch)
    latency = constraint_value(assignment, problem.tables, arch)
    return PrunedStructure(
        name=arch.name,
        blocks=tuple(blocks),
        importance=importance,
        latency=latency,
        depth_kept=kept_blocks,
        depth_total=len(arch.blocks),
    )


def summarize(structure: PrunedStructure) -> tuple[str, str]:
    """Human-readable text plus a CSV of per-dimension width outcomes."""
    lines = [
        f"pruned structure for {structure.name}",
        f"depth {structure.depth_kept}/{structure.depth_total} blocks kept "
        f"({structure.depth_total - structure.depth_kept} removed)",
        f"importance {structure.importance!r}",
        f"latency_ms {structure.latency!r}",
    ]
    if structure.degenerate:
        lines.append("warning: degenerate network, every block was removed")
    for block in structure.blocks:
        if not block.kept:
            lines.append(f"block {block.block_id} ({block.kind}): removed")
            continue
        widths = ", ".join(
            f"{d.dim_id}={d.kept_count}/{d.max_elements}" for d in block.dims
        )
        lines.append(f"block {block.block_id} ({block.kind}): {widths}")
    text = "\n".join(lines) + "\n"

    rows = ["block_id,kind,kept,dim_id,role,option,kept_count,max_elements"]
    for block in structure.blocks:
        if not block.kept:
            rows.append(f"{block.block_id},{block.kind},0,,,,,")
            continue
        for d in block.dims:
            rows.append(
                f"{block.block_id},{block.kind},1,{d.dim_id},{d.role},"
                f"{d.option},{d.kept_count},{d.max_elements}"
            )
    csv = "\n".join(rows) + "\n"
    return text, csv


def structure_to_obj(structure: PrunedStructure) -> dict:
    return {
        "name": structure.name,
        "importance": structure.importance,
        "latency_ms": structure.latency,
        "depth_kept": structure.depth_kept,
        "depth_total": structure.depth_total,
        "degenerate": structure.degenerate,
        "blocks": [
            {
                "block_id": b.block_id,
                "kind": b.kind,
                "kept": b.kept,
                "dims": [
                    {
                        "dim_id": d.dim_id,
                        "role": d.role,
                        "option": d.option,
                        "kept_count": d.kept_count,
                        "max_elements": d.max_elements,
                        "kept_elements": list(d.kept_elements),
                    }
                    for d in b.dims
                ],
            }
            for b in structure.blocks
        ],
    }


def serialize_structure(structure: PrunedStructure, manifest: str | None = None) -> str:
    doc = structure_to_obj(structure)
    if manifest is not None:
        doc[MANIFEST_KEY] = manifest
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
