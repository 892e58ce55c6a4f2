"""Latency lookup tables, constraint evaluation, synthesis, and the
single-row linear cost model.

A table set holds one dense nonnegative tensor per block part, indexed by
keep-count options:

* cnn_chain: one rank-2 table per layer over (input dim, output dim);
* transformer: rank-3 ``qk`` over (emb, head, qk), rank-3 ``vproj`` over
  (emb, head, v), rank-2 ``mlp`` over (emb, mlp).

``constraint_value`` evaluates the decomposed per-part sum for an
assignment; ``joint_constraint_value`` evaluates the same quantity from full
per-block tensors by literally expanding the one-hot outer product, and is
kept as an independent cross-check path.  All latencies are milliseconds and
share the budget's unit.  Table axes are grouped options, never raw channel
counts; no interpolation between options is performed.

The module also carries the single-row linear cost model used by earlier
latency-pruning schemes (``linear_channel_cost``), its error bound against
two-axis lookups (``estimation_error``), and a trajectory replay that
quantifies the cumulative gap between the two models along an iterative
pruning schedule.
"""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .arch import ArchitectureSpec, BlockSpec, MANIFEST_KEY, kept_elements
from .errors import ParseError, SolveError, ValidationError
from .importance import Assignment

PARTS = ("conv_layer", "qk", "vproj", "mlp")
PART_RANK = {"conv_layer": 2, "qk": 3, "vproj": 3, "mlp": 2}

JOINT_TENSOR_GUARD = 10**7


@dataclass(frozen=True)
class LatencyTable:
    block_id: int
    part: str
    axes: tuple[str, ...]
    data: np.ndarray  # float64, milliseconds
    layer: int | None = None  # 1-based, conv_layer only

    def validate(self) -> None:
        label = self.label()
        if self.part not in PARTS:
            raise ValidationError(f"{label}: unknown part {self.part!r}")
        if self.part == "conv_layer":
            if self.layer is None or self.layer < 1:
                raise ValidationError(f"{label}: conv_layer tables need a 1-based layer")
        elif self.layer is not None:
            raise ValidationError(f"{label}: only conv_layer tables carry a layer index")
        rank = PART_RANK[self.part]
        if self.data.ndim != rank:
            raise ValidationError(
                f"{label}: expected rank {rank} data, found rank {self.data.ndim}"
            )
        if len(self.axes) != rank:
            raise ValidationError(
                f"{label}: expected {rank} axes, found {len(self.axes)}"
            )
        if not np.all(np.isfinite(self.data)):
            idx = np.argwhere(~np.isfinite(self.data))[0]
            raise ValidationError(f"{label}: non-finite entry at index {tuple(idx)}")
        if np.any(self.data < 0):
            idx = np.argwhere(self.data < 0)[0]
            raise ValidationError(f"{label}: negative entry at index {tuple(idx)}")

    def label(self) -> str:
        if self.part == "conv_layer":
            return f"block {self.block_id} conv_layer {self.layer}"
        return f"block {self.block_id} {self.part}"


class TableSet:
    """All latency tables of one problem, keyed by (block, part, layer)."""

    def __init__(self) -> None:
        self._tables: dict[tuple[int, str, int | None], LatencyTable] = {}

    def add(self, table: LatencyTable) -> None:
        table.validate()
        key = (table.block_id, table.part, table.layer)
        if key in self._tables:
            raise ValidationError(f"duplicate table for {table.label()}")
        self._tables[key] = table

    def conv(self, block_id: int, layer: int) -> LatencyTable | None:
        return self._tables.get((block_id, "conv_layer", layer))

    def part(self, block_id: int, part: str) -> LatencyTable | None:
        return self._tables.get((block_id, part, None))

    def __iter__(self):
        return iter(sorted(self._tables.values(), key=lambda t: (t.block_id, t.part, t.layer or 0)))

    def __len__(self) -> int:
        return len(self._tables)


def block_latency(
    assignment: Assignment, tables: TableSet, arch: ArchitectureSpec, block: BlockSpec
) -> float:
    """Latency of one block for an assignment, ignoring its keep/remove bit."""
    if block.kind == "cnn_chain":
        ref = arch.dim(block.input_ref)
        in_choice = 1 if ref.role == "fixed_external" else assignment.omega[ref.id]
        subtotal = 0.0
        for layer, dim_id in enumerate(block.dims, start=1):
            table = tables.conv(block.id, layer)
            if table is None:
                raise ValidationError(
                    f"block {block.id}: missing conv_layer table for layer {layer}"
                )
            out_choice = assignment.omega[dim_id]
            _check_choice(table, 0, in_choice)
            _check_choice(table, 1, out_choice)
            subtotal += float(table.data[in_choice - 1, out_choice - 1])
            in_choice = out_choice
        return subtotal

    tdims = arch.transformer_dims(block)
    choice = {role: assignment.omega[d.id] for role, d in tdims.items()}
    parts = (
        ("qk", ("emb", "head", "qk")),
        ("vproj", ("emb", "head", "v")),
        ("mlp", ("emb", "mlp")),
    )
    subtotal = 0.0
    for part, roles in parts:
        table = tables.part(block.id, part)
        if table is None:
            raise ValidationError(f"block {block.id}: missing {part} table")
        idx = tuple(choice[r] - 1 for r in roles)
        for axis, r in enumerate(roles):
            _check_choice(table, axis, choice[r])
        subtotal += float(table.data[idx])
    return subtotal


def _check_choice(table: LatencyTable, axis: int, choice: int) -> None:
    if not 1 <= choice <= table.data.shape[axis]:
        raise ValidationError(
            f"{table.label()}: choice {choice} out of range on axis {axis} "
            f"(size {table.data.shape[axis]})"
        )


def constraint_value(
    assignment: Assignment, tables: TableSet, arch: ArchitectureSpec
) -> float:
    """Total latency of an assignment with removed blocks contributing zero.

    Same fixed accumulation order as ``importance.objective_value``.
    """
    total = 0.0
    for block in arch.blocks:
        if assignment.kappa_of(block) == 0:
            continue
        total += block_latency(assignment, tables, arch, block)
    return total


def joint_constraint_value(
    assignment: Assignment,
    full_tables: dict[int, np.ndarray],
    arch: ArchitectureSpec,
) -> float:
    """Evaluate latency from full per-block tensors via one-hot outer products.

    Test-scale oracle only: the expanded mask has as many entries as the
    block tensor, so tensors above {guard} entries are rejected.
    """
    total = 0.0
    for block in arch.blocks:
        if block.id not in full_tables:
            raise ValidationError(f"block {block.id}: missing full latency tensor")
        tensor = np.asarray(full_tables[block.id], dtype=np.float64)
        dims = arch.block_dims(block)
        expected = tuple(d.option_count for d in dims)
        if tensor.shape != expected:
            raise ValidationError(
                f"block {block.id}: full tensor shape {tensor.shape} does not match "
                f"option counts {expected}"
            )
        if tensor.size > JOINT_TENSOR_GUARD:
            raise SolveError(
                f"block {block.id}: full tensor has {tensor.size} entries, "
                f"above the {JOINT_TENSOR_GUARD} joint-evaluation guard"
            )
        onehots = []
        for d in dims:
            v = np.zeros(d.option_count)
            v[assignment.omega[d.id] - 1] = 1.0
            onehots.append(v)
        mask = reduce(np.multiply.outer, onehots)
        total += assignment.kappa_of(block) * float((mask * tensor).sum())
    return total


joint_constraint_value.__doc__ = joint_constraint_value.__doc__.format(
    guard=JOINT_TENSOR_GUARD
)


def embed_decomposed(
    arch: ArchitectureSpec, block: BlockSpec, tables: TableSet
) -> np.ndarray:
    """Sum-embed a block's decomposed tables into one full tensor.

    Only valid for blocks whose first-layer input is fixed_external (a
    cnn_chain fed by another block's conv output has no per-block tensor).
    """
    dims = arch.block_dims(block)
    shape = tuple(d.option_count for d in dims)
    if math.prod(shape) > JOINT_TENSOR_GUARD:
        raise SolveError(f"block {block.id}: full tensor would exceed the guard")
    full = np.zeros(shape)
    if block.kind == "cnn_chain":
        ref = arch.dim(block.input_ref)
        if ref.role != "fixed_external":
            raise ValidationError(
                f"block {block.id}: cannot embed a chain fed by conv_out {ref.id!r}"
            )
        for layer in range(1, len(dims) + 1):
            table = tables.conv(block.id, layer)
            data = table.data[0] if layer == 1 else table.data
            # Broadcast the layer's (in, out) table over the other axes.
            expand = [None] * len(dims)
            if layer == 1:
                expand[0] = slice(None)
            else:
                expand[layer - 2] = slice(None)
                expand[layer - 1] = slice(None)
            full = full + data[tuple(expand)]
    else:
        roles_by_part = {"qk": (0, 1, 2), "vproj": (0, 1, 3), "mlp": (0, 4)}
        for part, axes in roles_by_part.items():
            table = tables.part(block.id, part)
            expand = [None] * len(dims)
            for a in axes:
                expand[a] = slice(None)
            full = full + table.data[tuple(expand)]
    return full


@dataclass(frozen=True)
class LatencyModelParams:
    """Synthetic cost-model knobs standing in for on-hardware measurement."""

    unit_cost: float = 1e-6  # ms per multiply-accumulate equivalent
    overhead: float = 0.01  # ms per kernel launch
    tile: int = 32  # effective sizes round up to multiples of this
    spatial: float = 1.0  # H*W*k^2-style multiplier applied per table

    def validate(self) -> None:
        if self.unit_cost <= 0 or self.overhead <= 0 or self.spatial <= 0:
            raise ValidationError("latency model parameters must be positive")
        if not isinstance(self.tile, int) or self.tile < 1:
            raise ValidationError("tile must be a positive integer")


def _effective(kept: np.ndarray, tile: int) -> np.ndarray:
    return np.ceil(kept / tile) * tile


def synth_lut(
    arch: ArchitectureSpec,
    params: LatencyModelParams,
    seed: int,
    noise: float = 0.02,
) -> TableSet:
    """Generate a full synthetic table set for `arch`.

    Entries follow ``overhead + unit_cost * spatial * prod(effective sizes)``
    where each kept count rounds up to a multiple of ``tile``; tiling creates
    the plateaus that separate two-axis lookups from single-row linear
    estimates.  Multiplicative noise is bounded by `noise` (0 disables it)
    and is deterministic in `seed`.
    """
    params.validate()
    if not 0 <= noise < 1:
        raise ValidationError(f"noise fraction must be in [0, 1), got {noise}")
    rng = np.random.default_rng(seed)
    tables = TableSet()

    def kept_counts(dim) -> np.ndarray:
        return np.array(
            [kept_elements(dim, j) for j in range(1, dim.option_count + 1)], dtype=float
        )

    def finish(data: np.ndarray) -> np.ndarray:
        if noise > 0:
            data = data * (1.0 + noise * rng.uniform(-1.0, 1.0, size=data.shape))
        return data

    for block in arch.blocks:
        if block.kind == "cnn_chain":
            for layer, (din, dout) in enumerate(arch.conv_axes(block), start=1):
                eff_in = _effective(kept_counts(din), params.tile)
                eff_out = _effective(kept_counts(dout), params.tile)
                data = params.overhead + params.unit_cost * params.spatial * (
                    eff_in[:, None] * eff_out[None, :]
                )
                tables.add(
                    LatencyTable(
                        block_id=block.id,
                        part="conv_layer",
                        layer=layer,
                        axes=(din.id, dout.id),
                        data=finish(data),
                    )
                )
        else:
            tdims = arch.transformer_dims(block)
            eff = {r: _effective(kept_counts(d), params.tile) for r, d in tdims.items()}
            part_axes = (
                ("qk", ("emb", "head", "qk")),
                ("vproj", ("emb", "head", "v")),
                ("mlp", ("emb", "mlp")),
            )
            for part, roles in part_axes:
                grids = np.meshgrid(*(eff[r] for r in roles), indexing="ij")
                data = params.overhead + params.unit_cost * params.spatial * reduce(
                    np.multiply, grids
                )
                tables.add(
                    LatencyTable(
                        block_id=block.id,
                        part=part,
                        axes=tuple(tdims[r].id for r in roles),
                        data=finish(data),
                    )
                )
    return tables


def linear_channel_cost(table: LatencyTable, p_prev: int, j: int) -> float:
    """Marginal cost of the j-th output option read from one fixed input row.

    This is the single-row linear model: the cost of step ``j`` is
    ``T(p_prev, j) - T(p_prev, j-1)`` with ``T(., 0)`` defined as zero, i.e.
    only the ``p_prev``-th row of the two-axis table is consulted.
    """
    if table.part != "conv_layer":
        raise ValidationError(f"{table.label()}: linear model applies to conv layers")
    if j < 1:
        raise ValidationError(f"output option {j} must be >= 1")
    _check_choice(table, 0, p_prev)
    _check_choice(table, 1, j)
    row = table.data[p_prev - 1]
    prev = float(row[j - 2]) if j >= 2 else 0.0
    return float(row[j - 1]) - prev


def estimation_error(
    table: LatencyTable, p_prev: int, p_hat: int, j: int
) -> tuple[float, float]:
    """Error of the stale-row marginal cost against the true-row one.

    `p_prev` is the input option remembered from the previous pruning step,
    `p_hat` the true current one (must not exceed `p_prev`).  Returns
    ``(epsilon, bound)`` where epsilon is the absolute marginal-cost error
    and bound is its triangle-inequality envelope built from the two rows.
    """
    if p_hat > p_prev:
        raise ValidationError(
            f"p_hat ({p_hat}) must not exceed p_prev ({p_prev}); pruning only shrinks"
        )
    r_stale = linear_channel_cost(table, p_prev, j)
    r_true = linear_channel_cost(table, p_hat, j)
    epsilon = abs(r_true - r_stale)
    row_prev = table.data[p_prev - 1]
    row_hat = table.data[p_hat - 1]
    at = lambda row, k: float(row[k - 1]) if k >= 1 else 0.0
    bound = abs(at(row_prev, j - 1) - at(row_hat, j - 1)) + abs(
        at(row_prev, j) - at(row_hat, j)
    )
    return epsilon, bound


@dataclass(frozen=True)
class PruneTrajectory:
    """Per-step keep-count configurations of an iterative pruning schedule.

    Each step maps every conv dimension id to its option index after that
    step; the schedule implicitly starts from the dense network (every
    dimension at its last option).  Kept counts may only shrink step over
    step.
    """

    steps: tuple[dict[str, int], ...]

    def validate_for(self, arch: ArchitectureSpec) -> None:
        conv_dims = []
        for block in arch.blocks:
            if block.kind != "cnn_chain":
                raise ValidationError(
                    f"block {block.id}: trajectories only apply to cnn_chain "
                    f"architectures"
                )
            conv_dims.extend(block.dims)
        prev = {d: arch.dim(d).option_count for d in conv_dims}
        for t, step in enumerate(self.steps):
            if set(step) != set(conv_dims):
                raise ValidationError(
                    f"trajectory step {t}: must assign exactly the conv dimensions "
                    f"{sorted(conv_dims)}"
                )
            for d, j in step.items():
                dim = arch.dim(d)
                if not 1 <= j <= dim.option_count:
                    raise ValidationError(
                        f"trajectory step {t}: {d!r} option {j} out of range "
                        f"[1, {dim.option_count}]"
                    )
                if j > prev[d]:
                    raise ValidationError(
                        f"trajectory step {t}: {d!r} grows from option {prev[d]} "
                        f"to {j}; kept counts must be nonincreasing"
                    )
            prev = dict(step)


@dataclass(frozen=True)
class ReplayStep:
    step: int
    true_ms: float
    linear_ms: float
    gap: float
    layer_errors: tuple[tuple[str, float, float], ...]  # (dim_id, epsilon, bound)


def _dense_config(arch: ArchitectureSpec) -> dict[str, int]:
    cfg = {}
    for block in arch.blocks:
        for d in block.dims:
            cfg[d] = arch.dim(d).option_count
    return cfg


def replay_trajectory(
    traj: PruneTrajectory, tables: TableSet, arch: ArchitectureSpec
) -> list[ReplayStep]:
    """Replay a pruning schedule and compare both latency models per step.

    The true latency reads every layer's table at the step's actual (input,
    output) options; the linear estimate reads each layer's row at the input
    option remembered from the previous step.  The gap is zero exactly when
    no layer's input changed in the step.
    """
    traj.validate_for(arch)
    report = []
    prev_cfg = _dense_config(arch)
    for t, step in enumerate(traj.steps):
        asg = Assignment(omega=dict(step), kappa={b.id: 1 for b in arch.blocks if b.removable})
        true_ms = constraint_value(asg, tables, arch)
        linear_ms = 0.0
        layer_errors = []
        for block in arch.blocks:
            ref = arch.dim(block.input_ref)
            for layer, (din, dout) in enumerate(arch.conv_axes(block), start=1):
                table = tables.conv(block.id, layer)
                if din.role == "fixed_external":
                    in_prev = in_now = 1
                else:
                    in_prev = prev_cfg[din.id]
                    in_now = step[din.id]
                out_now = step[dout.id]
                linear_ms += float(table.data[in_prev - 1, out_now - 1])
                eps, bound = estimation_error(table, in_prev, in_now, out_now)
                layer_errors.append((dout.id, eps, bound))
        report.append(
            ReplayStep(
                step=t,
                true_ms=true_ms,
                linear_ms=linear_ms,
                gap=linear_ms - true_ms,
                layer_errors=tuple(layer_errors),
            )
        )
        prev_cfg = dict(step)
    return report


def parse_lut(document: str) -> TableSet:
    """Parse a JSON table-set document.

    Each record holds the header fields {block_id, part, axes, shape}
    (conv_layer records add ``layer``) and a row-major payload in either
    ``data`` (list of numbers) or ``data_b64`` (little-endian float64).
    """
    try:
        obj = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ParseError(f"lut: invalid JSON at line {exc.lineno} "
                         f"column {exc.colno}: {exc.msg}") from None
    if isinstance(obj, dict):
        extra = set(obj) - {"tables", MANIFEST_KEY}
        if extra:
            raise ParseError(f"lut: unknown keys {sorted(extra)}")
        obj = obj.get("tables")
    if not isinstance(obj, list):
        raise ParseError("lut: expected a list of table records")

    tables = TableSet()
    for i, entry in enumerate(obj):
        where = f"lut[{i}]"
        if not isinstance(entry, dict):
            raise ParseError(f"{where}: expected an object")
        keys = set(entry) - {"layer"}
        payload_keys = keys & {"data", "data_b64"}
        if len(payload_keys) != 1:
            raise ParseError(f"{where}: exactly one of data/data_b64 required")
        if keys - {"block_id", "part", "axes", "shape"} - payload_keys:
            raise ParseError(
                f"{where}: unknown keys "
                f"{sorted(keys - {'block_id', 'part', 'axes', 'shape'} - payload_keys)}"
            )
        shape = entry.get("shape")
        if not isinstance(shape, list) or not all(isinstance(s, int) and s > 0 for s in shape):
            raise ParseError(f"{where}: shape must be a list of positive integers")
        if "data" in entry:
            flat = np.asarray(entry["data"], dtype=np.float64)
        else:
            try:
                raw = base64.b64decode(entry["data_b64"], validate=True)
            except Exception:
                raise ParseError(f"{where}: invalid base64 payload") from None
            flat = np.frombuffer(raw, dtype="<f8").astype(np.float64)
        if flat.size != math.prod(shape):
            raise ParseError(
                f"{where}: payload has {flat.size} values, shape {shape} needs "
                f"{math.prod(shape)}"
            )
        table = LatencyTable(
            block_id=entry.get("block_id"),
            part=entry.get("part"),
            axes=tuple(entry.get("axes", ())),
            data=flat.reshape(shape),
            layer=entry.get("layer"),
        )
        try:
            tables.add(table)
        except ValidationError as exc:
            raise ValidationError(f"{where}: {exc}") from None
    return tables


def serialize_lut(
    tables: TableSet, base64_payload: bool = False, manifest: str | None = None
) -> str:
    records = []
    for table in tables:
        record: dict = {
            "block_id": table.block_id,
            "part": table.part,
            "axes": list(table.axes),
            "shape": list(table.data.shape),
        }
        if table.layer is not None:
            record["layer"] = table.layer
        flat = np.ascontiguousarray(table.data, dtype=np.float64).reshape(-1)
        if base64_payload:
            record["data_b64"] = base64.b64encode(flat.astype("<f8").tobytes()).decode()
        else:
            record["data"] = [float(v) for v in flat]
        records.append(record)
    doc: dict = {"tables": records}
    if manifest is not None:
        doc[MANIFEST_KEY] = manifest
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
