"""Architecture description: prunable dimensions, blocks, and state counting.

An architecture is an ordered list of blocks over a table of named
dimensions.  Each dimension carries a ladder of keep-count options: choosing
option ``j`` (1-based) keeps ``min(j * group_size, max_elements)`` elements
along that dimension.  Two block kinds exist:

* ``cnn_chain`` -- an ordered chain of conv output-channel dimensions; each
  layer's input width is the previous layer's output width, and the first
  layer's input width is taken from ``input_ref``.
* ``transformer`` -- exactly five dimensions in the fixed role order
  (emb, head, qk, v, mlp).

Dimensions carried by the residual trunk are declared ``fixed_external``:
they have a single option that keeps the full width and are never pruned.
Blocks marked ``removable`` can be deleted outright, which zeroes both their
importance and latency contributions.

The on-disk format is a JSON object with top-level keys ``name``, ``dims``
and ``blocks`` (see ``parse_architecture``).  Unknown keys are rejected; the
optional ``_manifest`` key is reserved for provenance stamps.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import ParseError, ValidationError

ROLES = ("conv_out", "emb", "head", "qk", "v", "mlp", "fixed_external")
TRANSFORMER_ROLES = ("emb", "head", "qk", "v", "mlp")
BLOCK_KINDS = ("cnn_chain", "transformer")

# Reserved key allowed (and ignored) in every document this package reads.
MANIFEST_KEY = "_manifest"


@dataclass(frozen=True)
class DimensionSpec:
    """One prunable (or fixed) size in the network."""

    id: str
    role: str
    option_count: int
    group_size: int
    max_elements: int

    def validate(self) -> None:
        if self.role not in ROLES:
            raise ValidationError(f"dimension {self.id!r}: unknown role {self.role!r}")
        for field in ("option_count", "group_size", "max_elements"):
            value = getattr(self, field)
            if not isinstance(value, int) or value < 1:
                raise ValidationError(
                    f"dimension {self.id!r}: {field} must be a positive integer, got {value!r}"
                )
        # Guarantees options are strictly increasing: only the last one may clamp.
        if self.option_count * self.group_size > self.max_elements + self.group_size - 1:
            raise ValidationError(
                f"dimension {self.id!r}: option_count*group_size exceeds "
                f"max_elements+group_size-1 "
                f"({self.option_count}*{self.group_size} > "
                f"{self.max_elements}+{self.group_size}-1)"
            )
        if self.role == "fixed_external":
            if self.option_count != 1:
                raise ValidationError(
                    f"dimension {self.id!r}: fixed_external requires option_count=1"
                )
            if self.group_size < self.max_elements:
                raise ValidationError(
                    f"dimension {self.id!r}: fixed_external requires group_size >= "
                    f"max_elements so its single option keeps the full width"
                )


def kept_elements(dim: DimensionSpec, option_index: int) -> int:
    """Number of elements kept when `dim` takes `option_index` (1-based)."""
    if not 1 <= option_index <= dim.option_count:
        raise ValidationError(
            f"dimension {dim.id!r}: option index {option_index} out of range "
            f"[1, {dim.option_count}]"
        )
    return min(option_index * dim.group_size, dim.max_elements)


@dataclass(frozen=True)
class BlockSpec:
    """A residually skipped group of layers; the unit of whole removal."""

    id: int
    kind: str
    dims: tuple[str, ...]
    removable: bool
    input_ref: str | None = None


@dataclass(frozen=True)
class ArchitectureSpec:
    name: str
    blocks: tuple[BlockSpec, ...]
    dims: dict[str, DimensionSpec]

    def dim(self, dim_id: str) -> DimensionSpec:
        try:
            return self.dims[dim_id]
        except KeyError:
            raise ValidationError(f"unknown dimension {dim_id!r}") from None

    def block_dims(self, block: BlockSpec) -> list[DimensionSpec]:
        return [self.dim(d) for d in block.dims]

    def owner_block(self, dim_id: str) -> BlockSpec | None:
        for block in self.blocks:
            if dim_id in block.dims:
                return block
        return None

    def conv_axes(self, block: BlockSpec) -> list[tuple[DimensionSpec, DimensionSpec]]:
        """(input, output) dimension pair for each layer of a cnn_chain."""
        if block.kind != "cnn_chain":
            raise ValidationError(f"block {block.id}: not a cnn_chain")
        pairs = []
        prev = self.dim(block.input_ref)
        for dim_id in block.dims:
            out = self.dim(dim_id)
            pairs.append((prev, out))
            prev = out
        return pairs

    def transformer_dims(self, block: BlockSpec) -> dict[str, DimensionSpec]:
        if block.kind != "transformer":
            raise ValidationError(f"block {block.id}: not a transformer")
        return {role: self.dim(d) for role, d in zip(TRANSFORMER_ROLES, block.dims)}

    def validate(self) -> None:
        if not isinstance(self.name, str) or not self.name:
            raise ValidationError("architecture name must be a non-empty string")
        for dim in self.dims.values():
            dim.validate()

        owners: dict[str, int] = {}
        for pos, block in enumerate(self.blocks, start=1):
            if block.id != pos:
                raise ValidationError(
                    f"block ids must be 1..B consecutive; found id {block.id} at "
                    f"position {pos}"
                )
            if block.kind not in BLOCK_KINDS:
                raise ValidationError(f"block {block.id}: unknown kind {block.kind!r}")
            if not block.dims:
                raise ValidationError(f"block {block.id}: empty dims list")
            for dim_id in block.dims:
                if dim_id not in self.dims:
                    raise ValidationError(
                        f"block {block.id}: references undeclared dimension {dim_id!r}"
                    )
                if dim_id in owners:
                    raise ValidationError(
                        f"dimension {dim_id!r} belongs to both block {owners[dim_id]} "
                        f"and block {block.id}"
                    )
                owners[dim_id] = block.id

            if block.kind == "transformer":
                if block.input_ref is not None:
                    raise ValidationError(
                        f"block {block.id}: transformer blocks take no input_ref"
                    )
                roles = tuple(self.dims[d].role for d in block.dims)
                if roles != TRANSFORMER_ROLES:
                    raise ValidationError(
                        f"block {block.id}: transformer blocks need exactly 5 dims "
                        f"with roles {TRANSFORMER_ROLES}, found {roles}"
                    )
            else:
                for dim_id in block.dims:
                    if self.dims[dim_id].role != "conv_out":
                        raise ValidationError(
                            f"block {block.id}: cnn_chain dims must have role "
                            f"conv_out, but {dim_id!r} has role "
                            f"{self.dims[dim_id].role!r}"
                        )
                if block.input_ref is None:
                    raise ValidationError(f"block {block.id}: cnn_chain needs input_ref")
                if block.input_ref not in self.dims:
                    raise ValidationError(
                        f"block {block.id}: input_ref references undeclared "
                        f"dimension {block.input_ref!r}"
                    )
                ref = self.dims[block.input_ref]
                if ref.role not in ("conv_out", "fixed_external"):
                    raise ValidationError(
                        f"block {block.id}: input_ref {ref.id!r} must have role "
                        f"conv_out or fixed_external, found {ref.role!r}"
                    )

        # Second pass: input_ref ordering, and no free prunable dimensions.
        for block in self.blocks:
            if block.kind != "cnn_chain":
                continue
            ref = self.dims[block.input_ref]
            if ref.role == "conv_out":
                owner = owners.get(ref.id)
                if owner is None:
                    raise ValidationError(
                        f"block {block.id}: input_ref {ref.id!r} is a conv_out "
                        f"dimension owned by no block"
                    )
                if owner >= block.id:
                    raise ValidationError(
                        f"block {block.id}: input_ref {ref.id!r} must be declared "
                        f"earlier in topology order (owned by block {owner})"
                    )
                # Removing the producer would disconnect this chain, so direct
                # conv-to-conv feeds are only allowed from permanent blocks.
                producer = self.blocks[owner - 1]
                if producer.removable:
                    raise ValidationError(
                        f"block {block.id}: input_ref {ref.id!r} is owned by "
                        f"removable block {owner}; route removable outputs through "
                        f"a fixed_external trunk dimension instead"
                    )
        for dim in self.dims.values():
            if dim.role != "fixed_external" and dim.id not in owners:
                raise ValidationError(
                    f"dimension {dim.id!r} (role {dim.role!r}) belongs to no block; "
                    f"only fixed_external dimensions may float free"
                )


def _require_keys(obj: dict, required: set[str], optional: set[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: expected an object, got {type(obj).__name__}")
    keys = set(obj)
    missing = required - keys
    if missing:
        raise ParseError(f"{where}: missing keys {sorted(missing)}")
    unknown = keys - required - optional - {MANIFEST_KEY}
    if unknown:
        raise ParseError(f"{where}: unknown keys {sorted(unknown)}")


def architecture_from_obj(obj: dict) -> ArchitectureSpec:
    _require_keys(obj, {"name", "dims", "blocks"}, set(), "architecture")
    if not isinstance(obj["dims"], list) or not isinstance(obj["blocks"], list):
        raise ParseError("architecture: 'dims' and 'blocks' must be lists")

    dims: dict[str, DimensionSpec] = {}
    for i, entry in enumerate(obj["dims"]):
        where = f"dims[{i}]"
        _require_keys(
            entry,
            {"id", "role", "option_count", "group_size", "max_elements"},
            set(),
            where,
        )
        if not isinstance(entry["id"], str):
            raise ParseError(f"{where}: id must be a string")
        if entry["id"] in dims:
            raise ValidationError(f"{where}: duplicate dimension id {entry['id']!r}")
        dims[entry["id"]] = DimensionSpec(
            id=entry["id"],
            role=entry["role"],
            option_count=entry["option_count"],
            group_size=entry["group_size"],
            max_elements=entry["max_elements"],
        )

    blocks = []
    for i, entry in enumerate(obj["blocks"]):
        where = f"blocks[{i}]"
        _require_keys(entry, {"id", "kind", "removable", "dims"}, {"input_ref"}, where)
        if not isinstance(entry["dims"], list) or not all(
            isinstance(d, str) for d in entry["dims"]
        ):
            raise ParseError(f"{where}: dims must be a list of dimension ids")
        if not isinstance(entry["removable"], bool):
            raise ParseError(f"{where}: removable must be a boolean")
        blocks.append(
            BlockSpec(
                id=entry["id"],
                kind=entry["kind"],
                dims=tuple(entry["dims"]),
                removable=entry["removable"],
                input_ref=entry.get("input_ref"),
            )
        )

    arch = ArchitectureSpec(name=obj["name"], blocks=tuple(blocks), dims=dims)
    arch.validate()
    return arch


def parse_architecture(document: str) -> ArchitectureSpec:
    """Parse and validate a JSON architecture document."""
    try:
        obj = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ParseError(f"architecture: invalid JSON at line {exc.lineno} "
                         f"column {exc.colno}: {exc.msg}") from None
    return architecture_from_obj(obj)


def architecture_to_obj(arch: ArchitectureSpec) -> dict:
    return {
        "name": arch.name,
        "dims": [
            {
                "id": d.id,
                "role": d.role,
                "option_count": d.option_count,
                "group_size": d.group_size,
                "max_elements": d.max_elements,
            }
            for d in arch.dims.values()
        ],
        "blocks": [
            {
                "id": b.id,
                "kind": b.kind,
                "removable": b.removable,
                "dims": list(b.dims),
                **({"input_ref": b.input_ref} if b.input_ref is not None else {}),
            }
            for b in arch.blocks
        ],
    }


def serialize_architecture(arch: ArchitectureSpec) -> str:
    return json.dumps(architecture_to_obj(arch), indent=2, sort_keys=True) + "\n"


def subnetwork_count(arch: ArchitectureSpec) -> int:
    """Count distinct extractable structures.

    Per block this is the product of its dimensions' option counts, plus one
    extra all-removed state when the block is removable (the dimension
    choices of a removed block are ignored at extraction).
    """
    total = 1
    for block in arch.blocks:
        states = math.prod(arch.dim(d).option_count for d in block.dims)
        if block.removable:
            states += 1
        total *= states
    return total


def validate_problem_shapes(arch: ArchitectureSpec, tables, vectors) -> None:
    """Check that importance vectors and latency tables match `arch`.

    `tables` must expose ``conv(block_id, layer)`` and ``part(block_id, part)``
    lookups returning objects with ``axes`` and ``data`` (or None when
    absent); `vectors` maps dimension id to an object with ``values``.
    """
    for dim in arch.dims.values():
        vec = vectors.get(dim.id)
        if vec is None:
            raise ValidationError(f"missing importance vector for dimension {dim.id!r}")
        if len(vec.values) != dim.option_count:
            raise ValidationError(
                f"importance vector for {dim.id!r}: expected length "
                f"{dim.option_count}, found {len(vec.values)}"
            )

    for block in arch.blocks:
        if block.kind == "cnn_chain":
            for layer, (din, dout) in enumerate(arch.conv_axes(block), start=1):
                table = tables.conv(block.id, layer)
                if table is None:
                    raise ValidationError(
                        f"block {block.id}: missing conv_layer table for layer {layer}"
                    )
                _check_axes(block.id, f"conv_layer {layer}", table, (din, dout))
        else:
            tdims = arch.transformer_dims(block)
            expected = {
                "qk": (tdims["emb"], tdims["head"], tdims["qk"]),
                "vproj": (tdims["emb"], tdims["head"], tdims["v"]),
                "mlp": (tdims["emb"], tdims["mlp"]),
            }
            for part, axes in expected.items():
                table = tables.part(block.id, part)
                if table is None:
                    raise ValidationError(
                        f"block {block.id}: missing {part} table"
                    )
                _check_axes(block.id, part, table, axes)


def _check_axes(block_id: int, label: str, table, expected_dims) -> None:
    expected_ids = tuple(d.id for d in expected_dims)
    if tuple(table.axes) != expected_ids:
        raise ValidationError(
            f"block {block_id}: {label} table axes {tuple(table.axes)} do not "
            f"match expected dimensions {expected_ids}"
        )
    for axis, dim in enumerate(expected_dims):
        found = table.data.shape[axis]
        if found != dim.option_count:
            raise ValidationError(
                f"block {block_id}: {label} table axis {axis} ({dim.id!r}): "
                f"expected {dim.option_count}, found {found}"
            )
