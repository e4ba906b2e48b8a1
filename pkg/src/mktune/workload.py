"""Declarative operator model and data-volume accounting.

An operator is a perfectly nested loop over named axes. Space axes index
the output; reduce axes accumulate. Tensor accesses are affine
projections of the loop indices (each access names the subset of axes it
reads or writes). Dynamic axes carry an inclusive candidate range and are
bound to concrete extents by a ``WorkloadInstance``.

Data-volume accounting model (``volumes-1``)
--------------------------------------------
For a tile configuration with shared-memory tiles ``t_a`` and register
tiles ``r_s`` (space axes only), blocks tile the covered output space:
``blocks = prod_s ceil(E_s / t_s)``. Each block makes one pass per
reduce-axis tile of each input it references.

* ``data_R`` (global reads): per block and pass, each input stages its
  shared-memory tile footprint, so per input
  ``prod(t_a, a in access) * prod(ceil(E_r / t_r), r in access's reduce axes)``
  summed over inputs, times ``blocks * elem_bytes``.
* ``data_W`` (global writes): every true output element is written once:
  ``prod(E_s) * elem_bytes``, independent of tiling.
* ``data_transW`` (shared-memory writes): every global read is staged
  through shared memory, so ``data_transW == data_R``.
* ``data_transR`` (shared-memory reads): per pass, each register-tile
  strip re-reads the input's space-projected footprint: per input
  ``prod(t_s, s in access's space axes) * prod(t_s / r_s, space axes not
  in the access) * passes``, summed over inputs, times
  ``blocks * elem_bytes``. Halving a reduce tile doubles the pass count
  and therefore doubles ``data_transR``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

from .errors import InputError

if TYPE_CHECKING:  # pragma: no cover
    from .ukernel import UKernel

ACCOUNTING_VERSION = "volumes-1"

SPACE = "space"
REDUCE = "reduce"


def ceil_div(a, b):
    """Ceiling division; works on ints and numpy integer arrays."""
    return -(-a // b)


def round_up(x, multiple):
    """Smallest multiple of `multiple` that is >= x."""
    return ceil_div(x, multiple) * multiple


@dataclass(frozen=True)
class AxisSpec:
    """One loop axis: fixed extent, or dynamic with an inclusive range."""

    name: str
    kind: str
    extent: int | None = None
    range: tuple[int, int] | None = None

    def __post_init__(self):
        if self.kind not in (SPACE, REDUCE):
            raise InputError(f"axis '{self.name}': kind must be 'space' or 'reduce', got {self.kind!r}", field="kind")
        if (self.extent is None) == (self.range is None):
            raise InputError(f"axis '{self.name}': exactly one of extent or range is required", field="extent")
        if self.extent is not None and self.extent < 1:
            raise InputError(f"axis '{self.name}': extent must be >= 1, got {self.extent}", field="extent")
        if self.range is not None:
            lo, hi = self.range
            if lo < 1 or lo > hi:
                raise InputError(f"axis '{self.name}': range must satisfy 1 <= lo <= hi, got [{lo}, {hi}]", field="range")

    @property
    def is_dynamic(self) -> bool:
        return self.range is not None


@dataclass(frozen=True)
class TensorAccess:
    """Affine projection of the loop nest onto one tensor."""

    tensor: str
    axes: tuple[str, ...]
    role: str

    def __post_init__(self):
        if self.role not in ("input", "output"):
            raise InputError(f"access '{self.tensor}': role must be 'input' or 'output', got {self.role!r}", field="role")
        if len(set(self.axes)) != len(self.axes):
            raise InputError(f"access '{self.tensor}': repeated axis in projection", field="axes")


@dataclass(frozen=True)
class OperatorSpec:
    """A nested-loop operator: axes, tensor accesses, and cost constants."""

    name: str
    axes: tuple[AxisSpec, ...]
    accesses: tuple[TensorAccess, ...]
    elem_bytes: int = 4
    flops_per_point: int = 2

    def __post_init__(self):
        names = [a.name for a in self.axes]
        if len(set(names)) != len(names):
            raise InputError(f"operator '{self.name}': axis names must be unique", field="axes")
        if self.elem_bytes < 1:
            raise InputError(f"operator '{self.name}': elem_bytes must be >= 1", field="elem_bytes")
        if self.flops_per_point < 1:
            raise InputError(f"operator '{self.name}': flops_per_point must be >= 1", field="flops_per_point")
        if not self.space_axes or not self.reduce_axes:
            raise InputError(
                f"operator '{self.name}': needs at least one space axis and one reduce axis", field="axes"
            )
        dynamic = [a.name for a in self.axes if a.is_dynamic]
        if len(dynamic) > 4:
            raise InputError(f"operator '{self.name}': at most four dynamic axes are supported", field="axes")

        known = set(names)
        outputs = [a for a in self.accesses if a.role == "output"]
        if len(outputs) != 1:
            raise InputError(f"operator '{self.name}': exactly one output access is required", field="accesses")
        for acc in self.accesses:
            for ax in acc.axes:
                if ax not in known:
                    raise InputError(f"access '{acc.tensor}': unknown axis '{ax}'", field="axes")
        out = outputs[0]
        space = set(self.space_axes)
        if set(out.axes) != space:
            raise InputError(
                f"output access '{out.tensor}' must reference exactly the space axes", field="accesses"
            )

    @property
    def space_axes(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.axes if a.kind == SPACE)

    @property
    def reduce_axes(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.axes if a.kind == REDUCE)

    @property
    def dynamic_axes(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.axes if a.is_dynamic)

    @property
    def output_access(self) -> TensorAccess:
        return next(a for a in self.accesses if a.role == "output")

    @property
    def input_accesses(self) -> tuple[TensorAccess, ...]:
        return tuple(a for a in self.accesses if a.role == "input")

    def axis(self, name: str) -> AxisSpec:
        for a in self.axes:
            if a.name == name:
                return a
        raise KeyError(name)

    def to_doc(self) -> dict:
        axes = []
        for a in self.axes:
            entry = {"name": a.name, "kind": a.kind}
            if a.is_dynamic:
                entry["range"] = list(a.range)
            else:
                entry["extent"] = a.extent
            axes.append(entry)
        return {
            "name": self.name,
            "axes": axes,
            "accesses": [{"tensor": a.tensor, "axes": list(a.axes), "role": a.role} for a in self.accesses],
            "elem_bytes": self.elem_bytes,
            "flops_per_point": self.flops_per_point,
        }


@dataclass(frozen=True)
class WorkloadInstance:
    """An operator with every dynamic axis bound to a concrete extent."""

    spec: OperatorSpec
    bindings: dict = field(default_factory=dict)

    def __post_init__(self):
        for a in self.spec.axes:
            if a.is_dynamic:
                if a.name not in self.bindings:
                    raise InputError(f"dynamic axis '{a.name}' is not bound", field=a.name)
                value = self.bindings[a.name]
                lo, hi = a.range
                if not isinstance(value, int) or not (lo <= value <= hi):
                    raise InputError(
                        f"binding for axis '{a.name}' must be an integer in [{lo}, {hi}], got {value}",
                        field=a.name,
                    )
        extra = sorted(set(self.bindings) - set(self.spec.dynamic_axes))
        if extra:
            raise InputError(f"binding for non-dynamic axis '{extra[0]}'", field=extra[0])

    def extent(self, axis: str) -> int:
        a = self.spec.axis(axis)
        return self.bindings[axis] if a.is_dynamic else a.extent

    @property
    def extents(self) -> dict:
        return {a.name: self.extent(a.name) for a in self.spec.axes}

    def binding_key(self) -> str:
        """Canonical string identifying the bound shape, e.g. 'i=53'."""
        return ",".join(f"{k}={self.bindings[k]}" for k in sorted(self.bindings))


def parse_workload(document: str | bytes | dict) -> OperatorSpec:
    """Parse and validate an operator document (JSON text or parsed tree)."""
    if isinstance(document, (str, bytes)):
        try:
            tree = json.loads(document)
        except json.JSONDecodeError as exc:
            raise InputError(f"malformed workload document: {exc}") from exc
    else:
        tree = document
    if not isinstance(tree, dict):
        raise InputError("workload document must be a JSON object")

    known = {"name", "axes", "accesses", "elem_bytes", "flops_per_point"}
    unknown = sorted(set(tree) - known)
    if unknown:
        raise InputError(f"unknown workload field '{unknown[0]}'", field=unknown[0])
    for required in ("name", "axes", "accesses"):
        if required not in tree:
            raise InputError(f"missing workload field '{required}'", field=required)

    axes = []
    for entry in tree["axes"]:
        rng = entry.get("range")
        axes.append(
            AxisSpec(
                name=entry.get("name", ""),
                kind=entry.get("kind", ""),
                extent=entry.get("extent"),
                range=tuple(rng) if rng is not None else None,
            )
        )
    accesses = tuple(
        TensorAccess(tensor=e.get("tensor", ""), axes=tuple(e.get("axes", ())), role=e.get("role", ""))
        for e in tree["accesses"]
    )
    return OperatorSpec(
        name=tree["name"],
        axes=tuple(axes),
        accesses=accesses,
        elem_bytes=tree.get("elem_bytes", 4),
        flops_per_point=tree.get("flops_per_point", 2),
    )


def load_workload_file(path: str | Path) -> OperatorSpec:
    path = Path(path)
    if not path.exists():
        raise InputError(f"workload file not found: {path}", field="workload")
    return parse_workload(path.read_text())


def workload_hash(spec: OperatorSpec) -> str:
    """Stable hash of the operator document, embedded in every output file."""
    blob = json.dumps(spec.to_doc(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def flops(instance: WorkloadInstance) -> int:
    """Total floating-point operations for the true (unpadded) shape."""
    total = instance.spec.flops_per_point
    for a in instance.spec.axes:
        total *= instance.extent(a.name)
    return total


def per_block_volumes(instance: WorkloadInstance, k: "UKernel") -> dict:
    """Per-block element counts under tile configuration `k`.

    ``read_elems``: elements staged from global into shared memory across
    all reduce passes; ``trans_read_elems``: shared-memory reads into
    registers across all passes. Both follow the accounting model in the
    module docstring and are multiplied by a block count and the element
    size by the callers.
    """
    spec = instance.spec
    space = spec.space_axes
    reduce_axes = spec.reduce_axes

    read_elems = 0
    trans_read_elems = 0
    for acc in spec.input_accesses:
        acc_axes = set(acc.axes)
        staged = 1
        strip = 1
        for s in space:
            if s in acc_axes:
                staged *= k.smem_tile[s]
                strip *= k.smem_tile[s]
            else:
                strip *= k.smem_tile[s] // k.reg_tile[s]
        passes = 1
        for r in reduce_axes:
            if r in acc_axes:
                passes *= ceil_div(instance.extent(r), k.smem_tile[r])
                staged *= k.smem_tile[r]
        read_elems += staged * passes
        trans_read_elems += strip * passes
    return {"read_elems": read_elems, "trans_read_elems": trans_read_elems}


def data_volumes(instance: WorkloadInstance, k: "UKernel") -> dict:
    """Whole-workload traffic, in bytes, under tile configuration `k`.

    Returns ``{"data_R", "data_W", "data_transR", "data_transW"}`` per the
    accounting model in the module docstring.
    """
    spec = instance.spec
    elem = spec.elem_bytes

    blocks = 1
    for s in spec.space_axes:
        blocks *= ceil_div(instance.extent(s), k.smem_tile[s])

    per_block = per_block_volumes(instance, k)
    out_elems = 1
    for s in spec.space_axes:
        out_elems *= instance.extent(s)

    data_r = per_block["read_elems"] * blocks * elem
    return {
        "data_R": data_r,
        "data_W": out_elems * elem,
        "data_transR": per_block["trans_read_elems"] * blocks * elem,
        "data_transW": data_r,
    }
