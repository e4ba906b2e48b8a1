"""Analytical hardware descriptor.

A descriptor is the only thing that has to change when retargeting the
tuner: core count, register and shared-memory budgets, the bandwidths of
the two memory hierarchies, peak FLOP rate, and the tile alignment the
memory system rewards. All derived quantities are plain ratios of these
numbers, so bandwidths are bytes/s, compute is FLOP/s, and every derived
time is in seconds.

Descriptors are frozen after construction and safe to share between
concurrent tuning tasks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import InputError

_INT_FIELDS = (
    "num_cores",
    "regs_per_core",
    "smem_per_core_bytes",
    "global_bw_bytes_per_s",
    "shared_bw_bytes_per_s",
    "peak_flops",
    "default_active_blocks",
    "active_blocks_per_core",
    "align_elems",
)


@dataclass(frozen=True)
class HardwareDescriptor:
    """Machine model consumed by every analytical metric."""

    name: str
    num_cores: int
    regs_per_core: int
    smem_per_core_bytes: int
    global_bw_bytes_per_s: int
    shared_bw_bytes_per_s: int
    peak_flops: int
    default_active_blocks: int
    active_blocks_per_core: int
    align_elems: int

    def __post_init__(self):
        if not self.name or not isinstance(self.name, str):
            raise InputError("descriptor field 'name' must be a non-empty string", field="name")
        for f in _INT_FIELDS:
            value = getattr(self, f)
            if isinstance(value, bool) or not isinstance(value, int):
                raise InputError(f"descriptor field '{f}' must be an integer", field=f)
            if value <= 0:
                raise InputError(f"descriptor field '{f}' must be strictly positive, got {value}", field=f)
        a = self.align_elems
        if a & (a - 1) != 0:
            raise InputError(f"descriptor field 'align_elems' must be a power of two, got {a}", field="align_elems")

    @property
    def total_active_blocks(self) -> int:
        """Blocks simultaneously resident across the whole device (one wave)."""
        return self.num_cores * self.active_blocks_per_core

    def to_doc(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def load_hardware_descriptor(document: str | bytes | dict) -> HardwareDescriptor:
    """Parse and validate a descriptor from JSON text or an already-parsed tree.

    Unknown fields are rejected; every error names the offending field.
    """
    if isinstance(document, (str, bytes)):
        try:
            tree = json.loads(document)
        except json.JSONDecodeError as exc:
            raise InputError(f"malformed hardware descriptor document: {exc}") from exc
    else:
        tree = document
    if not isinstance(tree, dict):
        raise InputError("hardware descriptor document must be a JSON object")

    known = {"name", *_INT_FIELDS}
    unknown = sorted(set(tree) - known)
    if unknown:
        raise InputError(f"unknown hardware descriptor field '{unknown[0]}'", field=unknown[0])
    missing = sorted(known - set(tree))
    if missing:
        raise InputError(f"missing hardware descriptor field '{missing[0]}'", field=missing[0])
    return HardwareDescriptor(**tree)


def load_hardware_file(path: str | Path) -> HardwareDescriptor:
    path = Path(path)
    if not path.exists():
        raise InputError(f"hardware descriptor file not found: {path}", field="hardware")
    return load_hardware_descriptor(path.read_text())


def serialize_hardware_descriptor(descriptor: HardwareDescriptor) -> str:
    """Canonical form: sorted keys, two-space indent, trailing newline."""
    return canonical_document(descriptor.to_doc())


def canonical_document(tree: dict) -> str:
    """Canonical serialization used for round-trip identity on documents."""
    return json.dumps(tree, sort_keys=True, indent=2) + "\n"
