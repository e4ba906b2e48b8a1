"""Micro-kernel tiles and hardware-aligned candidate enumeration.

A ``UKernel`` is one tile configuration at two memory levels: register
tiles (per space axis) nested inside shared-memory tiles (space and
reduce axes), plus three cached per-instance metrics filled in by the
metrics stage. One uKernel corresponds to one thread block.

Enumeration rules:

* Register tiles are the divisors of the axis extent; when the extent is
  prime and larger than the alignment width, the divisors of the two
  adjacent numbers are added so a near-miss tile grid stays available.
* Shared-memory tiles on space axes are integer multiples of the chosen
  register tile, up to the smallest multiple covering the axis. The major
  axis (the innermost contiguous axis of the output) must additionally be
  a multiple of ``align_elems``; reduce-axis tiles are multiples of
  ``align_elems`` up to the reduce extent.
* Every candidate's staged input footprint must fit shared memory.

Candidate sets can run into the millions for large extents, so
``enumerate_ukernels`` keeps them columnar (one numpy row per candidate)
and materializes ``UKernel`` objects lazily. Ordering is canonical:
lexicographic by (register-tile vector, shared-memory-tile vector), and a
configurable cap truncates deterministically in that order.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from itertools import product as iter_product
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import CapacityError, InputError, MissingMetricsError
from .hardware import HardwareDescriptor
from .workload import WorkloadInstance, ceil_div

logger = logging.getLogger(__name__)

DEFAULT_CANDIDATE_CAP = 1 << 21

# Grid cells processed per chunk while building the capacity mask.
_MASK_CHUNK_CELLS = 1 << 23


@dataclass
class UKernel:
    """One tile configuration plus its cached per-instance metrics."""

    reg_tile: dict
    smem_tile: dict
    padding_threshold: float | None = None
    usage_eff: float | None = None
    compute_eff: float | None = None

    def tile_key(self, space_axes: Sequence[str], axis_names: Sequence[str]) -> tuple:
        """Canonical sort key: register tiles then shared-memory tiles."""
        return (
            tuple(self.reg_tile[a] for a in space_axes),
            tuple(self.smem_tile[a] for a in axis_names),
        )


def divisors(n: int) -> list[int]:
    """All positive divisors of n, ascending."""
    if n < 1:
        raise InputError(f"divisors() needs a positive integer, got {n}")
    small, large = [], []
    d = 1
    while d * d <= n:
        if n % d == 0:
            small.append(d)
            if d != n // d:
                large.append(n // d)
        d += 1
    return small + large[::-1]


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    d = 2
    while d * d <= n:
        if n % d == 0:
            return False
        d += 1
    return True


def default_major_axis(spec) -> str:
    """Innermost contiguous axis of the output under row-major layout."""
    return spec.output_access.axes[-1]


def reg_tile_candidates(axis_extent: int, align_elems: int = 8) -> list[int]:
    """Register-tile extents for one axis: its divisors, widened for primes.

    A prime extent above the alignment width has only trivial divisors, so
    the divisors of the two adjacent numbers are included as well.
    """
    if axis_extent < 1:
        raise InputError(f"axis extent must be >= 1, got {axis_extent}")
    values = set(divisors(axis_extent))
    if axis_extent > align_elems and _is_prime(axis_extent):
        values.update(divisors(axis_extent - 1))
        values.update(divisors(axis_extent + 1))
    return sorted(values)


def space_tile_options(extent: int, reg: int, align_elems: int, is_major: bool) -> list[int]:
    """Shared-memory tile options for a space axis, ascending.

    Multiples of the register tile (of lcm(reg, align) on the major axis)
    up to the smallest multiple covering the extent.
    """
    step = math.lcm(reg, align_elems) if is_major else reg
    count = ceil_div(extent, step)
    return list(range(step, step * count + 1, step))


def reduce_tile_options(extent: int, align_elems: int) -> list[int]:
    """Shared-memory tile options for a reduce axis, ascending.

    Multiples of the alignment width up to the extent; when the extent is
    below one alignment unit, the single covering multiple is used so the
    set is never empty.
    """
    if extent < align_elems:
        return [align_elems]
    return list(range(align_elems, (extent // align_elems) * align_elems + 1, align_elems))


def staged_footprint_bytes(spec, smem_tile: Mapping) -> int:
    """Bytes of shared memory needed to stage all inputs for one pass."""
    total = 0
    for acc in spec.input_accesses:
        per_input = 1
        for ax in acc.axes:
            per_input *= smem_tile[ax]
        total += per_input
    return total * spec.elem_bytes


def check_ukernel(
    k: UKernel,
    instance: WorkloadInstance,
    hw: HardwareDescriptor,
    major_axis: str | None = None,
) -> None:
    """Validate the three uKernel invariants; raise InputError on violation."""
    spec = instance.spec
    major = major_axis or default_major_axis(spec)
    for s in spec.space_axes:
        if k.smem_tile[s] % k.reg_tile[s] != 0:
            raise InputError(
                f"register tile {k.reg_tile[s]} does not divide shared-memory tile "
                f"{k.smem_tile[s]} on axis '{s}'",
                field=s,
            )
    if k.smem_tile[major] % hw.align_elems != 0:
        raise InputError(
            f"major-axis tile {k.smem_tile[major]} is not a multiple of align_elems={hw.align_elems}",
            field=major,
        )
    footprint = staged_footprint_bytes(spec, k.smem_tile)
    if footprint > hw.smem_per_core_bytes:
        raise InputError(
            f"staged footprint {footprint} B exceeds shared memory capacity {hw.smem_per_core_bytes} B",
            field="smem_per_core_bytes",
        )


def smem_tile_candidates(
    reg_tile: Mapping,
    instance: WorkloadInstance,
    hw: HardwareDescriptor,
    major_axis: str | None = None,
) -> list[dict]:
    """All shared-memory tile maps valid for `reg_tile`, canonical order.

    Walks per-axis options in increasing footprint and stops a scale-up
    direction once capacity is exceeded.
    """
    spec = instance.spec
    major = major_axis or default_major_axis(spec)
    axes = list(spec.space_axes) + list(spec.reduce_axes)
    options = []
    for ax in spec.space_axes:
        options.append(space_tile_options(instance.extent(ax), reg_tile[ax], hw.align_elems, ax == major))
    for ax in spec.reduce_axes:
        options.append(reduce_tile_options(instance.extent(ax), hw.align_elems))

    minima = [opts[0] for opts in options]
    results: list[dict] = []

    def walk(idx: int, tile: dict):
        if idx == len(axes):
            results.append(dict(tile))
            return
        for value in options[idx]:
            tile[axes[idx]] = value
            # Complete the remaining axes with their smallest options: if even
            # that overflows, larger values at this level overflow too.
            probe = dict(tile)
            for j in range(idx + 1, len(axes)):
                probe[axes[j]] = minima[j]
            if staged_footprint_bytes(spec, probe) > hw.smem_per_core_bytes:
                break
            walk(idx + 1, tile)
        tile.pop(axes[idx], None)

    walk(0, {})
    return results


class CandidateSet:
    """Columnar set of uKernel candidates for one workload instance.

    Rows are stored as numpy columns (`reg` per space axis, `smem` per
    axis); metric columns are attached progressively by the metrics and
    filter stages. Behaves as a sequence of ``UKernel``.
    """

    def __init__(
        self,
        instance: WorkloadInstance,
        hw: HardwareDescriptor,
        major_axis: str,
        reg: np.ndarray,
        smem: np.ndarray,
        truncated: bool = False,
        columns: dict | None = None,
    ):
        self.instance = instance
        self.hw = hw
        self.major_axis = major_axis
        self.reg = reg
        self.smem = smem
        self.truncated = truncated
        self.columns = columns if columns is not None else {}

    @property
    def space_axes(self) -> tuple[str, ...]:
        return self.instance.spec.space_axes

    @property
    def axis_names(self) -> tuple[str, ...]:
        spec = self.instance.spec
        return tuple(spec.space_axes) + tuple(spec.reduce_axes)

    def __len__(self) -> int:
        return self.reg.shape[0]

    def __getitem__(self, i: int) -> UKernel:
        reg = {a: int(self.reg[i, j]) for j, a in enumerate(self.space_axes)}
        smem = {a: int(self.smem[i, j]) for j, a in enumerate(self.axis_names)}
        k = UKernel(reg_tile=reg, smem_tile=smem)
        cols = self.columns
        if "pad_num" in cols:
            k.padding_threshold = float(cols["pad_num"][i] / cols["pad_den"][i])
            k.usage_eff = float(cols["blocks"][i] / cols["occ_den"][i])
        if "cmr" in cols:
            k.compute_eff = float(cols["cmr"][i])
        return k

    def __iter__(self) -> Iterator[UKernel]:
        for i in range(len(self)):
            yield self[i]

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise MissingMetricsError(f"metric column '{name}' has not been computed")
        return self.columns[name]

    def subset(self, index: np.ndarray) -> "CandidateSet":
        return CandidateSet(
            self.instance,
            self.hw,
            self.major_axis,
            self.reg[index],
            self.smem[index],
            truncated=self.truncated,
            columns={name: col[index] for name, col in self.columns.items()},
        )

    def tile_keys(self) -> list[tuple]:
        return [
            (tuple(int(v) for v in self.reg[i]), tuple(int(v) for v in self.smem[i]))
            for i in range(len(self))
        ]

    @classmethod
    def from_ukernels(
        cls,
        instance: WorkloadInstance,
        hw: HardwareDescriptor,
        kernels: Sequence[UKernel],
        major_axis: str | None = None,
    ) -> "CandidateSet":
        spec = instance.spec
        major = major_axis or default_major_axis(spec)
        space = spec.space_axes
        axes = tuple(space) + tuple(spec.reduce_axes)
        reg = np.array([[k.reg_tile[a] for a in space] for k in kernels], dtype=np.int64).reshape(
            len(kernels), len(space)
        )
        smem = np.array([[k.smem_tile[a] for a in axes] for k in kernels], dtype=np.int64).reshape(
            len(kernels), len(axes)
        )
        return cls(instance, hw, major, reg, smem)


def _capacity_mask(spec, grids: list[np.ndarray], smem_bytes: int) -> np.ndarray:
    """Boolean mask over the full tile grid: staged inputs fit shared memory."""
    shape = tuple(len(g) for g in grids)
    ndim = len(shape)
    mask = np.empty(shape, dtype=bool)
    cells_per_row = int(np.prod(shape[1:], dtype=np.int64)) if ndim > 1 else 1
    chunk_rows = max(1, _MASK_CHUNK_CELLS // max(1, cells_per_row))
    axis_of = {a: i for i, a in enumerate(list(spec.space_axes) + list(spec.reduce_axes))}

    for start in range(0, shape[0], chunk_rows):
        stop = min(shape[0], start + chunk_rows)
        footprint = np.zeros((stop - start,) + shape[1:], dtype=np.int64)
        for acc in spec.input_accesses:
            per_input = np.ones((stop - start,) + (1,) * (ndim - 1), dtype=np.int64)
            for ax in acc.axes:
                d = axis_of[ax]
                view_shape = [1] * ndim
                view_shape[d] = -1
                g = grids[d][start:stop] if d == 0 else grids[d]
                per_input = per_input * g.reshape(view_shape)
            footprint += per_input
        mask[start:stop] = footprint * spec.elem_bytes <= smem_bytes
    return mask


def enumerate_ukernels(
    instance: WorkloadInstance,
    hw: HardwareDescriptor,
    cap: int | None = DEFAULT_CANDIDATE_CAP,
    major_axis: str | None = None,
) -> CandidateSet:
    """Hardware-aligned candidate set for one bound shape (canonical order).

    Raises CapacityError when no tile configuration fits shared memory.
    """
    spec = instance.spec
    major = major_axis or default_major_axis(spec)
    if major not in spec.space_axes:
        raise InputError(f"major axis '{major}' is not a space axis", field="major_axis")
    space = list(spec.space_axes)
    reduced = list(spec.reduce_axes)
    align = hw.align_elems

    reg_options = {s: reg_tile_candidates(instance.extent(s), align) for s in space}

    # Base grids: the finest tile values any register choice can produce.
    grids: list[np.ndarray] = []
    for s in space:
        extent = instance.extent(s)
        if s == major:
            gmax = 0
            for r in reg_options[s]:
                step = math.lcm(r, align)
                gmax = max(gmax, step * ceil_div(extent, step))
            grids.append(np.arange(align, gmax + 1, align, dtype=np.int64))
        else:
            gmax = max(r * ceil_div(extent, r) for r in reg_options[s])
            grids.append(np.arange(1, gmax + 1, dtype=np.int64))
    for r_ax in reduced:
        grids.append(np.asarray(reduce_tile_options(instance.extent(r_ax), align), dtype=np.int64))

    mask = _capacity_mask(spec, grids, hw.smem_per_core_bytes)
    if not mask.any():
        raise CapacityError(
            f"no tile configuration fits shared memory ({hw.smem_per_core_bytes} B) for "
            f"workload '{spec.name}' shape {instance.binding_key() or instance.extents}"
        )

    n_space = len(space)
    reg_blocks: list[np.ndarray] = []
    smem_blocks: list[np.ndarray] = []
    total = 0
    truncated = False

    for reg_combo in iter_product(*(reg_options[s] for s in space)):
        slicers = []
        tranche_vals = []
        for d, s in enumerate(space):
            extent = instance.extent(s)
            r = reg_combo[d]
            if s == major:
                step = math.lcm(r, align)
                stride = step // align
                count = ceil_div(extent, step)
                sl = slice(stride - 1, stride * count, stride)
            else:
                count = ceil_div(extent, r)
                sl = slice(r - 1, r * count, r)
            slicers.append(sl)
            tranche_vals.append(grids[d][sl])
        for d in range(n_space, len(grids)):
            slicers.append(slice(None))
            tranche_vals.append(grids[d])

        sub = mask[tuple(slicers)]
        flat = np.flatnonzero(sub)
        if flat.size == 0:
            continue
        if cap is not None and total + flat.size > cap:
            flat = flat[: cap - total]
            truncated = True
        idx = np.unravel_index(flat, sub.shape)
        smem_blocks.append(np.stack([tranche_vals[d][idx[d]] for d in range(len(grids))], axis=1))
        reg_blocks.append(np.tile(np.asarray(reg_combo, dtype=np.int64), (flat.size, 1)))
        total += flat.size
        if truncated:
            break

    if total == 0:
        raise CapacityError(
            f"no tile configuration fits shared memory for workload '{spec.name}'"
        )
    if truncated:
        logger.warning(
            "candidate enumeration for %s hit the cap of %d; truncated in canonical order",
            instance.binding_key() or spec.name,
            cap,
        )

    reg = np.concatenate(reg_blocks, axis=0) if len(reg_blocks) > 1 else reg_blocks[0]
    smem = np.concatenate(smem_blocks, axis=0) if len(smem_blocks) > 1 else smem_blocks[0]
    return CandidateSet(instance, hw, major, reg, smem, truncated=truncated)
