"""Analytical per-candidate metrics.

Six quantities are attached to a uKernel for a given workload instance
and hardware descriptor:

* padding fraction: true output bytes over tile-covered output bytes
  (1.0 means the tile grid adds no padding);
* occupancy: blocks needed over blocks in whole hardware waves;
* registers per block, with the register-budget bound check;
* space saturation: enough blocks to keep every core busy at its active
  block count;
* memory latency: max of the global-memory and shared-memory arms;
* compute-to-memory ratio (CMR): whole-workload compute time over memory
  latency, with a compute-intensity verdict against a threshold.

Padding and occupancy are exact integer ratios and are kept that way
(`fractions.Fraction` in the scalar API, numerator/denominator columns in
the bulk API) because the filter sweep compares them against exact
rational thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import InputError
from .hardware import HardwareDescriptor
from .ukernel import CandidateSet, UKernel
from .workload import WorkloadInstance, ceil_div, data_volumes, flops

DEFAULT_REST_REGS = 24
DEFAULT_PSI = 1.0


@dataclass
class MetricBundle:
    """All cached metrics for one candidate on one instance."""

    pad: Fraction
    occ: Fraction
    regs_in_block: int
    saturated: bool
    cmr: float
    mem_latency_s: float
    blocks_needed: int


def padding_metric(k: UKernel, instance: WorkloadInstance) -> Fraction:
    """True output bytes / covered output bytes; 1 means zero padding."""
    true_elems = 1
    covered_elems = 1
    for s in instance.spec.space_axes:
        e = instance.extent(s)
        t = k.smem_tile[s]
        true_elems *= e
        covered_elems *= ceil_div(e, t) * t
    return Fraction(true_elems, covered_elems)


def blocks_needed(k: UKernel, instance: WorkloadInstance) -> int:
    """Number of uKernels tiling the covered output space."""
    n = 1
    for s in instance.spec.space_axes:
        n *= ceil_div(instance.extent(s), k.smem_tile[s])
    return n


def occupancy_metric(k: UKernel, instance: WorkloadInstance, hw: HardwareDescriptor) -> Fraction:
    """Blocks needed over the same count rounded up to whole waves of cores."""
    n = blocks_needed(k, instance)
    return Fraction(n, ceil_div(n, hw.num_cores) * hw.num_cores)


def regs_in_block(k: UKernel, hw: HardwareDescriptor, rest_regs: int = DEFAULT_REST_REGS) -> int:
    """Registers a block demands: per-thread tile rows/cols plus overhead,
    times the thread count (one thread per register tile)."""
    reg_sum = 0
    threads = 1
    for s, r in k.reg_tile.items():
        reg_sum += r
        threads *= k.smem_tile[s] // r
    return (reg_sum + rest_regs) * threads


def reg_bound_ok(
    k: UKernel,
    hw: HardwareDescriptor,
    block_bound: int,
    rest_regs: int = DEFAULT_REST_REGS,
) -> bool:
    """Register-budget check: block demand fits the per-core file split
    across `block_bound` resident blocks. Exact integer comparison."""
    return regs_in_block(k, hw, rest_regs) * block_bound <= hw.regs_per_core


def space_saturation(k: UKernel, instance: WorkloadInstance, hw: HardwareDescriptor) -> bool:
    """True when the covered output supplies at least one full wave of blocks."""
    return blocks_needed(k, instance) >= hw.total_active_blocks


def memory_latency(k: UKernel, instance: WorkloadInstance, hw: HardwareDescriptor) -> float:
    """Max of the global and shared memory arms, in seconds."""
    v = data_volumes(instance, k)
    global_arm = (v["data_R"] + v["data_W"]) / hw.global_bw_bytes_per_s
    shared_arm = (v["data_transW"] + v["data_transR"]) / hw.shared_bw_bytes_per_s
    return max(global_arm, shared_arm)


def compute_intensity(
    k: UKernel,
    instance: WorkloadInstance,
    hw: HardwareDescriptor,
    psi: float = DEFAULT_PSI,
) -> tuple[float, bool]:
    """CMR = compute time / memory latency, and whether it clears `psi`."""
    k_mem = memory_latency(k, instance, hw)
    if k_mem <= 0.0:
        raise InputError("memory latency is zero; workload moves no data")
    cmr = (flops(instance) / hw.peak_flops) / k_mem
    return cmr, cmr >= psi


def compute_metrics(
    k: UKernel,
    instance: WorkloadInstance,
    hw: HardwareDescriptor,
    rest_regs: int = DEFAULT_REST_REGS,
    psi: float = DEFAULT_PSI,
) -> MetricBundle:
    """Evaluate all metrics for one candidate and cache the three uKernel fields."""
    pad = padding_metric(k, instance)
    occ = occupancy_metric(k, instance, hw)
    cmr, _ = compute_intensity(k, instance, hw, psi)
    bundle = MetricBundle(
        pad=pad,
        occ=occ,
        regs_in_block=regs_in_block(k, hw, rest_regs),
        saturated=space_saturation(k, instance, hw),
        cmr=cmr,
        mem_latency_s=memory_latency(k, instance, hw),
        blocks_needed=blocks_needed(k, instance),
    )
    k.padding_threshold = float(pad)
    k.usage_eff = float(occ)
    k.compute_eff = cmr
    return bundle


# --- columnar evaluation over a CandidateSet -------------------------------


def annotate_geometry(cs: CandidateSet) -> None:
    """Attach pad_num/pad_den, blocks, occ_den columns (exact integers)."""
    if "pad_num" in cs.columns:
        return
    spec = cs.instance.spec
    elem = spec.elem_bytes
    n = len(cs)
    true_elems = 1
    for s in spec.space_axes:
        true_elems *= cs.instance.extent(s)

    covered = np.ones(n, dtype=np.int64)
    blocks = np.ones(n, dtype=np.int64)
    for j, s in enumerate(cs.space_axes):
        t = cs.smem[:, j]
        b = ceil_div(cs.instance.extent(s), t)
        blocks *= b
        covered *= b * t

    cs.columns["pad_num"] = np.full(n, true_elems * elem, dtype=np.int64)
    cs.columns["pad_den"] = covered * elem
    cs.columns["blocks"] = blocks
    cs.columns["occ_den"] = ceil_div(blocks, cs.hw.num_cores) * cs.hw.num_cores


def annotate_registers(cs: CandidateSet, rest_regs: int = DEFAULT_REST_REGS) -> None:
    """Attach regs_in_block and threads columns."""
    if "regs_in_block" in cs.columns:
        return
    n = len(cs)
    reg_sum = np.zeros(n, dtype=np.int64)
    threads = np.ones(n, dtype=np.int64)
    for j in range(len(cs.space_axes)):
        reg_sum += cs.reg[:, j]
        threads *= cs.smem[:, j] // cs.reg[:, j]
    cs.columns["threads"] = threads
    cs.columns["regs_in_block"] = (reg_sum + rest_regs) * threads


def annotate_intensity(cs: CandidateSet) -> None:
    """Attach saturated, kmem and cmr columns (needs geometry columns)."""
    if "cmr" in cs.columns:
        return
    annotate_geometry(cs)
    spec = cs.instance.spec
    instance = cs.instance
    hw = cs.hw
    n = len(cs)
    axis_index = {a: j for j, a in enumerate(cs.axis_names)}
    space = set(spec.space_axes)

    blocks = cs.columns["blocks"]
    read_elems = np.zeros(n, dtype=np.int64)
    trans_read_elems = np.zeros(n, dtype=np.int64)
    for acc in spec.input_accesses:
        acc_axes = set(acc.axes)
        staged = np.ones(n, dtype=np.int64)
        passes = np.ones(n, dtype=np.int64)
        strip = np.ones(n, dtype=np.int64)
        for s in spec.space_axes:
            t = cs.smem[:, axis_index[s]]
            if s in acc_axes:
                staged = staged * t
                strip = strip * t
            else:
                strip = strip * (t // cs.reg[:, axis_index[s]])
        for r in spec.reduce_axes:
            t = cs.smem[:, axis_index[r]]
            if r in acc_axes:
                p = ceil_div(instance.extent(r), t)
                passes = passes * p
                staged = staged * t
        read_elems += staged * passes
        trans_read_elems += strip * passes

    elem = spec.elem_bytes
    out_bytes = float(cs.columns["pad_num"][0]) if n else 0.0  # true output bytes
    data_r = read_elems.astype(np.float64) * blocks * elem
    data_tr = trans_read_elems.astype(np.float64) * blocks * elem
    global_arm = (data_r + out_bytes) / hw.global_bw_bytes_per_s
    shared_arm = (data_r + data_tr) / hw.shared_bw_bytes_per_s
    kmem = np.maximum(global_arm, shared_arm)

    compute_time = flops(instance) / hw.peak_flops
    cs.columns["kmem"] = kmem
    cs.columns["cmr"] = compute_time / kmem
    cs.columns["saturated"] = blocks >= hw.total_active_blocks


def bundle_at(cs: CandidateSet, i: int) -> MetricBundle:
    """MetricBundle for row i of a fully annotated candidate set."""
    cols = cs.columns
    return MetricBundle(
        pad=Fraction(int(cols["pad_num"][i]), int(cols["pad_den"][i])),
        occ=Fraction(int(cols["blocks"][i]), int(cols["occ_den"][i])),
        regs_in_block=int(cols["regs_in_block"][i]),
        saturated=bool(cols["saturated"][i]),
        cmr=float(cols["cmr"][i]),
        mem_latency_s=float(cols["kmem"][i]),
        blocks_needed=int(cols["blocks"][i]),
    )
