"""Analytical execution-time oracle for program plans.

Decomposes a plan into compute, memory and padding time so rankings can
be checked without running anything. Per part:

* compute time = tile-covered output FLOPs / peak FLOP rate; the padding
  share is the covered-minus-true portion (padding costs FLOPs only; an
  optional per-element surcharge knob exists for boundary-check overhead,
  default 0);
* memory time = max(global arm, shared arm) of the staged traffic for the
  part's block count, using the workload accounting model;
* compute and memory overlap, so the part's time is the max of the two.

The total is the sum over parts. Wave counts (blocks per full device
round) are reported but do not quantize the estimate, keeping the model
strictly monotone in covered volume. Only relative ordering fidelity is
claimed, never absolute device milliseconds; ``PERF_MODEL_VERSION``
accompanies every report so numbers are tied to a model version.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

from .hardware import HardwareDescriptor
from .workload import ACCOUNTING_VERSION, WorkloadInstance, ceil_div, per_block_volumes

if TYPE_CHECKING:  # pragma: no cover
    from .combine import ProgramPlan

PERF_MODEL_VERSION = f"overlap-1/{ACCOUNTING_VERSION}"


@dataclass(frozen=True)
class TimeEstimate:
    """Analytical time breakdown for one plan, in seconds."""

    compute_s: float
    memory_s: float
    padding_s: float
    total_s: float
    waves: int

    def to_doc(self) -> dict:
        return {
            "compute_s": self.compute_s,
            "memory_s": self.memory_s,
            "padding_s": self.padding_s,
            "total_s": self.total_s,
            "waves": self.waves,
            "model": PERF_MODEL_VERSION,
        }


def estimate_time(
    plan: "ProgramPlan",
    instance: WorkloadInstance,
    hw: HardwareDescriptor,
    pad_surcharge_flops_per_elem: float = 0.0,
) -> TimeEstimate:
    """Evaluate the analytical model for one plan."""
    spec = instance.spec
    elem = spec.elem_bytes
    fpp = spec.flops_per_point
    tau = plan.tau

    reduce_true = 1
    for r in spec.reduce_axes:
        reduce_true *= instance.extent(r)

    compute_s = 0.0
    memory_s = 0.0
    padding_s = 0.0
    total_s = 0.0
    waves = 0

    for k, count in plan.parts:
        blocks_rest = 1
        covered_rest = 1
        true_rest = 1
        for s in spec.space_axes:
            if s == tau:
                continue
            e = instance.extent(s)
            t = k.smem_tile[s]
            nb = ceil_div(e, t)
            blocks_rest *= nb
            covered_rest *= nb * t
            true_rest *= e

        tau_elems = count * k.smem_tile[tau]
        blocks = count * blocks_rest
        covered_out = tau_elems * covered_rest
        true_out = tau_elems * true_rest

        pad_elems = (covered_out - true_out) * reduce_true
        surcharge = pad_surcharge_flops_per_elem * pad_elems
        part_compute = (fpp * covered_out * reduce_true + surcharge) / hw.peak_flops
        part_padding = (fpp * pad_elems + surcharge) / hw.peak_flops

        per_block = per_block_volumes(instance, k)
        data_r = per_block["read_elems"] * blocks * elem
        data_w = true_out * elem
        data_tr = per_block["trans_read_elems"] * blocks * elem
        part_memory = max(
            (data_r + data_w) / hw.global_bw_bytes_per_s,
            (data_r + data_tr) / hw.shared_bw_bytes_per_s,
        )

        compute_s += part_compute
        memory_s += part_memory
        padding_s += part_padding
        total_s += max(part_compute, part_memory)
        waves += ceil_div(blocks, hw.total_active_blocks)

    return TimeEstimate(
        compute_s=compute_s,
        memory_s=memory_s,
        padding_s=padding_s,
        total_s=total_s,
        waves=waves,
    )
