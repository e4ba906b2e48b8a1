"""Compile-stage candidate filtering.

Three passes run in order, each shrinking the candidate set:

1. ``cross_pick`` walks a padding/occupancy threshold cross-sweep. The
   padding threshold starts low and rises while the occupancy threshold
   starts high and falls (default stride ratio 10:1); a candidate is
   retained the first time it clears both. This trades a little padding
   for parallelism without ever accepting low-occupancy tiles.
2. ``set_bound`` keeps candidates whose register demand fits the per-core
   register file split across the active blocks the workload asks for.
3. ``multi_axis_filter`` keeps candidates that saturate the device with
   blocks and are compute-intensive (CMR at or above a threshold).

All sweep comparisons are exact: thresholds are rationals and candidate
padding/occupancy are integer ratios, compared by cross-multiplication.

Small workloads can legitimately empty the set; ``compile_shape`` then
relaxes in a documented order (drop the intensity condition, drop the
saturation condition, widen the sweep bounds one stride at a time, and
finally drop the sweep entirely), recording the relaxation in the result.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import EmptyResultError, InputError
from .hardware import HardwareDescriptor
from .metrics import (
    DEFAULT_PSI,
    DEFAULT_REST_REGS,
    MetricBundle,
    annotate_geometry,
    annotate_intensity,
    annotate_registers,
    bundle_at,
)
from .ukernel import (
    DEFAULT_CANDIDATE_CAP,
    CandidateSet,
    UKernel,
    enumerate_ukernels,
    staged_footprint_bytes,
)
from .workload import OperatorSpec, WorkloadInstance, ceil_div

logger = logging.getLogger(__name__)

_MAX_FRACTION_DENOMINATOR = 10_000


def _as_fraction(value, name: str) -> Fraction:
    if isinstance(value, Fraction):
        f = value
    else:
        try:
            f = Fraction(str(value))
        except (ValueError, ZeroDivisionError) as exc:
            raise InputError(f"sweep parameter '{name}' is not a number: {value!r}", field=name) from exc
    if not (0 <= f <= 1):
        raise InputError(f"sweep parameter '{name}' must lie in [0, 1], got {f}", field=name)
    if f.denominator > _MAX_FRACTION_DENOMINATOR:
        raise InputError(
            f"sweep parameter '{name}' needs denominator <= {_MAX_FRACTION_DENOMINATOR} "
            f"(use decimals with at most 4 places), got {f}",
            field=name,
        )
    return f


@dataclass(frozen=True)
class SweepParams:
    """Cross-sweep hyperparameters (exact rationals)."""

    eps_min: Fraction = Fraction(1, 2)
    eps_max: Fraction = Fraction(19, 20)
    lam_min: Fraction = Fraction(9, 10)
    lam_max: Fraction = Fraction(19, 20)
    eps_step: Fraction = Fraction(1, 100)
    lam_step: Fraction = Fraction(1, 1000)

    def __post_init__(self):
        for name in ("eps_min", "eps_max", "lam_min", "lam_max", "eps_step", "lam_step"):
            object.__setattr__(self, name, _as_fraction(getattr(self, name), name))
        if not self.eps_min < self.eps_max:
            raise InputError("sweep requires eps_min < eps_max", field="eps_min")
        if not self.lam_min < self.lam_max:
            raise InputError("sweep requires lam_min < lam_max", field="lam_min")
        if self.eps_step <= 0 or self.lam_step <= 0:
            raise InputError("sweep strides must be positive", field="eps_step")

    @property
    def num_steps(self) -> int:
        """Number of sweep points before either leg terminates."""
        eps_leg = (self.eps_max - self.eps_min) / self.eps_step
        lam_leg = (self.lam_max - self.lam_min) / self.lam_step
        return 1 + min(int(eps_leg), int(lam_leg))

    def point(self, step: int) -> tuple[Fraction, Fraction]:
        """Thresholds at 1-based sweep step."""
        return (
            self.eps_min + (step - 1) * self.eps_step,
            self.lam_max - (step - 1) * self.lam_step,
        )

    def widened(self, strides: int) -> "SweepParams":
        """Lower both minimum bounds by `strides` stride units (floored at 0)."""
        return replace(
            self,
            eps_min=max(Fraction(0), self.eps_min - strides * self.eps_step),
            lam_min=max(Fraction(0), self.lam_min - strides * self.lam_step),
        )

    def to_doc(self) -> dict:
        return {
            name: str(getattr(self, name))
            for name in ("eps_min", "eps_max", "lam_min", "lam_max", "eps_step", "lam_step")
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "SweepParams":
        return cls(**{k: Fraction(v) for k, v in doc.items()})


def retention_steps(cs: CandidateSet, sweep: SweepParams) -> np.ndarray:
    """First 1-based sweep step retaining each candidate; 0 = never retained.

    Uses the closed form of the cross-sweep: the padding condition holds
    for a prefix of steps, the occupancy condition for a suffix, so the
    first qualifying step is the start of the suffix when the two overlap.
    All arithmetic is exact int64 cross-multiplication.
    """
    annotate_geometry(cs)
    pad_num = cs.columns["pad_num"]
    pad_den = cs.columns["pad_den"]
    occ_num = cs.columns["blocks"]
    occ_den = cs.columns["occ_den"]

    en, ed = sweep.eps_min.numerator, sweep.eps_min.denominator
    sn, sd = sweep.eps_step.numerator, sweep.eps_step.denominator
    ln, ld = sweep.lam_max.numerator, sweep.lam_max.denominator
    tn, td = sweep.lam_step.numerator, sweep.lam_step.denominator

    # t_pad_max = 1 + floor((pad - eps_min) / eps_step)
    num = (pad_num * ed - en * pad_den) * sd
    den = pad_den * ed * sn
    t_pad_max = 1 + num // den

    # t_occ_min = 1 + ceil((lam_max - occ) / lam_step), clamped to >= 1
    num = (ln * occ_den - occ_num * ld) * td
    den = occ_den * ld * tn
    t_occ_min = np.maximum(1 + ceil_div(num, den), 1)

    last = sweep.num_steps
    retained = t_occ_min <= np.minimum(t_pad_max, last)
    return np.where(retained, t_occ_min, 0).astype(np.int64)


def cross_pick(
    candidates: CandidateSet,
    instance: WorkloadInstance,
    hw: HardwareDescriptor,
    sweep: SweepParams | None = None,
) -> CandidateSet:
    """Padding/occupancy cross-sweep selection; canonical order preserved.

    Candidates whose staged footprint overflows shared memory are skipped
    up front. The surviving set carries a `retained_step` column.
    """
    sweep = sweep or SweepParams()
    annotate_geometry(candidates)

    if "footprint" not in candidates.columns:
        spec = instance.spec
        axis_index = {a: j for j, a in enumerate(candidates.axis_names)}
        footprint = np.zeros(len(candidates), dtype=np.int64)
        for acc in spec.input_accesses:
            per_input = np.ones(len(candidates), dtype=np.int64)
            for ax in acc.axes:
                per_input = per_input * candidates.smem[:, axis_index[ax]]
            footprint += per_input
        candidates.columns["footprint"] = footprint * spec.elem_bytes
    fits = candidates.columns["footprint"] <= hw.smem_per_core_bytes

    steps = retention_steps(candidates, sweep)
    keep = fits & (steps > 0)
    picked = candidates.subset(np.flatnonzero(keep))
    picked.columns["retained_step"] = steps[keep]
    return picked


def set_bound(
    kcross: CandidateSet,
    instance: WorkloadInstance,
    hw: HardwareDescriptor,
    rest_regs: int = DEFAULT_REST_REGS,
) -> CandidateSet:
    """Parallelism bound: registers per block must fit the per-core file
    split across min(blocks-per-core demanded, default active blocks)."""
    annotate_geometry(kcross)
    annotate_registers(kcross, rest_regs)
    blocks = kcross.columns["blocks"]
    kwkl_block = ceil_div(blocks, hw.num_cores)
    bound = np.minimum(kwkl_block, hw.default_active_blocks)
    keep = kcross.columns["regs_in_block"] * bound <= hw.regs_per_core
    picked = kcross.subset(np.flatnonzero(keep))
    picked.columns["block_bound"] = bound[keep]
    return picked


def multi_axis_filter(
    kfilter: CandidateSet,
    instance: WorkloadInstance,
    hw: HardwareDescriptor,
    psi: float = DEFAULT_PSI,
) -> CandidateSet:
    """Keep candidates that both saturate the device and are compute-intensive."""
    annotate_intensity(kfilter)
    keep = kfilter.columns["saturated"] & (kfilter.columns["cmr"] >= psi)
    return kfilter.subset(np.flatnonzero(keep))


def _saturation_only(kfilter: CandidateSet) -> CandidateSet:
    annotate_intensity(kfilter)
    return kfilter.subset(np.flatnonzero(kfilter.columns["saturated"]))


DEFAULT_FINAL_CEILING = 256


@dataclass
class FilterParams:
    """Knobs for one compile run."""

    sweep: SweepParams
    psi: float = DEFAULT_PSI
    rest_regs: int = DEFAULT_REST_REGS
    candidate_cap: int | None = DEFAULT_CANDIDATE_CAP
    final_ceiling: int | None = DEFAULT_FINAL_CEILING
    major_axis: str | None = None

    @classmethod
    def default(cls) -> "FilterParams":
        return cls(sweep=SweepParams())


@dataclass
class ShapeResult:
    """Filtered candidate set for one bound shape, plus how it was obtained."""

    binding: dict
    candidates: list[UKernel]
    bundles: list[MetricBundle]
    retained_steps: list[int]
    counts: dict
    relaxation: str
    truncated: bool
    sweep_used: SweepParams


_MAX_WIDENING = 2_000


def compile_shape(
    instance: WorkloadInstance,
    hw: HardwareDescriptor,
    params: FilterParams | None = None,
) -> ShapeResult:
    """Full per-shape pipeline: enumerate, annotate, filter, with fallback."""
    params = params or FilterParams.default()
    align_set = enumerate_ukernels(instance, hw, cap=params.candidate_cap, major_axis=params.major_axis)
    annotate_geometry(align_set)

    sweep_used = params.sweep
    relaxation = "none"
    kcross = cross_pick(align_set, instance, hw, sweep_used)
    kfilter = set_bound(kcross, instance, hw, params.rest_regs)
    final = multi_axis_filter(kfilter, instance, hw, params.psi)

    if len(final) == 0 and len(kfilter) > 0:
        relaxation = "drop-intensity"
        final = _saturation_only(kfilter)
        if len(final) == 0:
            relaxation = "drop-saturation"
            final = kfilter
    elif len(kfilter) == 0:
        # The sweep or register bound emptied the set before multi-axis ran.
        widen = 0
        while len(kfilter) == 0:
            widen += 1
            widened = params.sweep.widened(widen)
            if widened == sweep_used or widen > _MAX_WIDENING:
                # Bounds floored and still empty: drop the sweep entirely.
                relaxation = "drop-sweep"
                keep_all = np.arange(len(align_set))
                kcross = align_set.subset(keep_all)
                kcross.columns["retained_step"] = np.zeros(len(kcross), dtype=np.int64)
                kfilter = set_bound(kcross, instance, hw, params.rest_regs)
                if len(kfilter) == 0:
                    raise EmptyResultError(
                        f"no candidate passes the register budget for shape "
                        f"{instance.binding_key() or instance.extents}",
                        constraint="register budget",
                        hint="raise regs_per_core or lower rest_regs",
                    )
                break
            sweep_used = widened
            kcross = cross_pick(align_set, instance, hw, sweep_used)
            kfilter = set_bound(kcross, instance, hw, params.rest_regs)
        else:
            relaxation = f"widen-sweep-{widen}"
        final = kfilter

    annotate_intensity(final)
    annotate_registers(final, params.rest_regs)
    kernels = []
    bundles = []
    for i in range(len(final)):
        k = final[i]
        b = bundle_at(final, i)
        k.padding_threshold = float(b.pad)
        k.usage_eff = float(b.occ)
        k.compute_eff = b.cmr
        kernels.append(k)
        bundles.append(b)
    steps = [int(v) for v in final.columns.get("retained_step", np.zeros(len(final), dtype=np.int64))]

    return ShapeResult(
        binding=dict(instance.bindings),
        candidates=kernels,
        bundles=bundles,
        retained_steps=steps,
        counts={
            "align": len(align_set),
            "cross": len(kcross),
            "filter": len(kfilter),
            "final": len(final),
        },
        relaxation=relaxation,
        truncated=align_set.truncated,
        sweep_used=sweep_used,
    )


@dataclass
class CompileResult:
    """Per-shape candidate sets for a workload's dynamic range."""

    spec: OperatorSpec
    hw: HardwareDescriptor
    params: FilterParams
    sections: list[ShapeResult]


def default_bindings(spec: OperatorSpec) -> list[dict]:
    """Full Cartesian product of the declared dynamic ranges, canonical order."""
    from itertools import product as iter_product

    dyn = spec.dynamic_axes
    ranges = [range(spec.axis(a).range[0], spec.axis(a).range[1] + 1) for a in dyn]
    return [dict(zip(dyn, combo)) for combo in iter_product(*ranges)]


def _compile_one(args):
    spec, hw, params, binding = args
    instance = WorkloadInstance(spec=spec, bindings=binding)
    return compile_shape(instance, hw, params)


def compile_stage(
    spec: OperatorSpec,
    hw: HardwareDescriptor,
    params: FilterParams | None = None,
    bindings: Sequence[dict] | None = None,
    workers: int = 1,
) -> CompileResult:
    """Run the per-shape pipeline over every requested dynamic binding.

    Shapes are independent tasks; with `workers > 1` they run in a process
    pool, and results are assembled in binding order so the output is
    identical at any parallelism level.
    """
    params = params or FilterParams.default()
    if not spec.dynamic_axes and bindings is None:
        bindings = [{}]
    if bindings is None:
        bindings = default_bindings(spec)
    if not bindings:
        raise InputError("no shape bindings requested", field="bindings")

    jobs = [(spec, hw, params, dict(b)) for b in bindings]
    if workers > 1 and len(jobs) > 1:
        import concurrent.futures as cf

        with cf.ProcessPoolExecutor(max_workers=workers) as pool:
            sections = list(pool.map(_compile_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        sections = [_compile_one(job) for job in jobs]
    return CompileResult(spec=spec, hw=hw, params=params, sections=sections)
