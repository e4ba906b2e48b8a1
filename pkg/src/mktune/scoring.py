"""Synthesis-index scoring and ranking of program plans.

The score of one uKernel is a weighted sum of its three cached metrics:
compute-to-memory ratio, padding fraction and occupancy. A two-kernel
program scores the unweighted mean of its parts. Plans are ranked
descending by score; no device measurement is involved.

Metrics enter the score raw by default (the ratio term is unbounded while
the two fractions live in (0, 1]); an optional per-pool min-max
normalization mode exists for experimentation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

from .errors import EmptyResultError, InputError, MissingMetricsError
from .combine import ProgramPlan
from .ukernel import UKernel


@dataclass(frozen=True)
class SiaCoeffs:
    """Weights for (CMR, padding, occupancy); at least one must be positive."""

    c0: float = 1.0
    c1: float = 1.0
    c2: float = 1.0

    def __post_init__(self):
        if self.c0 < 0 or self.c1 < 0 or self.c2 < 0:
            raise InputError("score coefficients must be nonnegative", field="coeffs")
        if self.c0 == 0 and self.c1 == 0 and self.c2 == 0:
            raise InputError("at least one score coefficient must be positive", field="coeffs")

    def to_doc(self) -> dict:
        return {"c0": self.c0, "c1": self.c1, "c2": self.c2}


def _part_metrics(k: UKernel) -> tuple[float, float, float]:
    if k.compute_eff is None or k.padding_threshold is None or k.usage_eff is None:
        raise MissingMetricsError(
            "uKernel has no cached metrics; run the compile-stage pipeline first"
        )
    return k.compute_eff, k.padding_threshold, k.usage_eff


def _part_score(metrics: tuple[float, float, float], coeffs: SiaCoeffs) -> float:
    cmr, pad, occ = metrics
    return coeffs.c0 * cmr + coeffs.c1 * pad + coeffs.c2 * occ


def sia_score(plan: ProgramPlan, coeffs: SiaCoeffs | None = None) -> float:
    """Weighted metric sum of a single part, or the mean over two parts."""
    coeffs = coeffs or SiaCoeffs()
    scores = [_part_score(_part_metrics(k), coeffs) for k, _ in plan.parts]
    return sum(scores) / len(scores)


def score_decomposition(plan: ProgramPlan, coeffs: SiaCoeffs | None = None) -> list[dict]:
    """Per-part weighted terms, for ranking reports."""
    coeffs = coeffs or SiaCoeffs()
    out = []
    for k, count in plan.parts:
        cmr, pad, occ = _part_metrics(k)
        out.append(
            {
                "count": count,
                "cmr_term": coeffs.c0 * cmr,
                "pad_term": coeffs.c1 * pad,
                "occ_term": coeffs.c2 * occ,
            }
        )
    return out


def _mean_pad(plan: ProgramPlan) -> float:
    pads = [k.padding_threshold for k, _ in plan.parts]
    return sum(pads) / len(pads)


def rank_programs(
    pool: Sequence[ProgramPlan],
    coeffs: SiaCoeffs | None = None,
    k: int = 10,
    normalize: bool = False,
) -> list[ProgramPlan]:
    """Top-k plans by score, descending, with scores attached.

    Ties break toward fewer parts, then higher padding fraction, then
    canonical tile order, so the ranking is a total order.
    """
    coeffs = coeffs or SiaCoeffs()
    if not pool:
        raise EmptyResultError("cannot rank an empty program pool", constraint="program pool")

    if normalize:
        metric_sets = [[_part_metrics(part) for part, _ in plan.parts] for plan in pool]
        flat = [m for plan_ms in metric_sets for m in plan_ms]
        lo = [min(vals) for vals in zip(*flat)]
        hi = [max(vals) for vals in zip(*flat)]

        def norm(m):
            return tuple(
                (v - l) / (h - l) if h > l else 1.0 for v, l, h in zip(m, lo, hi)
            )

        scores = [
            sum(_part_score(norm(m), coeffs) for m in plan_ms) / len(plan_ms)
            for plan_ms in metric_sets
        ]
    else:
        scores = [sia_score(plan, coeffs) for plan in pool]

    spec = pool[0].shape.spec
    space_axes = spec.space_axes
    axis_names = tuple(spec.space_axes) + tuple(spec.reduce_axes)

    def sort_key(item):
        plan, score = item
        tile_order = tuple((p.tile_key(space_axes, axis_names), n) for p, n in plan.parts)
        return (-score, len(plan.parts), -_mean_pad(plan), tile_order)

    ordered = sorted(zip(pool, scores), key=sort_key)
    return [replace(plan, sia=score) for plan, score in ordered[: max(0, k)]]
