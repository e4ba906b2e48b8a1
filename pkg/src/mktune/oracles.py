"""Brute-force oracles and consistency checks.

These live in the shipped package, not the test tree, so the CLI and the
service can expose end-user verification: the combination search is
checked against exhaustive enumeration, every plan's main-axis coverage
is recomputed independently, and the score ranking is compared against
the analytical time model over the whole pool.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Sequence

from .combine import Combo, ProgramPlan, combin_search
from .errors import InputError
from .hardware import HardwareDescriptor
from .scoring import SiaCoeffs, rank_programs, sia_score
from .timemodel import estimate_time
from .workload import WorkloadInstance

BRUTE_FORCE_MAX_EXTENT = 4096
BRUTE_FORCE_MAX_TILES = 64
RANK_CHECK_MAX_POOL = 10_000


def brute_force_combinations(tiles: Sequence[int], extent: int) -> set[Combo]:
    """Ground truth for combin_search: try every (a, b, n1, n2) directly."""
    if extent > BRUTE_FORCE_MAX_EXTENT:
        raise InputError(f"brute-force oracle capped at extent {BRUTE_FORCE_MAX_EXTENT}")
    uniq = sorted(set(int(t) for t in tiles))
    if len(uniq) > BRUTE_FORCE_MAX_TILES:
        raise InputError(f"brute-force oracle capped at {BRUTE_FORCE_MAX_TILES} tile sizes")
    if not uniq or uniq[0] < 1 or extent < 1:
        raise InputError("brute-force oracle needs positive tiles and extent")

    combos: set[Combo] = set()
    for t in uniq:
        if extent % t == 0:
            combos.add(((t, extent // t),))
    for i, a in enumerate(uniq):
        for b in uniq[i + 1 :]:
            n1 = 1
            while n1 * a + b <= extent:
                rest = extent - n1 * a
                if rest % b == 0:
                    combos.add(((a, n1), (b, rest // b)))
                n1 += 1
    return combos


@dataclass
class OracleCase:
    """A reproducible combination-search case."""

    seed: int
    tiles: tuple[int, ...]
    extent: int
    expected: set = field(repr=False, default_factory=set)


def random_combination_case(seed: int, max_extent: int = 512, max_tile: int = 64) -> OracleCase:
    """Seeded random case with its brute-force expectation attached."""
    rng = random.Random(seed)
    extent = rng.randint(1, max_extent)
    n_tiles = rng.randint(1, 6)
    tiles = tuple(sorted({rng.randint(1, max_tile) for _ in range(n_tiles)}))
    return OracleCase(seed=seed, tiles=tiles, extent=extent, expected=brute_force_combinations(tiles, extent))


@dataclass
class RankCheckReport:
    """Outcome of comparing the score ranking against the time model."""

    pool_size: int
    tolerance: float
    best_total_s: float
    top1_total_s: float
    top10_best_total_s: float
    top1_within: bool
    top10_within: bool

    def to_doc(self) -> dict:
        return {
            "pool_size": self.pool_size,
            "tolerance": self.tolerance,
            "best_total_s": self.best_total_s,
            "top1_total_s": self.top1_total_s,
            "top10_best_total_s": self.top10_best_total_s,
            "top1_within": self.top1_within,
            "top10_within": self.top10_within,
        }


def exhaustive_rank_check(
    pool: Sequence[ProgramPlan],
    coeffs: SiaCoeffs,
    instance: WorkloadInstance,
    hw: HardwareDescriptor,
    tolerance: float = 0.10,
    topk: int = 10,
) -> RankCheckReport:
    """Estimate every plan's time and check the score ranking against it."""
    if len(pool) > RANK_CHECK_MAX_POOL:
        raise InputError(f"rank check capped at pools of {RANK_CHECK_MAX_POOL} plans")
    times = [estimate_time(plan, instance, hw).total_s for plan in pool]
    best = min(times)
    ranked = rank_programs(pool, coeffs, k=topk)
    ranked_times = [estimate_time(plan, instance, hw).total_s for plan in ranked]
    top1 = ranked_times[0]
    top_best = min(ranked_times)
    limit = best * (1.0 + tolerance)
    return RankCheckReport(
        pool_size=len(pool),
        tolerance=tolerance,
        best_total_s=best,
        top1_total_s=top1,
        top10_best_total_s=top_best,
        top1_within=top1 <= limit,
        top10_within=top_best <= limit,
    )


def verify_plan_pool(
    pool: Sequence[ProgramPlan],
    instance: WorkloadInstance,
    hw: HardwareDescriptor,
    coeffs: SiaCoeffs | None = None,
) -> dict:
    """End-user verification report for one shape's program pool."""
    coeffs = coeffs or SiaCoeffs()
    checks = []

    tau = pool[0].tau
    extent = instance.extent(tau)
    bad = [plan for plan in pool if plan.tau_coverage != extent]
    checks.append(
        {
            "name": "main-axis-coverage",
            "status": "pass" if not bad else "fail",
            "detail": f"{len(pool)} plans recomputed, {len(bad)} with nonzero main-axis padding",
        }
    )

    tiles = sorted({k.smem_tile[tau] for plan in pool for k, _ in plan.parts})
    if extent <= BRUTE_FORCE_MAX_EXTENT and len(tiles) <= BRUTE_FORCE_MAX_TILES:
        agree = combin_search(tiles, extent) == brute_force_combinations(tiles, extent)
        checks.append(
            {
                "name": "combination-search-vs-brute-force",
                "status": "pass" if agree else "fail",
                "detail": f"tiles={tiles}, extent={extent}",
            }
        )
    else:
        checks.append(
            {
                "name": "combination-search-vs-brute-force",
                "status": "skipped",
                "detail": f"extent {extent} or tile count {len(tiles)} above oracle caps",
            }
        )

    if len(pool) <= RANK_CHECK_MAX_POOL:
        report = exhaustive_rank_check(pool, coeffs, instance, hw)
        checks.append(
            {
                "name": "ranking-vs-time-model",
                "status": "pass" if report.top10_within else "fail",
                "detail": report.to_doc(),
            }
        )
    else:
        checks.append(
            {
                "name": "ranking-vs-time-model",
                "status": "skipped",
                "detail": f"pool of {len(pool)} exceeds the {RANK_CHECK_MAX_POOL}-plan cap",
            }
        )

    return {
        "status": "pass" if all(c["status"] != "fail" for c in checks) else "fail",
        "checks": checks,
    }
