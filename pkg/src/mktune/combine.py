"""Runtime-stage program construction.

The main axis is the largest space axis of the bound shape. Programs
cover it exactly — either one tile size that divides the extent, or two
tile sizes ``a != b`` with repetition counts ``n1*a + n2*b == extent`` —
so there is never padding along the main axis. The two parts of a mixed
program must agree on every tile outside the main axis so they tile the
rest of the iteration space uniformly.

``combin_search`` finds every two-size combination by solving the linear
Diophantine equation per tile pair (stepping through the residue class of
valid counts), which the brute-force oracle in :mod:`mktune.oracles`
checks exhaustively.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import EmptyResultError, InputError, InternalError
from .timemodel import TimeEstimate
from .ukernel import UKernel
from .workload import WorkloadInstance

Combo = tuple[tuple[int, int], ...]


@dataclass
class ProgramPlan:
    """A composition of one or two uKernels covering a concrete shape."""

    parts: tuple  # ((UKernel, count), ...) with one or two entries
    shape: WorkloadInstance
    tau: str
    sia: float | None = None
    est: TimeEstimate | None = None

    @property
    def tau_coverage(self) -> int:
        return sum(k.smem_tile[self.tau] * n for k, n in self.parts)

    def covered_extents(self) -> dict:
        """Tile-covered extent per space axis (exact on the main axis)."""
        spec = self.shape.spec
        covered = {}
        for s in spec.space_axes:
            if s == self.tau:
                covered[s] = self.tau_coverage
            else:
                e = self.shape.extent(s)
                t = self.parts[0][0].smem_tile[s]
                covered[s] = -(-e // t) * t
        return covered


def select_main_axis(instance: WorkloadInstance) -> str:
    """The space axis with the largest extent; ties prefer a dynamic axis,
    then lexicographic name order."""
    spec = instance.spec
    if not spec.space_axes:
        raise InputError("workload has no space axes", field="axes")
    best = max(instance.extent(s) for s in spec.space_axes)
    tied = [s for s in spec.space_axes if instance.extent(s) == best]
    dynamic = [s for s in tied if spec.axis(s).is_dynamic]
    pool = dynamic if dynamic else tied
    return min(pool)


def _pair_solutions(a: int, b: int, extent: int) -> Iterable[tuple[int, int]]:
    """All (n1, n2) with n1 >= 1, n2 >= 1 and n1*a + n2*b == extent.

    Solves the congruence n2*b == extent (mod a) and steps through the
    residue class instead of scanning every count.
    """
    g = math.gcd(a, b)
    if extent % g != 0:
        return
    a_, b_, h = a // g, b // g, extent // g
    if a_ == 1:
        n2 = 1
    else:
        n2 = (h * pow(b_, -1, a_)) % a_
        if n2 == 0:
            n2 = a_
    while n2 * b_ <= h - a_:  # leaves room for n1 >= 1
        yield ((h - n2 * b_) // a_, n2)
        n2 += a_


def combin_search(tile_sizes: Iterable[int], extent: int) -> set[Combo]:
    """Every exact covering of `extent` by one or two tile sizes.

    Combos are canonical tuples ``((tile, count), ...)`` sorted by tile;
    singletons appear when a tile divides the extent. The result matches
    the brute-force oracle exactly; it is legal for it to be empty.
    """
    if extent < 1:
        raise InputError(f"extent must be >= 1, got {extent}")
    tiles = sorted(set(int(t) for t in tile_sizes))
    if not tiles or tiles[0] < 1:
        raise InputError("tile sizes must be positive integers")

    combos: set[Combo] = set()
    for t in tiles:
        if extent % t == 0:
            combos.add(((t, extent // t),))
    for i, a in enumerate(tiles):
        if a > extent:
            break
        for b in tiles[i + 1 :]:
            for n1, n2 in _pair_solutions(a, b, extent):
                combos.add(((a, n1), (b, n2)))
    return combos


def _part_signature(k: UKernel, tau: str, space_axes: Sequence[str], axis_names: Sequence[str]) -> tuple:
    """Everything about a candidate except its main-axis tiles."""
    return (
        tuple(k.reg_tile[a] for a in space_axes if a != tau),
        tuple(k.smem_tile[a] for a in axis_names if a != tau),
    )


def _plan_key(plan: ProgramPlan, space_axes, axis_names) -> tuple:
    return (
        len(plan.parts),
        tuple((k.tile_key(space_axes, axis_names), n) for k, n in plan.parts),
    )


def build_programs(candidates: Sequence[UKernel], instance: WorkloadInstance) -> list[ProgramPlan]:
    """The program pool for one shape: every single-kernel covering plus
    every compatible two-kernel combination, deduplicated, canonical order.

    Raises EmptyResultError when nothing covers the main axis; the caller
    should relax the compile-stage filters and retry.
    """
    if not candidates:
        raise EmptyResultError(
            "candidate set is empty", constraint="candidate set", hint="relax the compile-stage filters"
        )
    spec = instance.spec
    space_axes = spec.space_axes
    axis_names = tuple(spec.space_axes) + tuple(spec.reduce_axes)
    tau = select_main_axis(instance)
    extent = instance.extent(tau)

    unique: dict[tuple, UKernel] = {}
    for k in candidates:
        unique.setdefault(k.tile_key(space_axes, axis_names), k)
    kernels = list(unique.values())

    plans: dict[tuple, ProgramPlan] = {}

    for k in kernels:
        t = k.smem_tile[tau]
        if extent % t == 0:
            plan = ProgramPlan(parts=((k, extent // t),), shape=instance, tau=tau)
            plans.setdefault(_plan_key(plan, space_axes, axis_names), plan)

    groups: dict[tuple, list[UKernel]] = {}
    for k in kernels:
        groups.setdefault(_part_signature(k, tau, space_axes, axis_names), []).append(k)

    for members in groups.values():
        if len(members) < 2:
            continue
        members = sorted(members, key=lambda k: k.tile_key(space_axes, axis_names))
        for i, k1 in enumerate(members):
            a = k1.smem_tile[tau]
            for k2 in members[i + 1 :]:
                b = k2.smem_tile[tau]
                if a == b:
                    continue
                lo_k, lo, hi_k, hi = (k1, a, k2, b) if a < b else (k2, b, k1, a)
                for n1, n2 in _pair_solutions(lo, hi, extent):
                    plan = ProgramPlan(parts=((lo_k, n1), (hi_k, n2)), shape=instance, tau=tau)
                    plans.setdefault(_plan_key(plan, space_axes, axis_names), plan)

    pool = [plans[key] for key in sorted(plans)]
    if not pool:
        raise EmptyResultError(
            f"no uKernel combination covers axis '{tau}' (extent {extent})",
            constraint="main-axis coverage",
            hint="relax the compile-stage filters to admit more tile sizes",
        )
    for plan in pool:
        if plan.tau_coverage != extent:
            raise InternalError(
                f"plan covers {plan.tau_coverage} on axis '{tau}', expected {extent}"
            )
    return pool
