"""Power-of-two rounding of machine and job parameters and group bucketing."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .model import ADDITIVE, Instance, Job, Machine, ModelError, Schedule


def ceil_pow2(x: int) -> int:
    """Smallest power of two >= x; zero stays zero."""
    if x < 0:
        raise ValueError("negative value")
    if x == 0:
        return 0
    return 1 << (x - 1).bit_length()


def floor_pow2(x: int) -> int:
    if x < 1:
        raise ValueError("value must be >= 1")
    return 1 << (x.bit_length() - 1)


def delay_cap(n: int) -> int:
    return ceil_pow2(max(n, 1))


@dataclass(frozen=True)
class MachineGroup:
    index: int
    delay: int
    size: int
    speed: int
    members: tuple[int, ...]

    @property
    def count(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class JobGroup:
    index: int
    delay: int
    members: tuple[int, ...]


@dataclass(frozen=True)
class GroupedInstance:
    """Rounded instance plus its machine and job groups.

    ``original`` is the instance that was rounded.  ``capped_machines`` and
    ``capped_jobs`` list the ids whose rounded delay was lowered to the cap.
    """

    instance: Instance
    original: Instance
    machine_groups: tuple[MachineGroup, ...]
    job_groups: tuple[JobGroup, ...]
    cap: int
    capped_machines: frozenset[int] = frozenset()
    capped_jobs: frozenset[int] = frozenset()
    machine_group_of: Mapping[int, int] = field(default_factory=dict)
    job_group_of: Mapping[int, int] = field(default_factory=dict)

    @property
    def K(self) -> int:
        return len(self.machine_groups)

    @property
    def L(self) -> int:
        return len(self.job_groups)

    def job_delay(self, v: int) -> int:
        return self.instance.job[v].in_delay


def _require_in_only(instance: Instance) -> None:
    if instance.model != ADDITIVE:
        raise ModelError("grouping needs the additive delay model")
    if any(x.out_delay for x in (*instance.jobs, *instance.machines)):
        raise ModelError("grouping needs out-delays merged into in-delays first")


def round_and_group(instance: Instance, *, cap: bool = True, exact: bool = False) -> GroupedInstance:
    """Round delays up and sizes/speeds down to powers of two, then bucket.

    ``exact=True`` skips rounding and only buckets identical parameters,
    which keeps LP values valid lower bounds for the unrounded instance.
    """
    _require_in_only(instance)
    limit = delay_cap(instance.n)
    capped_m, capped_j = set(), set()

    def rdelay(x: int, ident: int, bag: set) -> int:
        if exact:
            return x
        r = ceil_pow2(x)
        if cap and r > limit:
            bag.add(ident)
            return limit
        return r

    machines = []
    for mc in instance.machines:
        machines.append(
            Machine(
                mc.id,
                mc.size if exact else floor_pow2(mc.size),
                mc.speed if exact else floor_pow2(mc.speed),
                rdelay(mc.in_delay, mc.id, capped_m),
                0,
            )
        )
    jobs = [Job(j.id, rdelay(j.in_delay, j.id, capped_j), 0) for j in instance.jobs]
    rounded = Instance(tuple(jobs), tuple(machines), instance.edges, ADDITIVE)

    buckets: dict[tuple[int, int, int], list[int]] = {}
    for mc in rounded.machines:
        buckets.setdefault((mc.in_delay, mc.size, mc.speed), []).append(mc.id)
    mgroups = tuple(
        MachineGroup(k, key[0], key[1], key[2], tuple(sorted(ids)))
        for k, (key, ids) in enumerate(sorted(buckets.items()))
    )
    jb: dict[int, list[int]] = {}
    for j in rounded.jobs:
        jb.setdefault(j.in_delay, []).append(j.id)
    jgroups = tuple(JobGroup(l, d, tuple(sorted(ids))) for l, (d, ids) in enumerate(sorted(jb.items())))
    return GroupedInstance(
        rounded,
        instance,
        mgroups,
        jgroups,
        limit,
        frozenset(capped_m),
        frozenset(capped_j),
        {i: g.index for g in mgroups for i in g.members},
        {v: g.index for g in jgroups for v in g.members},
    )


def dilate_schedule_for_grouping(
    instance: Instance, schedule: Schedule, grouped: GroupedInstance | None = None
) -> Schedule:
    """Map a valid schedule of ``instance`` to a valid one on its rounding.

    Time is scaled by 2 to absorb delay rounding, by 4 instead when some
    machine loses processors (copies are re-packed into two sub-slots), and by
    a further 2 when some speed rounds down.  The total factor is at most 8.
    Scaling is applied to completion times where possible, so the
    delays-only case doubles the makespan exactly.
    """
    g = grouped or round_and_group(instance)
    target = g.instance
    halving = {m.id for m in instance.machines if target.machine[m.id].size < m.size}
    slowing = any(target.machine[m.id].speed < m.speed for m in instance.machines)
    K = 4 if halving else 2

    stage: list[tuple[int, int, Fraction]] = []
    by_slot: dict[tuple[int, int], list[tuple[int, Fraction]]] = {}
    for j, mid, t in schedule.triples():
        s = instance.machine[mid].speed
        if mid in halving:
            # r indexes windows of length 1/(2s): copies sharing r overlap
            r = math.ceil(2 * t * s)
            by_slot.setdefault((mid, r), []).append((j, t))
        else:
            d = Fraction(1, s)
            stage.append((j, mid, K * (t + d) - d))
    for (mid, r), items in by_slot.items():
        s = instance.machine[mid].speed
        keep = target.machine[mid].size
        for pos, (j, _) in enumerate(sorted(items)):
            slot = 2 * r + (0 if pos < keep else 1)
            stage.append((j, mid, Fraction(slot, s)))
    if slowing:
        out = []
        for j, mid, t in stage:
            d = instance.machine[mid].duration
            out.append((j, mid, 2 * (t + d) - target.machine[mid].duration))
        stage = out
    return Schedule.from_triples(stage, schedule.no_duplication)


__all__ = [
    "MachineGroup",
    "JobGroup",
    "GroupedInstance",
    "ceil_pow2",
    "floor_pow2",
    "delay_cap",
    "round_and_group",
    "dilate_schedule_for_grouping",
]
