"""Delay-model reductions.

* exact out->in merging for machine delays, with the matching time shifts;
* phase expansion between the merged (in-only) and in/out job-delay models;
* the reduction from pinned-machine scheduling (UMPS) to job-machine delays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import total_ordering
from typing import Iterable, Mapping

from .grouping import ceil_pow2
from .model import (
    ADDITIVE,
    JOB_MACHINE,
    UMPS,
    Instance,
    Job,
    Machine,
    ModelError,
    Schedule,
    makespan,
    validate_schedule,
)


class ReductionError(ModelError):
    pass


# ---------------------------------------------------------------- merge/shift


def merge_out_into_in(instance: Instance) -> Instance:
    """Fold every out-delay into the in-delay of the same job or machine."""
    if instance.model != ADDITIVE:
        raise ReductionError("merging needs the additive delay model")
    jobs = tuple(Job(j.id, j.in_delay + j.out_delay, 0) for j in instance.jobs)
    machines = tuple(
        Machine(m.id, m.size, m.speed, m.in_delay + m.out_delay, 0) for m in instance.machines
    )
    return Instance(jobs, machines, instance.edges, ADDITIVE)


def shift_schedule_machine_delays(instance: Instance, schedule: Schedule, direction: str) -> Schedule:
    """Move placements between the in/out instance and its merged form.

    ``forward`` maps a schedule of ``instance`` to one of the merged instance
    (``t -> t + out_i``); ``back`` is the inverse.  Both preserve validity
    when all job delays are zero.
    """
    if any(j.in_delay or j.out_delay for j in instance.jobs):
        raise ReductionError("machine-delay shift requires zero job delays")
    if direction not in ("forward", "back"):
        raise ValueError("direction must be 'forward' or 'back'")
    sign = 1 if direction == "forward" else -1
    out = []
    for j, m, t in schedule.triples():
        t2 = t + sign * instance.machine[m].out_delay
        if t2 < 0:
            raise ReductionError(f"back-shift puts job {j} at negative time {t2}")
        out.append((j, m, t2))
    return Schedule.from_triples(out, schedule.no_duplication)


def delivery_makespan(instance: Instance, schedule: Schedule) -> Fraction:
    """Latest time a result leaves its machine: completion plus out-delay."""
    return max(t + instance.machine[m].duration + instance.machine[m].out_delay for _, m, t in schedule.triples())


# ---------------------------------------------------------- phase expansion


@total_ordering
@dataclass(frozen=True)
class PhaseKey:
    """Job delay class ``(a, b)``: rounded in- and out-delay of the job."""

    a: int
    b: int

    @property
    def delta(self) -> int:
        return self.a + self.b

    @property
    def window(self) -> int:
        return self.delta or 1

    def _k(self):
        return (self.delta, self.a, self.b)

    def __lt__(self, other: "PhaseKey") -> bool:
        return self._k() < other._k()


def phase_key(job: Job) -> PhaseKey:
    return PhaseKey(ceil_pow2(job.in_delay), ceil_pow2(job.out_delay))


def closed_form_offset(T: int, key: PhaseKey, budgets: Mapping[PhaseKey, int]) -> int:
    """Closed-form block offset: all earlier windows of every class plus the
    aligned windows of larger classes at the same start time."""
    total = 0
    for c, b in budgets.items():
        total += -(-T // c.window) * b
        if c > key and T % c.window == 0:
            total += b
    return total


@dataclass
class _Block:
    key: PhaseKey
    index: int
    start: int
    members: list[tuple[int, int, Fraction]]


@dataclass(frozen=True)
class ExpansionReport:
    method: str
    makespan_in: Fraction
    makespan_out: Fraction
    blocks: int
    bound: float

    @property
    def within_bound(self) -> bool:
        return float(self.makespan_out) <= self.bound + 1e-9


def _log2c(x) -> float:
    return max(math.log2(x), 1.0) if x > 1 else 1.0


def expansion_bound(delta_max: int, input_makespan) -> float:
    """``(log2 dmax)^2 * input + 8 dmax log2 dmax`` with logs clamped at 1."""
    lg = _log2c(delta_max)
    return lg * lg * float(input_makespan) + 8 * delta_max * lg


Triple = tuple[int, int, Fraction]


def _pre_shift(instance: Instance, schedule: Schedule, sign: int) -> list[Triple]:
    dm = instance.delta_max
    out = [(j, m, t + dm + sign * instance.machine[m].out_delay) for j, m, t in schedule.triples()]
    out.sort(key=lambda x: (x[2], x[1], x[0]))
    return out


def _source_gap(orig: Instance, y: Triple, x: Triple, to_inout: bool) -> int:
    """Delay the pre-shifted source schedule is known to respect from y to x."""
    u, j, _ = y
    v, i, _ = x
    mj, mi, ju, jv = orig.machine[j], orig.machine[i], orig.job[u], orig.job[v]
    if to_inout:
        return mj.out_delay + mi.in_delay + jv.in_delay + jv.out_delay
    return mi.out_delay + mi.in_delay + ju.out_delay + jv.in_delay


def _retime(target: Instance, members: list[Triple], covered) -> tuple[dict[Triple, Fraction], Fraction]:
    """Greedy monotone retiming against ``target``.

    Placements are visited by start time.  Each is delayed just enough that
    an earlier-visited copy of every uncovered predecessor is available; the
    accumulated delay carries over, so gaps between placements never shrink
    and capacity is preserved.  ``covered(u, x)`` marks predecessors served
    from outside the member list.
    """
    anc = target.dag.ancestors
    seen: dict[int, list[tuple[int, Fraction, Fraction]]] = {}
    new: dict[Triple, Fraction] = {}
    acc = Fraction(0)
    for x in members:
        v, i, t = x
        nt = t + acc
        for u in anc[v]:
            if covered(u, x):
                continue
            best = None
            for j, ns, os_ in seen.get(u, ()):
                dur = target.machine[j].duration
                if os_ + dur > t:
                    continue
                need = ns + dur + (0 if j == i else target.comm_delay(u, j, v, i))
                if best is None or need < best:
                    best = need
            if best is None:
                raise ReductionError(f"predecessor {u} of job {v} has no usable copy")
            if best > nt:
                nt = best
        acc = nt - t
        new[x] = nt
        seen.setdefault(v, []).append((i, nt, t))
    return new, acc


def _blocks(orig: Instance, placed: list[Triple]) -> list[_Block]:
    anc = orig.dag.ancestors
    keys = {j.id: phase_key(j) for j in orig.jobs}
    buckets: dict[tuple[PhaseKey, int], list[Triple]] = {}
    by_job: dict[int, list[Triple]] = {}
    for x in placed:
        k = keys[x[0]]
        buckets.setdefault((k, math.floor(x[2] / k.window)), []).append(x)
        by_job.setdefault(x[0], []).append(x)
    blocks = []
    for (k, d), own in buckets.items():
        lo, hi = d * k.window, (d + 1) * k.window
        need = set().union(*(anc[x[0]] for x in own))
        extra = [y for u in need for y in by_job.get(u, ()) if lo <= y[2] < hi]
        members = sorted(set(own) | set(extra), key=lambda x: (x[2], x[1], x[0]))
        blocks.append(_Block(k, d, lo, members))
    # window start first; at equal starts larger classes go first
    blocks.sort(key=lambda b: (b.start, -b.key.delta, -b.key.a, -b.key.b))
    return blocks


def _layout(target: Instance, orig: Instance, placed: list[Triple], to_inout: bool) -> Schedule:
    blocks = _blocks(orig, placed)
    first: dict[Triple, int] = {}
    for pos, b in enumerate(blocks):
        for x in b.members:
            first.setdefault(x, pos)
    by_job: dict[int, list[Triple]] = {}
    for x in placed:
        by_job.setdefault(x[0], []).append(x)

    triples = []
    frontier = None
    floor = None  # max over laid-out blocks of shift + growth + out pad
    for pos, b in enumerate(blocks):

        def covered(u, x, pos=pos):
            for y in by_job.get(u, ()):
                if first[y] >= pos:
                    continue
                c = y[2] + orig.machine[y[1]].duration
                if c <= x[2] and (y[1] == x[1] or c <= x[2] - _source_gap(orig, y, x, to_inout)):
                    return True
            return False

        new, growth = _retime(target, b.members, covered)
        outs = [orig.job[x[0]].out_delay for x in b.members]
        outpad = max(outs) if to_inout else 0
        inpad = 0 if to_inout else max(outs)
        rel0 = min(new.values())
        shift = -rel0
        if frontier is not None:
            shift = max(shift, frontier - rel0, floor + inpad)
        for x in b.members:
            triples.append((x[0], x[1], new[x] + shift))
        end = max(new[x] + target.machine[x[1]].duration for x in b.members) + shift
        frontier = end if frontier is None else max(frontier, end)
        f = shift + growth + outpad
        floor = f if floor is None else max(floor, f)
    return Schedule.from_triples(triples)


def _greedy(target: Instance, placed: list[Triple]) -> Schedule:
    new, _ = _retime(target, placed, lambda u, x: False)
    lo = min(new.values())
    return Schedule.from_triples((x[0], x[1], t - lo) for x, t in new.items())


def _expand(target: Instance, orig: Instance, schedule: Schedule, source: Instance, to_inout: bool, method: str):
    if method not in ("phases", "greedy", "auto"):
        raise ValueError(f"unknown expansion method {method!r}")
    if not len(schedule):
        return Schedule(), ExpansionReport(method, Fraction(0), Fraction(0), 0, 0.0)
    placed = _pre_shift(orig, schedule, -1 if to_inout else 1)
    ms_in = makespan(schedule, source)
    bound = expansion_bound(orig.delta_max, ms_in)
    candidates = []
    if method in ("phases", "auto"):
        candidates.append(("phases", _layout(target, orig, placed, to_inout)))
    if method in ("greedy", "auto"):
        candidates.append(("greedy", _greedy(target, placed)))
    if method == "auto" and schedule.duplicate_count() == 0:
        # block layout may copy ancestors; keep duplication-free inputs that way
        candidates = [c for c in candidates if c[1].duplicate_count() == 0]
    best = None
    for name, s in candidates:
        rep = validate_schedule(target, s, first_only=True)
        if not rep.ok:
            raise ReductionError(f"{name} expansion produced an invalid schedule: {rep.violations[0]}")
        ms = makespan(s, target)
        if best is None or ms < best[2]:
            best = (name, s, ms)
    name, s, ms = best
    nb = len(_blocks(orig, placed)) if name == "phases" else 1
    flag = schedule.no_duplication and s.duplicate_count() == 0
    return s.with_flag(flag), ExpansionReport(name, ms_in, ms, nb, bound)


def expand_in_to_inout(instance: Instance, in_only_schedule: Schedule, *, method: str = "auto", report: bool = False):
    """Turn a schedule of the merged instance into one valid for ``instance``.

    Placements are pre-shifted by ``delta_max - out_i``, bucketed by the job
    delay class and time window, retimed inside each block and laid out block
    by block with an out-communication pad after each block.  ``method`` is
    ``"phases"``, ``"greedy"`` (one retiming pass, no blocks) or ``"auto"``
    (the shorter result, ties to phases).
    """
    merged = merge_out_into_in(instance)
    s, rep = _expand(instance, instance, in_only_schedule, merged, True, method)
    return (s, rep) if report else s


def expand_inout_to_in(instance: Instance, inout_schedule: Schedule, *, method: str = "auto", report: bool = False):
    """Mirror of :func:`expand_in_to_inout`: in/out schedule to merged schedule.

    The pre-shift is ``delta_max + out_i`` and the pad sits at block start.
    """
    merged = merge_out_into_in(instance)
    s, rep = _expand(merged, instance, inout_schedule, instance, False, method)
    return (s, rep) if report else s


# ------------------------------------------------------------------- UMPS


def make_umps_instance(partition: Mapping[int, Iterable[int]], edges: Iterable[tuple[int, int]] = ()) -> Instance:
    """Pinned-machine instance: unit machines, no delays, job -> machine map."""
    part = {int(i): tuple(sorted(js)) for i, js in partition.items()}
    jobs = tuple(Job(j) for js in part.values() for j in js)
    machines = tuple(Machine(i) for i in part)
    return Instance(jobs, machines, tuple(edges), UMPS, partition=part)


UmpsInstance = Instance


def umps_aux_ids(umps: Instance) -> dict[int, tuple[int, int]]:
    """Ids of the guard jobs ``(u_i, v_i)`` added for each machine."""
    base = max((j.id for j in umps.jobs), default=-1) + 1
    return {i: (base + 2 * k, base + 2 * k + 1) for k, i in enumerate(sorted(umps.machine))}


def umps_to_job_machine(umps: Instance) -> Instance:
    """Reduce pinned-machine scheduling to job-machine delays.

    Each machine ``i`` gets guard jobs ``u_i -> V_i -> v_i``; every job of
    ``V_i`` and its guards cost nothing on ``i`` and ``n`` anywhere else.
    """
    if umps.model != UMPS:
        raise ReductionError("expected a pinned-machine (umps) instance")
    n = umps.n
    aux = umps_aux_ids(umps)
    jobs = list(umps.jobs)
    edges = list(umps.edges)
    table: dict[int, dict[int, int]] = {}
    mids = sorted(umps.machine)
    for i in mids:
        ui, vi = aux[i]
        jobs += [Job(ui), Job(vi)]
        for v in umps.partition[i]:
            edges += [(ui, v), (v, vi)]
        for v in (*umps.partition[i], ui, vi):
            table[v] = {j: (0 if j == i else n) for j in mids}
    machines = tuple(Machine(i) for i in mids)
    return Instance(tuple(jobs), machines, tuple(edges), JOB_MACHINE, table=table)


def umps_forward_schedule(umps: Instance, schedule: Schedule) -> Schedule:
    """Guarded schedule of the reduced instance from a pinned schedule.

    ``u_i`` runs first, the pinned schedule follows one slot later and
    ``v_i`` runs last, so the makespan grows by exactly two.
    """
    D = makespan(schedule, umps)
    aux = umps_aux_ids(umps)
    triples = [(j, m, t + 1) for j, m, t in schedule.triples()]
    for i, (ui, vi) in aux.items():
        triples += [(ui, i, 0), (vi, i, D + 1)]
    return Schedule.from_triples(triples, True)


@dataclass(frozen=True)
class UmpsConversion:
    schedule: Schedule
    path: str  # "list" | "identity" | "split" | "interleave"
    C: Fraction


def _floor_starts(schedule: Schedule) -> Schedule:
    return Schedule.from_triples(((j, m, math.floor(t)) for j, m, t in schedule.triples()), schedule.no_duplication)


def jm_schedule_to_umps(umps: Instance, jm_schedule: Schedule, *, report: bool = False):
    """Convert a no-duplication schedule of the reduced instance back.

    With makespan ``C >= n`` jobs are list scheduled on their own machines.
    Otherwise each ``V_i`` splits into jobs run away from home (all on the
    machine of ``u_i``, together with their predecessors) and jobs run at
    home.  Away jobs keep their times on their home machine and home jobs
    move to ``C + t + 1``.  When that layout breaks a precedence (a home job
    feeding an away job of another machine) the two groups are interleaved
    instead: home jobs at ``2t`` and away jobs at ``2t + 1``.

    Raises:
        ReductionError: if the input is invalid, duplicated, or hits the
            impossible guard placement.
    """
    reduced = umps_to_job_machine(umps)
    rep = validate_schedule(reduced, jm_schedule)
    if not rep.ok:
        raise ReductionError(f"input schedule invalid: {rep.violations[0]}")
    if any(len(ps) != 1 for ps in jm_schedule.placements.values()):
        raise ReductionError("input schedule duplicates jobs")
    sched = _floor_starts(jm_schedule)
    C = makespan(sched, reduced)
    n = umps.n
    home = umps.assigned_machine
    where = {j: ps[0] for j, ps in sched.placements.items()}
    if C >= n:
        slot: dict[int, int] = {}
        free = {i: 0 for i in umps.machine}
        for v in umps.dag.order:
            i = home[v]
            t = max([free[i]] + [slot[u] + 1 for u in umps.dag.predecessors(v)])
            slot[v] = t
            free[i] = t + 1
        out = Schedule.from_triples(((v, home[v], t) for v, t in slot.items()), True)
        return _finish(umps, out, "list", C, report)
    aux = umps_aux_ids(umps)
    away: set[int] = set()
    for i, (ui, vi) in aux.items():
        mu = where[ui].machine
        members = umps.partition[i]
        if not members:
            continue
        if mu == i and where[vi].machine != i:
            raise ReductionError(f"guard jobs of machine {i} placed inconsistently for makespan {C} < {n}")
        for v in members:
            if where[v].machine != i:
                if where[v].machine != mu:
                    raise ReductionError(f"job {v} runs away from home off the guard machine")
                away.add(v)
    orig = [(v, where[v].machine, where[v].start) for v in home]
    if not away:
        out = Schedule.from_triples(orig, True)
        return _finish(umps, out, "identity", C, report)
    split = Schedule.from_triples(
        ((v, home[v], t if v in away else C + t + 1) for v, _, t in orig), True
    )
    if validate_schedule(umps, split, first_only=True).ok:
        return _finish(umps, split, "split", C, report)
    inter = Schedule.from_triples(((v, home[v], 2 * t + (1 if v in away else 0)) for v, _, t in orig), True)
    return _finish(umps, inter, "interleave", C, report)


def _finish(umps: Instance, s: Schedule, path: str, C, report: bool):
    rep = validate_schedule(umps, s)
    if not rep.ok:
        raise ReductionError(f"conversion ({path}) produced an invalid schedule: {rep.violations[0]}")
    return UmpsConversion(s, path, C) if report else s
