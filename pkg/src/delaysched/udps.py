"""Round-based duplication solver for one group of identical machines.

Every round places whole predecessor closures on the least loaded machine,
list-schedules each machine, then waits one delay before the next round.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

from .model import ADDITIVE, Instance, Job, Machine, PrecedenceDag, Schedule, ValidationReport, validate_schedule


class UdpsError(ValueError):
    """An input violates the predecessor-count or chain-length limits."""


class UdpsInvariantError(AssertionError):
    pass


@dataclass(frozen=True)
class UdpsInput:
    """Jobs ``U`` (precedence taken from ``dag``) and one machine group.

    ``machines`` are the ids of the group members, all with ``size`` and
    ``speed``.  ``delta`` is the uniform delay and ``alpha`` the
    duplication budget used by the precondition check.
    """

    jobs: frozenset[int]
    dag: PrecedenceDag
    machines: tuple[int, ...]
    size: int = 1
    speed: int = 1
    delta: int = 0
    alpha: Fraction = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "jobs", frozenset(self.jobs))
        object.__setattr__(self, "machines", tuple(sorted(self.machines)))
        object.__setattr__(self, "alpha", Fraction(self.alpha))
        if not self.machines:
            raise UdpsError("machine group is empty")
        if self.size < 1 or self.speed < 1:
            raise UdpsError("size and speed must be >= 1")

    @cached_property
    def sub(self) -> PrecedenceDag:
        return self.dag.induced(self.jobs)

    @property
    def pred_limit(self) -> Fraction:
        return self.alpha * self.delta * self.size * self.speed

    @property
    def chain_limit(self) -> Fraction:
        return self.alpha * self.delta * self.speed


def check_input(inp: UdpsInput, *, chain_slack: int = 0) -> None:
    """Raise :class:`UdpsError` naming the first job or chain over the limits.

    ``chain_slack`` loosens only the chain limit.
    """
    sub = inp.sub
    for v in sub.order:
        if len(sub.ancestors[v]) > inp.pred_limit:
            raise UdpsError(
                f"job {v} has {len(sub.ancestors[v])} predecessors in U, limit {inp.pred_limit}"
            )
    depth: dict[int, int] = {}
    for v in sub.order:
        depth[v] = 1 + max((depth[u] for u in sub.predecessors(v)), default=0)
        if depth[v] > inp.chain_limit + chain_slack:
            raise UdpsError(f"chain ending at job {v} has length {depth[v]}, limit {inp.chain_limit + chain_slack}")


def _chain(sub: PrecedenceDag, jobs: Iterable[int]) -> int:
    keep = set(jobs)
    depth: dict[int, int] = {}
    for v in sub.order:
        if v in keep:
            depth[v] = 1 + max((depth[u] for u in sub.ancestors[v] if u in depth), default=0)
    return max(depth.values(), default=0)


def list_schedule(
    dag: PrecedenceDag,
    jobs: Iterable[int],
    machine: Machine,
    start=0,
) -> Schedule:
    """Greedy list schedule of ``jobs`` on one machine from ``start``.

    Slots have length ``1/s``; each slot takes up to ``m`` ready jobs in
    topological order.  A job is ready once its predecessors inside
    ``jobs`` finished in an earlier slot; outside predecessors are assumed
    available.  The Graham bound ``|jobs|/(m s) + chain/s`` is asserted.
    """
    keep = set(jobs)
    start = Fraction(start)
    pos = {v: i for i, v in enumerate(dag.order)}
    pending = sorted(keep, key=pos.__getitem__)
    anc = dag.ancestors
    slot_of: dict[int, int] = {}
    slot = 0
    while pending:
        taken, rest = [], []
        for v in pending:
            if len(taken) < machine.size and all(slot_of.get(u, slot) < slot for u in anc[v] if u in keep):
                taken.append(v)
            else:
                rest.append(v)
        for v in taken:
            slot_of[v] = slot
        pending = rest
        slot += 1
    d = machine.duration
    out = Schedule.from_triples((v, machine.id, start + s * d) for v, s in slot_of.items())
    if keep:
        length = slot * d
        bound = Fraction(len(keep), machine.size * machine.speed) + _chain(dag, keep) * d
        if length > bound:
            raise UdpsInvariantError(f"list schedule length {length} exceeds Graham bound {bound}")
    return out


@dataclass(frozen=True)
class UdpsRound:
    start: Fraction
    loads: tuple[int, ...]
    placed: frozenset[int]
    end: Fraction

    @property
    def total(self) -> int:
        return sum(self.loads)


@dataclass(frozen=True)
class UdpsResult:
    schedule: Schedule
    rounds: tuple[UdpsRound, ...] = field(default_factory=tuple)
    makespan: Fraction = Fraction(0)
    bound: float = 0.0

    @property
    def within_bound(self) -> bool:
        return self.makespan < self.bound


def udps_bound(inp: UdpsInput) -> float:
    """``3 a d log2(a d m s) + 2|U|/(|G| m s) + d`` with the log clamped to 1."""
    a, d, m, s = float(inp.alpha), inp.delta, inp.size, inp.speed
    lg = max(math.log2(a * d * m * s), 1.0) if a * d * m * s > 0 else 1.0
    return 3 * a * d * lg + 2 * len(inp.jobs) / (len(inp.machines) * m * s) + d


def udps_solve(inp: UdpsInput, *, check: bool = True, report: bool = False):
    """Schedule ``inp.jobs`` on the group; the fragment starts at time 0.

    A job joins the current round together with all its remaining
    predecessors when at most half of those are already placed this round.
    Rounds are separated by at least ``delta``, so no cross-machine
    communication is needed inside a round.  Raises :class:`UdpsError` when
    ``check`` is set and the input exceeds its limits.
    """
    if check:
        check_input(inp)
    sub = inp.sub
    anc = sub.ancestors
    mids = inp.machines
    delta = Fraction(inp.delta)
    proto = {i: Machine(i, inp.size, inp.speed) for i in mids}
    remaining = set(inp.jobs)
    t = Fraction(0)
    pieces: list[Schedule] = []
    rounds: list[UdpsRound] = []
    while remaining:
        before = {v: len(anc[v] & remaining) for v in remaining}
        V: dict[int, set[int]] = {i: set() for i in mids}
        placed: set[int] = set()
        biggest = 0
        for v in sub.order:
            if v not in remaining:
                continue
            Uv = anc[v] & remaining
            dup = Uv & placed
            if len(Uv) >= 2 * len(dup):
                i = min(mids, key=lambda j: (len(V[j]), j))
                block = Uv | {v}
                biggest = max(biggest, len(block))
                V[i] |= block
                placed |= block
                loads = [len(V[j]) for j in mids]
                if max(loads) - min(loads) > biggest:
                    raise UdpsInvariantError("machine loads drifted apart")
        total = sum(len(V[i]) for i in mids)
        if total > 2 * len(placed):
            raise UdpsInvariantError(f"duplication load {total} exceeds twice {len(placed)}")
        end = t
        for i in mids:
            if V[i]:
                frag = list_schedule(sub, V[i], proto[i], t)
                pieces.append(frag)
                end = max(end, max(p + proto[i].duration for _, _, p in frag.triples()))
        remaining -= placed
        for v in remaining:
            left = len(anc[v] & remaining)
            if before[v] and 2 * left > before[v]:
                raise UdpsInvariantError(f"job {v}: remaining predecessors {left} not halved from {before[v]}")
        rounds.append(UdpsRound(t, tuple(len(V[i]) for i in mids), frozenset(placed), end))
        t = delta + max(t, end)
    out = Schedule({})
    for p in pieces:
        out = out.merged(p)
    if not report:
        return out
    ms = max((r.end for r in rounds), default=Fraction(0))
    return UdpsResult(out, tuple(rounds), ms, udps_bound(inp))


def udps_instance(inp: UdpsInput) -> Instance:
    """Additive instance whose validity rules match a uniform-delay fragment."""
    sub = inp.sub
    jobs = tuple(Job(v) for v in sub.nodes)
    machines = tuple(Machine(i, inp.size, inp.speed, inp.delta, 0) for i in inp.machines)
    return Instance(jobs, machines, sub.edges, ADDITIVE)


def validate_udps(inp: UdpsInput, schedule: Schedule) -> ValidationReport:
    return validate_schedule(udps_instance(inp), schedule)


def group_input(
    instance: Instance,
    jobs: Iterable[int],
    machine_ids: Sequence[int],
    delta: int,
    alpha=1,
) -> UdpsInput:
    """Build a :class:`UdpsInput` for machines that share size and speed."""
    ms = [instance.machine[i] for i in machine_ids]
    if len({(m.size, m.speed) for m in ms}) > 1:
        raise UdpsError("machines in a group must share size and speed")
    return UdpsInput(frozenset(jobs), instance.dag, tuple(machine_ids), ms[0].size, ms[0].speed, delta, Fraction(alpha))


__all__ = [
    "UdpsError",
    "UdpsInvariantError",
    "UdpsInput",
    "UdpsRound",
    "UdpsResult",
    "check_input",
    "list_schedule",
    "udps_bound",
    "udps_solve",
    "udps_instance",
    "validate_udps",
    "group_input",
]
