"""Core domain types and the schedule validator.

Times are exact :class:`fractions.Fraction` values.  A placement stores the
START time of a copy; the copy occupies its machine over the half-open
interval ``[start, start + 1/s_i)``.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

Time = Fraction

ADDITIVE = "additive"
JOB_MACHINE = "job_machine"
UMPS = "umps"
MODELS = (ADDITIVE, JOB_MACHINE, UMPS)


class ModelError(ValueError):
    """Raised for structurally invalid instances or schedules."""


class CycleError(ModelError):
    def __init__(self, cycle: Sequence[int]):
        self.cycle = tuple(cycle)
        super().__init__("precedence cycle: " + " -> ".join(map(str, self.cycle)))


def as_time(value) -> Fraction:
    """Coerce ints, Fractions and ``"p/q"`` strings to an exact time."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, str)):
        return Fraction(value)
    raise TypeError(f"cannot use {value!r} as an exact time")


@dataclass(frozen=True, order=True)
class Job:
    id: int
    in_delay: int = 0
    out_delay: int = 0

    def __post_init__(self):
        if self.in_delay < 0 or self.out_delay < 0:
            raise ModelError(f"job {self.id}: delays must be non-negative")


@dataclass(frozen=True, order=True)
class Machine:
    id: int
    size: int = 1
    speed: int = 1
    in_delay: int = 0
    out_delay: int = 0

    def __post_init__(self):
        if self.size < 1 or self.speed < 1:
            raise ModelError(f"machine {self.id}: size and speed must be >= 1")
        if self.in_delay < 0 or self.out_delay < 0:
            raise ModelError(f"machine {self.id}: delays must be non-negative")

    @property
    def duration(self) -> Fraction:
        return Fraction(1, self.speed)


class PrecedenceDag:
    """Immutable DAG over job ids; ``u -> v`` means ``u`` precedes ``v``."""

    def __init__(self, nodes: Iterable[int], edges: Iterable[tuple[int, int]]):
        self._nodes = tuple(sorted(set(nodes)))
        node_set = set(self._nodes)
        es = set()
        for u, v in edges:
            if u not in node_set or v not in node_set:
                raise ModelError(f"edge ({u}, {v}) references an unknown job")
            if u == v:
                raise CycleError([u, u])
            es.add((u, v))
        self._edges = tuple(sorted(es))
        succ: dict[int, list[int]] = {x: [] for x in self._nodes}
        pred: dict[int, list[int]] = {x: [] for x in self._nodes}
        for u, v in self._edges:
            succ[u].append(v)
            pred[v].append(u)
        self._succ = {k: tuple(v) for k, v in succ.items()}
        self._pred = {k: tuple(v) for k, v in pred.items()}
        self._order = _kahn(self._nodes, self._succ, self._pred)

    @property
    def nodes(self) -> tuple[int, ...]:
        return self._nodes

    @property
    def edges(self) -> tuple[tuple[int, int], ...]:
        return self._edges

    def successors(self, v: int) -> tuple[int, ...]:
        return self._succ[v]

    def predecessors(self, v: int) -> tuple[int, ...]:
        return self._pred[v]

    @property
    def order(self) -> tuple[int, ...]:
        return self._order

    @cached_property
    def ancestors(self) -> Mapping[int, frozenset[int]]:
        """Transitive predecessors of every node."""
        anc: dict[int, frozenset[int]] = {}
        for v in self._order:
            acc: set[int] = set()
            for u in self._pred[v]:
                acc.add(u)
                acc |= anc[u]
            anc[v] = frozenset(acc)
        return anc

    @cached_property
    def descendants(self) -> Mapping[int, frozenset[int]]:
        desc: dict[int, set[int]] = {v: set() for v in self._nodes}
        for v, us in self.ancestors.items():
            for u in us:
                desc[u].add(v)
        return {v: frozenset(s) for v, s in desc.items()}

    @cached_property
    def closure_pairs(self) -> tuple[tuple[int, int], ...]:
        """All pairs ``(u, v)`` with ``u`` a transitive predecessor of ``v``."""
        return tuple(sorted((u, v) for v, us in self.ancestors.items() for u in us))

    def precedes(self, u: int, v: int) -> bool:
        return u in self.ancestors[v]

    def induced(self, subset: Iterable[int]) -> "PrecedenceDag":
        """Sub-DAG on ``subset`` keeping transitive relations as edges."""
        keep = set(subset)
        edges = [(u, v) for v in keep for u in self.ancestors[v] if u in keep]
        return PrecedenceDag(keep, edges)

    def __eq__(self, other):
        return isinstance(other, PrecedenceDag) and (self._nodes, self._edges) == (
            other._nodes,
            other._edges,
        )

    def __hash__(self):
        return hash((self._nodes, self._edges))

    def __repr__(self):
        return f"PrecedenceDag(nodes={len(self._nodes)}, edges={len(self._edges)})"


def _kahn(nodes, succ, pred) -> tuple[int, ...]:
    indeg = {v: len(pred[v]) for v in nodes}
    heap = [v for v in nodes if indeg[v] == 0]
    heapq.heapify(heap)
    out = []
    while heap:
        v = heapq.heappop(heap)
        out.append(v)
        for w in succ[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                heapq.heappush(heap, w)
    if len(out) != len(nodes):
        raise CycleError(_find_cycle({v for v in nodes if indeg[v] > 0}, pred))
    return tuple(out)


def _find_cycle(remaining: set[int], pred) -> list[int]:
    # every remaining node has a remaining predecessor, so walking backwards
    # must revisit a node
    seen: dict[int, int] = {}
    path = []
    v = min(remaining)
    while v not in seen:
        seen[v] = len(path)
        path.append(v)
        v = min(w for w in pred[v] if w in remaining)
    cyc = path[seen[v]:] + [v]
    return cyc[::-1]


def topological_order(dag: PrecedenceDag | "Instance") -> tuple[int, ...]:
    """Return job ids in a topological order, ties broken by smallest id.

    Raises:
        CycleError: if the edge set contains a cycle (raised at DAG
            construction time, naming a witness cycle).
    """
    if isinstance(dag, Instance):
        return dag.dag.order
    return dag.order


@dataclass(frozen=True)
class Instance:
    """A scheduling instance under one of the three delay models.

    ``table`` maps job -> machine -> delay for the job-machine model and
    ``partition`` maps machine -> assigned jobs for the pinned model.
    """

    jobs: tuple[Job, ...]
    machines: tuple[Machine, ...]
    edges: tuple[tuple[int, int], ...] = ()
    model: str = ADDITIVE
    table: Mapping[int, Mapping[int, int]] | None = None
    partition: Mapping[int, tuple[int, ...]] | None = None

    def __post_init__(self):
        object.__setattr__(self, "jobs", tuple(sorted(self.jobs)))
        object.__setattr__(self, "machines", tuple(sorted(self.machines)))
        object.__setattr__(self, "edges", tuple(sorted(set(map(tuple, self.edges)))))
        if self.model not in MODELS:
            raise ModelError(f"unknown delay model {self.model!r}")
        jids = [j.id for j in self.jobs]
        mids = [m.id for m in self.machines]
        if len(set(jids)) != len(jids) or len(set(mids)) != len(mids):
            raise ModelError("duplicate job or machine id")
        if not self.machines:
            raise ModelError("instance needs at least one machine")
        _ = self.dag  # validates edges and acyclicity
        if self.model == JOB_MACHINE:
            if self.table is None:
                raise ModelError("job_machine model needs a delay table")
            tbl = {}
            for j in jids:
                row = self.table.get(j)
                if row is None or any(m not in row for m in mids):
                    raise ModelError(f"delay table incomplete for job {j}")
                if any(row[m] < 0 for m in mids):
                    raise ModelError(f"negative table delay for job {j}")
                tbl[j] = {m: int(row[m]) for m in mids}
            object.__setattr__(self, "table", tbl)
        if self.model == UMPS:
            if self.partition is None:
                raise ModelError("umps model needs a job partition")
            seen: dict[int, int] = {}
            part = {}
            for m in mids:
                members = tuple(sorted(self.partition.get(m, ())))
                for j in members:
                    if j in seen or j not in set(jids):
                        raise ModelError(f"partition invalid at job {j}")
                    seen[j] = m
                part[m] = members
            if set(seen) != set(jids) or set(self.partition) - set(mids):
                raise ModelError("partition must cover all jobs with known machines")
            if any(m.size != 1 or m.speed != 1 for m in self.machines):
                raise ModelError("umps machines must have unit size and speed")
            object.__setattr__(self, "partition", part)

    @cached_property
    def dag(self) -> PrecedenceDag:
        return PrecedenceDag((j.id for j in self.jobs), self.edges)

    @cached_property
    def job(self) -> Mapping[int, Job]:
        return {j.id: j for j in self.jobs}

    @cached_property
    def machine(self) -> Mapping[int, Machine]:
        return {m.id: m for m in self.machines}

    @cached_property
    def assigned_machine(self) -> Mapping[int, int]:
        if self.partition is None:
            return {}
        return {j: m for m, js in self.partition.items() for j in js}

    @property
    def n(self) -> int:
        return len(self.jobs)

    @property
    def m(self) -> int:
        return len(self.machines)

    @cached_property
    def delta_max(self) -> int:
        vals = [x.in_delay + x.out_delay for x in (*self.jobs, *self.machines)]
        if self.table:
            vals += [d for row in self.table.values() for d in row.values()]
        return max(vals, default=0)

    def comm_delay(self, u: int, src: int, v: int, dst: int) -> int:
        """Delay before ``u`` (run on ``src``) is usable by ``v`` on ``dst``."""
        if self.model == ADDITIVE:
            return (
                self.machine[src].out_delay
                + self.job[u].out_delay
                + self.machine[dst].in_delay
                + self.job[v].in_delay
            )
        if self.model == JOB_MACHINE:
            return self.table[v][dst]
        return 0

    def with_jobs(self, jobs: Iterable[Job]) -> "Instance":
        return Instance(tuple(jobs), self.machines, self.edges, self.model, self.table, self.partition)

    def with_machines(self, machines: Iterable[Machine]) -> "Instance":
        return Instance(self.jobs, tuple(machines), self.edges, self.model, self.table, self.partition)

    def restrict(self, job_ids: Iterable[int], machine_ids: Iterable[int] | None = None) -> "Instance":
        """Sub-instance on a job subset, keeping transitive precedence."""
        keep = set(job_ids)
        mids = set(self.machine) if machine_ids is None else set(machine_ids)
        sub = self.dag.induced(keep)
        table = None
        if self.table is not None:
            table = {j: {i: self.table[j][i] for i in mids} for j in keep}
        part = None
        if self.partition is not None:
            part = {i: tuple(j for j in self.partition[i] if j in keep) for i in mids}
        return Instance(
            tuple(self.job[j] for j in keep),
            tuple(self.machine[i] for i in mids),
            sub.edges,
            self.model,
            table,
            part,
        )


class Placement(NamedTuple):
    machine: int
    start: Fraction


@dataclass(frozen=True)
class Schedule:
    """Mapping job -> sorted tuple of placements."""

    placements: Mapping[int, tuple[Placement, ...]] = field(default_factory=dict)
    no_duplication: bool = False

    def __post_init__(self):
        norm = {}
        for j in sorted(self.placements):
            ps = tuple(sorted({Placement(int(m), as_time(t)) for m, t in self.placements[j]}, key=_pkey))
            if ps:
                norm[j] = ps
        object.__setattr__(self, "placements", norm)

    @classmethod
    def from_triples(cls, triples: Iterable[tuple[int, int, object]], no_duplication: bool = False) -> "Schedule":
        acc: dict[int, list[tuple[int, Fraction]]] = {}
        for j, m, t in triples:
            acc.setdefault(j, []).append((m, as_time(t)))
        return cls(acc, no_duplication)

    def triples(self) -> Iterator[tuple[int, int, Fraction]]:
        for j, ps in self.placements.items():
            for p in ps:
                yield j, p.machine, p.start

    def key(self) -> tuple:
        return (self.no_duplication, tuple(sorted(self.triples())))

    def __hash__(self):
        return hash(self.key())

    def __len__(self):
        return sum(len(ps) for ps in self.placements.values())

    def jobs(self) -> tuple[int, ...]:
        return tuple(self.placements)

    def copies(self, job: int) -> tuple[Placement, ...]:
        return self.placements.get(job, ())

    def shifted(self, delta) -> "Schedule":
        d = as_time(delta)
        return Schedule.from_triples(((j, m, t + d) for j, m, t in self.triples()), self.no_duplication)

    def merged(self, other: "Schedule") -> "Schedule":
        return Schedule.from_triples((*self.triples(), *other.triples()), self.no_duplication and other.no_duplication)

    def with_flag(self, no_duplication: bool) -> "Schedule":
        return Schedule(self.placements, no_duplication)

    def duplicate_count(self) -> int:
        return sum(len(ps) - 1 for ps in self.placements.values())


def _pkey(p: Placement):
    return (p.start, p.machine)


class Violation(NamedTuple):
    kind: str
    job: int | None
    machine: int | None
    time: Fraction | None
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[Violation, ...]
    makespan: Fraction

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}


def makespan(schedule: Schedule, instance: Instance) -> Fraction:
    """Maximum completion time over all placements."""
    best = None
    for _, m, t in schedule.triples():
        c = t + instance.machine[m].duration
        if best is None or c > best:
            best = c
    if best is None:
        raise ModelError("makespan of an empty schedule")
    return best


def _check_structure(instance: Instance, schedule: Schedule) -> None:
    for j, m, t in schedule.triples():
        if j not in instance.job:
            raise ModelError(f"schedule references unknown job {j}")
        if m not in instance.machine:
            raise ModelError(f"schedule references unknown machine {m}")
        if t < 0:
            raise ModelError(f"job {j} starts at negative time {t}")


def validate_schedule(instance: Instance, schedule: Schedule, *, first_only: bool = False) -> ValidationReport:
    """Check a schedule against capacity, availability and duplication rules.

    A predecessor copy is usable by ``v`` on machine ``i`` at time ``t`` if it
    completes on ``i`` by ``t``, or on any machine by ``t`` minus the
    communication delay of the model.  Any single copy suffices.  Every
    transitive predecessor is checked, since communication is not transitive.

    ``first_only`` stops at the first violation (used in tight loops).

    Raises:
        ModelError: for unknown ids or negative start times.
    """
    _check_structure(instance, schedule)
    out: list[Violation] = []

    def add(v: Violation) -> bool:
        out.append(v)
        return first_only

    pl = schedule.placements
    done = False
    for j in instance.job:
        if j not in pl:
            if add(Violation("missing", j, None, None, "job has no placement")):
                return _report(instance, schedule, out)
    if schedule.no_duplication:
        for j, ps in pl.items():
            if len(ps) > 1:
                if add(Violation("duplication", j, None, None, f"{len(ps)} copies")):
                    return _report(instance, schedule, out)
    if instance.model == UMPS:
        home = instance.assigned_machine
        for j, m, t in schedule.triples():
            if m != home[j]:
                if add(Violation("assignment", j, m, t, f"job belongs on machine {home[j]}")):
                    return _report(instance, schedule, out)
    # capacity sweep over half-open intervals
    per_machine: dict[int, list[tuple[Fraction, int, int]]] = {}
    for j, m, t in schedule.triples():
        d = instance.machine[m].duration
        ev = per_machine.setdefault(m, [])
        ev.append((t, 1, j))
        ev.append((t + d, 0, j))
    for m, ev in per_machine.items():
        ev.sort()
        cap = instance.machine[m].size
        busy = 0
        for t, kind, j in ev:
            busy += 1 if kind else -1
            if busy > cap:
                if add(Violation("capacity", j, m, t, f"{busy} jobs on size-{cap} machine")):
                    return _report(instance, schedule, out)
    # availability
    anc = instance.dag.ancestors
    for v, ps in pl.items():
        for p in ps:
            for u in sorted(anc[v]):
                kind = _availability(instance, pl.get(u, ()), u, v, p)
                if kind and add(Violation(kind, v, p.machine, p.start, f"predecessor {u}")):
                    done = True
                    break
            if done:
                break
        if done:
            break
    return _report(instance, schedule, out)


def _availability(instance: Instance, copies, u: int, v: int, p: Placement) -> str | None:
    if not copies:
        return "precedence"
    t = p.start
    any_done = False
    for q in copies:
        c = q.start + instance.machine[q.machine].duration
        if c > t:
            continue
        any_done = True
        if instance.model == UMPS:
            return None
        if q.machine == p.machine:
            return None
        if c <= t - instance.comm_delay(u, q.machine, v, p.machine):
            return None
    return "availability" if any_done else "precedence"


def _report(instance, schedule, out) -> ValidationReport:
    ms = makespan(schedule, instance) if len(schedule) else Fraction(0)
    return ValidationReport(not out, tuple(out), ms)


def is_valid(instance: Instance, schedule: Schedule) -> bool:
    return validate_schedule(instance, schedule, first_only=True).ok


def critical_path(instance: Instance | PrecedenceDag, job_subset: Iterable[int] | None = None) -> int:
    """Number of jobs on the longest chain inside ``job_subset``."""
    dag = instance.dag if isinstance(instance, Instance) else instance
    keep = set(dag.nodes if job_subset is None else job_subset)
    if not keep <= set(dag.nodes):
        raise ModelError("subset contains unknown jobs")
    depth: dict[int, int] = {}
    anc = dag.ancestors
    for v in dag.order:
        if v in keep:
            depth[v] = 1 + max((depth[u] for u in anc[v] if u in depth), default=0)
    return max(depth.values(), default=0)
