"""Exact search for tiny instances, an independent feasibility checker,
baselines and seeded instance generation."""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator

from .model import (
    ADDITIVE,
    JOB_MACHINE,
    UMPS,
    Instance,
    Job,
    Machine,
    ModelError,
    Schedule,
    critical_path,
    validate_schedule,
)


class OracleError(ValueError):
    """Instance too large for exhaustive search."""


MAX_JOBS = 8
MAX_MACHINES = 3
MAX_HORIZON = 16


def tick(instance: Instance) -> Fraction:
    """Grid step: one over the lcm of all speeds."""
    return Fraction(1, math.lcm(*(m.speed for m in instance.machines)))


# ------------------------------------------------- independent checker


def _preds_closure(instance: Instance) -> dict[int, set[int]]:
    direct: dict[int, list[int]] = {j.id: [] for j in instance.jobs}
    for u, v in instance.edges:
        direct[v].append(u)
    memo: dict[int, set[int]] = {}

    def up(v):
        if v not in memo:
            acc: set[int] = set()
            for u in direct[v]:
                acc.add(u)
                acc |= up(u)
            memo[v] = acc
        return memo[v]

    for v in direct:
        up(v)
    return memo


def _delay(instance: Instance, u: int, src: int, v: int, dst: int) -> int:
    if instance.model == JOB_MACHINE:
        return instance.table[v][dst]
    if instance.model == UMPS:
        return 0
    ms, md, ju, jv = instance.machine[src], instance.machine[dst], instance.job[u], instance.job[v]
    return ms.out_delay + ju.out_delay + md.in_delay + jv.in_delay


def _max_comm(instance: Instance) -> int:
    if instance.model == JOB_MACHINE:
        return max((d for row in instance.table.values() for d in row.values()), default=0)
    if instance.model == UMPS:
        return 0
    js, ms = instance.jobs, instance.machines
    return (
        max(m.out_delay for m in ms) + max(m.in_delay for m in ms)
        + max((j.out_delay for j in js), default=0) + max((j.in_delay for j in js), default=0)
    )


def feasible(instance: Instance, schedule: Schedule) -> bool:
    """Second, separately written feasibility test used to cross-check the
    validator.  Capacity is checked at every start point."""
    pl = schedule.placements
    if set(pl) != set(instance.job):
        return False
    if schedule.no_duplication and any(len(ps) != 1 for ps in pl.values()):
        return False
    copies = [(j, p.machine, p.start, p.start + Fraction(1, instance.machine[p.machine].speed)) for j, ps in pl.items() for p in ps]
    for j, i, s, _ in copies:
        if instance.model == UMPS and instance.assigned_machine[j] != i:
            return False
    for j, i, s, _ in copies:
        running = sum(1 for _, i2, s2, e2 in copies if i2 == i and s2 <= s < e2)
        if running > instance.machine[i].size:
            return False
    preds = _preds_closure(instance)
    for v, i, s, _ in copies:
        for u in preds[v]:
            ok = False
            for u2, j, s2, e2 in copies:
                if u2 != u or e2 > s:
                    continue
                if instance.model == UMPS or j == i or e2 + _delay(instance, u, j, v, i) <= s:
                    ok = True
                    break
            if not ok:
                return False
    return True


# ------------------------------------------------------- enumeration


def _grid(instance: Instance, horizon) -> list[Fraction]:
    step = tick(instance)
    return [k * step for k in range(int(Fraction(horizon) / step))]


def enumerate_candidates(
    instance: Instance,
    horizon,
    *,
    allow_dup: bool = False,
    limit: int = 20000,
    seed: int = 0,
) -> Iterator[Schedule]:
    """Candidate schedules with starts on the grid inside ``[0, horizon)``.

    Every assignment of one grid placement per job is produced when there
    are at most ``limit`` of them; otherwise ``limit`` seeded random ones,
    half of them built by a randomised greedy so that feasible schedules
    are well represented.  With ``allow_dup`` some jobs get a second copy.
    """
    slots = [(i.id, t) for i in instance.machines for t in _grid(instance, horizon)]
    jobs = [j.id for j in instance.jobs]
    total = len(slots) ** len(jobs)
    rng = random.Random(seed)
    if total <= limit and not allow_dup:
        for combo in itertools.product(slots, repeat=len(jobs)):
            yield Schedule.from_triples(((j, m, t) for j, (m, t) in zip(jobs, combo)), True)
        return
    for k in range(limit):
        if k % 2:
            triples = [(j, *rng.choice(slots)) for j in jobs]
        else:
            triples = _greedy_candidate(instance, slots, rng)
        if allow_dup:
            for j in jobs:
                if rng.random() < 0.3:
                    triples.append((j, *rng.choice(slots)))
        yield Schedule.from_triples(triples, not allow_dup)


def _greedy_candidate(instance: Instance, slots, rng: random.Random) -> list[tuple[int, int, Fraction]]:
    preds = _preds_closure(instance)
    out: list[tuple[int, int, Fraction]] = []
    done: dict[int, tuple[int, Fraction]] = {}
    for v in instance.dag.order:
        opts = []
        for m, t in slots:
            good = True
            for u in preds[v]:
                j, s = done[u]
                e = s + instance.machine[j].duration
                gap = 0 if (j == m or instance.model == UMPS) else _delay(instance, u, j, v, m)
                if e + gap > t:
                    good = False
                    break
            if good:
                opts.append((m, t))
        m, t = rng.choice(opts[: max(3, len(opts) // 4)] if opts and rng.random() < 0.8 else (opts or slots))
        done[v] = (m, t)
        out.append((v, m, t))
    return out


def enumerate_feasible(instance: Instance, horizon, **kw) -> set[Schedule]:
    """Candidates from :func:`enumerate_candidates` that pass :func:`feasible`."""
    return {s for s in enumerate_candidates(instance, horizon, **kw) if feasible(instance, s)}


# --------------------------------------------------------- exact search


@dataclass(frozen=True)
class OracleResult:
    makespan: Fraction | None
    schedule: Schedule | None
    horizon: Fraction
    explored: int = 0

    @property
    def feasible(self) -> bool:
        return self.schedule is not None


def brute_force_opt(
    instance: Instance,
    horizon=12,
    allow_dup: bool = True,
    *,
    grid: Fraction | None = None,
    max_jobs: int = MAX_JOBS,
    max_machines: int = MAX_MACHINES,
    max_horizon: int = MAX_HORIZON,
) -> OracleResult:
    """Minimum makespan over schedules with starts on the grid, up to ``horizon``.

    Candidate makespans are tried in increasing order; each is decided by
    a depth-first search over grid times that chooses which jobs start on
    which machines.  A job gets at most one copy per machine (a second one
    on the same machine never helps) and exactly one overall without
    duplication.  Failed states are memoised on the placed copies with
    completion times clipped at one maximum delay in the past.

    Returns an :class:`OracleResult` whose ``schedule`` is ``None`` when no
    schedule fits the horizon.
    """
    if instance.n > max_jobs or instance.m > max_machines or Fraction(horizon) > max_horizon:
        raise OracleError(f"instance too large for the oracle (n={instance.n}, m={instance.m}, horizon={horizon})")
    step = Fraction(grid) if grid is not None else tick(instance)
    H = Fraction(horizon)
    jobs = [j.id for j in instance.jobs]
    if not jobs:
        return OracleResult(Fraction(0), Schedule({}), H)
    preds = _preds_closure(instance)
    succs: dict[int, set[int]] = {v: set() for v in jobs}
    for v, us in preds.items():
        for u in us:
            succs[u].add(v)
    fastest = min(m.duration for m in instance.machines)
    # longest chain, in jobs, starting at each job
    tail: dict[int, int] = {}
    for v in reversed(instance.dag.order):
        tail[v] = 1 + max((tail[w] for w in instance.dag.successors(v)), default=0)
    cap_all = sum(m.size * m.speed for m in instance.machines)
    lb = max(critical_path(instance) * fastest, Fraction(len(jobs), cap_all))
    clip = _max_comm(instance) + 1
    explored = 0
    machines = list(instance.machines)

    def decide(M: Fraction):
        dead: set = set()
        copies: list[tuple[int, int, Fraction, Fraction]] = []

        def key(t):
            return (t, tuple(sorted((j, i, max(e - t, -clip)) for j, i, _, e in copies)))

        def startable(v, i, t):
            for u in preds[v]:
                ok = False
                for u2, j, _, e in copies:
                    if u2 == u and e <= t and (instance.model == UMPS or j == i or e + _delay(instance, u, j, v, i) <= t):
                        ok = True
                        break
                if not ok:
                    return False
            return True

        def rec(t: Fraction) -> bool:
            nonlocal explored
            explored += 1
            have = {j for j, *_ in copies}
            if len(have) == len(jobs):
                return True
            if t >= M:
                return False
            for v in jobs:
                if v not in have and t + tail[v] * fastest > M:
                    return False
            k = key(t)
            if k in dead:
                return False
            per_machine = []
            for mc in machines:
                d = mc.duration
                if t + d > M:
                    per_machine.append([()])
                    continue
                busy = sum(1 for _, i, s, e in copies if i == mc.id and s <= t < e)
                free = mc.size - busy
                cand = []
                for v in jobs:
                    if instance.model == UMPS and instance.assigned_machine[v] != mc.id:
                        continue
                    if any(j == v and i == mc.id for j, i, *_ in copies):
                        continue
                    if not allow_dup and v in have:
                        continue
                    if startable(v, mc.id, t):
                        cand.append(v)
                opts = [c for r in range(min(free, len(cand)), -1, -1) for c in itertools.combinations(cand, r)]
                per_machine.append(opts)
            for combo in itertools.product(*per_machine):
                if not allow_dup:
                    flat = [v for part in combo for v in part]
                    if len(flat) != len(set(flat)):
                        continue
                added = 0
                for mc, part in zip(machines, combo):
                    for v in part:
                        copies.append((v, mc.id, t, t + mc.duration))
                        added += 1
                if rec(t + step):
                    return True
                del copies[len(copies) - added:]
            dead.add(k)
            return False

        if rec(Fraction(0)):
            return Schedule.from_triples(((j, i, s) for j, i, s, _ in copies), not allow_dup)
        return None

    M = math.ceil(lb / step) * step
    while M <= H:
        found = decide(M)
        if found is not None:
            rep = validate_schedule(instance, found)
            if not rep.ok:
                raise AssertionError(f"oracle witness rejected by validator: {rep.violations[0]}")
            # the realised makespan can sit below the probe only off-grid
            return OracleResult(rep.makespan, found, H, explored)
        M += step
    return OracleResult(None, None, H, explored)


# ------------------------------------------------------------ baselines


def baseline_single_machine(instance: Instance) -> Schedule:
    """List schedule everything on the machine with the largest ``m_i s_i``.

    Pinned-machine instances are list-scheduled on their assigned machines
    in topological order instead.
    """
    from .udps import list_schedule

    if instance.model == UMPS:
        home = instance.assigned_machine
        free = {m.id: 0 for m in instance.machines}
        done: dict[int, int] = {}
        for v in instance.dag.order:
            t = max([free[home[v]], *(done[u] + 1 for u in instance.dag.predecessors(v))])
            done[v] = t
            free[home[v]] = t + 1
        return Schedule.from_triples(((v, home[v], t) for v, t in done.items()), True)
    best = max(instance.machines, key=lambda m: (m.size * m.speed, -m.id))
    return list_schedule(instance.dag, instance.job, best).with_flag(True)


# ----------------------------------------------------------- generation


@dataclass(frozen=True)
class GenParams:
    """Ranges are inclusive ``(lo, hi)`` pairs."""

    seed: int = 0
    n: int = 6
    m: int = 2
    edge_prob: float = 0.3
    job_delay: tuple[int, int] = (0, 2)
    machine_delay: tuple[int, int] = (0, 3)
    size: tuple[int, int] = (1, 1)
    speed: tuple[int, int] = (1, 1)
    model: str = ADDITIVE
    layers: int | None = None
    out_delays: bool = True
    symmetric: bool = False

    def __post_init__(self):
        if self.n < 0 or self.m < 1:
            raise ModelError("need n >= 0 and m >= 1")
        if not 0 <= self.edge_prob <= 1:
            raise ModelError("edge probability must lie in [0, 1]")
        for name in ("job_delay", "machine_delay", "size", "speed"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 0:
                raise ModelError(f"bad range for {name}: {(lo, hi)}")
        if self.size[0] < 1 or self.speed[0] < 1:
            raise ModelError("sizes and speeds start at 1")
        if self.model not in (ADDITIVE, JOB_MACHINE, UMPS):
            raise ModelError(f"unknown model {self.model!r}")


def generate(params: GenParams) -> Instance:
    """Seeded layered random DAG with random parameters."""
    r = random.Random(params.seed)
    n = params.n
    layers = params.layers or max(1, r.randint(1, max(1, n)))
    layer = sorted(r.randrange(layers) for _ in range(n))
    edges = [
        (u, v)
        for u in range(n)
        for v in range(u + 1, n)
        if layer[u] < layer[v] and r.random() < params.edge_prob
    ] if params.edge_prob < 1 else [(u, v) for u in range(n) for v in range(u + 1, n) if layer[u] < layer[v]]

    def pick(rng):
        return r.randint(*rng)

    if params.model == UMPS:
        machines = tuple(Machine(i) for i in range(params.m))
        part: dict[int, list[int]] = {i: [] for i in range(params.m)}
        for v in range(n):
            part[r.randrange(params.m)].append(v)
        return Instance(tuple(Job(v) for v in range(n)), machines, tuple(edges), UMPS, None, {i: tuple(js) for i, js in part.items()})

    def delays(rng):
        a = pick(rng)
        if params.symmetric:
            return a, a
        return a, (pick(rng) if params.out_delays else 0)

    jobs = []
    for v in range(n):
        a, b = delays(params.job_delay)
        jobs.append(Job(v, a, b))
    machines = []
    for i in range(params.m):
        size, speed = pick(params.size), pick(params.speed)
        a, b = delays(params.machine_delay)
        machines.append(Machine(i, size, speed, a, b))
    if params.model == JOB_MACHINE:
        table = {v: {i: pick(params.machine_delay) for i in range(params.m)} for v in range(n)}
        jobs = [Job(v) for v in range(n)]
        machines = [Machine(i, mc.size, mc.speed) for i, mc in enumerate(machines)]
        return Instance(tuple(jobs), tuple(machines), tuple(edges), JOB_MACHINE, table)
    return Instance(tuple(jobs), tuple(machines), tuple(edges), ADDITIVE)


__all__ = [
    "GenParams",
    "OracleError",
    "OracleResult",
    "baseline_single_machine",
    "brute_force_opt",
    "enumerate_candidates",
    "enumerate_feasible",
    "feasible",
    "generate",
    "tick",
]
