"""Schedules without duplication: pruning, duplication-free fragments and
the threshold test for symmetric delays."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping

from .grouping import round_and_group
from .lp import GENERAL_RELATED, build_lp, name_cstar, name_x
from .lp_solver import EPS, LpProblem, find_vertex_solution, solve
from .model import (
    ADDITIVE,
    Instance,
    Job,
    Machine,
    ModelError,
    PrecedenceDag,
    Schedule,
    critical_path,
    is_valid,
    makespan,
    validate_schedule,
)
from .udps import UdpsInput, list_schedule

log = logging.getLogger(__name__)


# ------------------------------------------------------------------ pruning


def prune_duplicates(instance: Instance, schedule: Schedule, *, report: bool = False):
    """Keep one copy per job.

    The earliest copy (ties by machine id) is kept first.  If that breaks
    validity, copies are instead removed one at a time, latest first, only
    while the schedule stays valid; leftover duplicates are counted.
    With ``report`` the pair ``(schedule, residual_duplicates)`` is returned.
    """
    first = Schedule({j: ps[:1] for j, ps in schedule.placements.items()}, True)
    if schedule.duplicate_count() == 0 or is_valid(instance, first):
        out = first if schedule.duplicate_count() else schedule.with_flag(True)
        return (out, 0) if report else out
    current = {j: list(ps) for j, ps in schedule.placements.items()}
    extra = sorted(
        ((p.start, p.machine, j) for j, ps in current.items() if len(ps) > 1 for p in ps),
        reverse=True,
    )
    for t, m, j in extra:
        if len(current[j]) < 2:
            continue
        trial = {**current, j: [p for p in current[j] if (p.start, p.machine) != (t, m)]}
        if is_valid(instance, Schedule(trial)):
            current = trial
    residual = sum(len(ps) - 1 for ps in current.values())
    out = Schedule(current, residual == 0)
    return (out, residual) if report else out


# ------------------------------------------------------------- components


@dataclass(frozen=True)
class ComponentInfo:
    """A weakly connected component: job set, size ``w`` and longest chain ``L``."""

    id: int
    jobs: frozenset[int]
    w: int
    L: int


def _components(nodes: Iterable[int], edges: Iterable[tuple[int, int]]) -> list[list[int]]:
    parent = {v: v for v in nodes}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in edges:
        ru, rv = find(u), find(v)
        if ru != rv:
            parent[max(ru, rv)] = min(ru, rv)
    groups: dict[int, list[int]] = {}
    for v in parent:
        groups.setdefault(find(v), []).append(v)
    return sorted((sorted(g) for g in groups.values()), key=lambda g: g[0])


def components(instance: Instance | PrecedenceDag) -> list[ComponentInfo]:
    dag = instance.dag if isinstance(instance, Instance) else instance
    out = []
    for d, js in enumerate(_components(dag.nodes, dag.edges)):
        out.append(ComponentInfo(d, frozenset(js), len(js), critical_path(dag, js)))
    return out


def phase_nodup_udps(inp: UdpsInput) -> Schedule:
    """Duplication-free fragment: each component of the fragment's sub-DAG
    goes whole onto the currently least loaded machine, then every machine
    is list-scheduled from time 0."""
    sub = inp.sub
    comps = sorted(_components(sub.nodes, sub.edges), key=lambda g: (-len(g), g[0]))
    load = {i: 0 for i in inp.machines}
    bins: dict[int, list[int]] = {i: [] for i in inp.machines}
    for g in comps:
        i = min(inp.machines, key=lambda j: (load[j], j))
        bins[i].extend(g)
        load[i] += len(g)
    out = Schedule({}, True)
    for i, js in bins.items():
        if js:
            out = out.merged(list_schedule(sub, js, Machine(i, inp.size, inp.speed)).with_flag(True))
    return out


# --------------------------------------------------------- LST rounding


class RoundingError(ValueError):
    pass


def lenstra_round(
    fractional_assignment: Mapping[tuple[Any, Any], float],
    processing_times: Mapping[tuple[Any, Any], Any],
    deadlines: Mapping[Any, Any] | None = None,
    *,
    tol: float = 1e-9,
) -> dict[Any, Any]:
    """Round a vertex assignment ``(item, machine) -> value`` to one machine per item.

    Integral entries are kept.  At a vertex every component of the
    fractional support has at most as many edges as nodes, so the
    fractional items can be matched to distinct machines; each machine
    then gains at most one item beyond its fractional load.
    ``deadlines`` is accepted for the caller's bookkeeping only.

    Raises:
        RoundingError: if the support is not that sparse or no matching
            covers the fractional items.
    """
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import maximum_bipartite_matching

    items = sorted({j for j, _ in fractional_assignment}, key=repr)
    result: dict[Any, Any] = {}
    frac: dict[Any, set] = {}
    for (j, i), val in sorted(fractional_assignment.items(), key=repr):
        if val >= 1 - tol:
            result[j] = i
        elif val > tol:
            frac.setdefault(j, set()).add(i)
    for j in list(frac):
        if j in result:
            del frac[j]
    missing = [j for j in items if j not in result and j not in frac]
    if missing:
        raise RoundingError(f"items without any assignment: {missing}")
    if not frac:
        return result
    fitems = sorted(frac, key=repr)
    fmach = sorted({i for ms in frac.values() for i in ms}, key=repr)
    col = {i: c for c, i in enumerate(fmach)}
    # each support component may hold at most one cycle
    parent = list(range(len(fitems) + len(fmach)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for r, j in enumerate(fitems):
        for i in frac[j]:
            a, b = find(r), find(len(fitems) + col[i])
            if a != b:
                parent[a] = b
    nodes: dict[int, int] = {}
    edges: dict[int, int] = {}
    for x in range(len(parent)):
        nodes[find(x)] = nodes.get(find(x), 0) + 1
    for r, j in enumerate(fitems):
        edges[find(r)] = edges.get(find(r), 0) + len(frac[j])
    if any(edges.get(c, 0) > k for c, k in nodes.items()):
        raise RoundingError("fractional support is too dense; input is not a vertex")
    rows, cols = [], []
    for r, j in enumerate(fitems):
        for i in sorted(frac[j], key=repr):
            rows.append(r)
            cols.append(col[i])
    graph = csr_matrix(([1] * len(rows), (rows, cols)), shape=(len(fitems), len(fmach)))
    match = maximum_bipartite_matching(graph, perm_type="column")
    for r, j in enumerate(fitems):
        if match[r] < 0:
            raise RoundingError(f"no machine left for fractional item {j!r}")
        result[j] = fmach[match[r]]
    return result


def assignment_loads(assign: Mapping[Any, Any], processing_times: Mapping[tuple[Any, Any], Any]) -> dict[Any, Any]:
    loads: dict[Any, Any] = {}
    for j, i in assign.items():
        loads[i] = loads.get(i, 0) + processing_times[(j, i)]
    return loads


# ---------------------------------------------------- symmetric threshold


@dataclass(frozen=True)
class ThresholdOutcome:
    """Either a schedule or an assertion that no schedule of length ``T`` exists.

    ``certificate`` names the failed test for assertions; ``details`` holds
    the numbers behind it.
    """

    T: Fraction
    schedule: Schedule | None = None
    certificate: str | None = None
    details: dict[str, Any] = field(default_factory=dict)

    @property
    def asserted(self) -> bool:
        return self.schedule is None

    def to_dict(self) -> dict[str, Any]:
        from .formats import fmt_time, schedule_to_dict

        return {
            "T": fmt_time(self.T),
            "asserted": self.asserted,
            "certificate": self.certificate,
            "details": {k: (fmt_time(v) if isinstance(v, Fraction) else v) for k, v in self.details.items()},
            "schedule": None if self.schedule is None else schedule_to_dict(self.schedule),
        }


def is_symmetric(instance: Instance) -> bool:
    return instance.model == ADDITIVE and all(
        x.in_delay == x.out_delay for x in (*instance.jobs, *instance.machines)
    )


def _fits(size: int, chain: int, mc: Machine, T: Fraction) -> bool:
    slots = int(T * mc.speed)  # copies per processor inside [0, T]
    return chain <= slots and size <= mc.size * slots


def _threshold_lp(instance: Instance, T: Fraction, S: list[int], Sp: list[int], comps: list[ComponentInfo]):
    """Relaxation over the low-delay machines plus whole-component variables
    for the high-delay ones.  Only in-delays enter the delay constraints, so
    the value never exceeds the no-duplication optimum."""
    allowed = {
        (c.id, i)
        for c in comps
        for i in Sp
        if c.L <= instance.machine[i].speed * T and c.w <= instance.machine[i].size * instance.machine[i].speed * T
    }
    if S:
        relaxed = Instance(
            tuple(Job(j.id, j.in_delay, 0) for j in instance.jobs),
            tuple(Machine(m.id, m.size, m.speed, m.in_delay, 0) for m in instance.machines if m.id in set(S)),
            instance.edges,
            ADDITIVE,
        )
        grouped = round_and_group(relaxed, cap=False, exact=True)
        p = build_lp(grouped, 1, GENERAL_RELATED)
        K = grouped.K
    else:
        grouped, p, K = None, LpProblem("threshold"), 0
    for d, i in sorted(allowed):
        p.add_var(f"X_{d}_{i}")
    p.add_var("D")
    p.add_var("Z")
    comp_of = {v: c.id for c in comps for v in c.jobs}
    for v in sorted(comp_of):
        row = {name_x(v, k): 1 for k in range(K)}
        for i in Sp:
            if (comp_of[v], i) in allowed:
                row[f"X_{comp_of[v]}_{i}"] = 1
        if S:
            p.replace_constraint(f"exec_{v}", row, "=", 1)
        else:
            p.add_constraint(row, "=", 1, f"exec_{v}")
    for i in Sp:
        mc = instance.machine[i]
        row = {"D": 1}
        for c in comps:
            if (c.id, i) in allowed:
                row[f"X_{c.id}_{i}"] = -Fraction(c.w, mc.size * mc.speed)
        p.add_constraint(row, ">=", 0, f"Xload_{i}")
    p.add_constraint({"Z": 1, "D": -1}, ">=", 0, "Z_D")
    if S:
        p.add_constraint({"Z": 1, name_cstar(): -1}, ">=", 0, "Z_C")
    p.set_objective({"Z": 1})
    return p, grouped, allowed


def symmetric_threshold(instance: Instance, T, *, lp_method: str = "auto") -> ThresholdOutcome:
    """Return a duplication-free schedule or assert that none of length ``T`` exists.

    Assertions come only from sound tests: the relaxation value exceeding
    ``T``, the relaxation being infeasible, or a set of jobs that must share
    one machine fitting on no machine within ``T``.

    Raises:
        ModelError: if some machine or job has different in- and out-delays.
    """
    from .scheduler import PipelineOptions, run_pipeline

    if not is_symmetric(instance):
        raise ModelError("threshold test needs symmetric in/out delays")
    T = Fraction(T)
    S = [m.id for m in instance.machines if m.in_delay <= T]
    Sp = [m.id for m in instance.machines if m.in_delay > T]
    comps = components(instance)
    det: dict[str, Any] = {"S": S, "S_prime": Sp, "components": len(comps)}

    def asserted(cert: str) -> ThresholdOutcome:
        log.info("T=%s: asserting OPT > T (%s)", T, cert)
        return ThresholdOutcome(T, None, cert, det)

    p, grouped, allowed = _threshold_lp(instance, T, S, Sp, comps)
    sol = solve(p, method=lp_method)
    if not sol.ok:
        return asserted(f"relaxation {sol.status.lower()}")
    Z = sol.objective
    det["lp_value"] = Z
    if Z > float(T) + EPS:
        return asserted("relaxation value exceeds T")

    # components mostly placed on high-delay machines go there whole
    heavy = []
    for c in comps:
        share = sum(sol[f"X_{c.id}_{i}"] for i in Sp if (c.id, i) in allowed)
        if share >= 0.5 - EPS:
            heavy.append(c)
    parts: list[Schedule] = []
    if heavy:
        vp = LpProblem("component_assignment")
        deadline = 2 * max(Fraction(Z).limit_denominator(10**6), Fraction(0))
        pt = {}
        for c in heavy:
            for i in Sp:
                if (c.id, i) in allowed:
                    mc = instance.machine[i]
                    vp.add_var(f"a_{c.id}_{i}")
                    pt[(c.id, i)] = Fraction(c.w, mc.size * mc.speed)
        for c in heavy:
            vp.add_constraint({f"a_{c.id}_{i}": 1 for i in Sp if (c.id, i) in allowed}, "=", 1, f"one_{c.id}")
        for i in Sp:
            row = {f"a_{c.id}_{i}": pt[(c.id, i)] for c in heavy if (c.id, i) in pt}
            if row:
                vp.add_constraint(row, "<=", deadline, f"deadline_{i}")
        vsol = find_vertex_solution(vp)
        if not vsol.ok:
            raise AssertionError("component assignment infeasible although the relaxation was feasible")
        frac = {key: vsol[f"a_{key[0]}_{key[1]}"] for key in pt}
        assign = lenstra_round(frac, pt)
        det["deadline"] = deadline
        by_machine: dict[int, list[int]] = {}
        cmap = {c.id: c for c in heavy}
        for d, i in assign.items():
            by_machine.setdefault(i, []).extend(cmap[d].jobs)
        for i, js in sorted(by_machine.items()):
            parts.append(list_schedule(instance.dag, js, instance.machine[i]))
    on_sprime = set().union(*(c.jobs for c in heavy)) if heavy else set()
    rest = set(instance.job) - on_sprime
    det["on_high_delay"] = len(on_sprime)

    # jobs that can talk to nobody within T must share a machine with
    # everything they are comparable to
    anc, desc = instance.dag.ancestors, instance.dag.descendants
    long_jobs = sorted(v for v in rest if instance.job[v].in_delay > T)
    sets = _merge_sets([{v} | anc[v] | desc[v] for v in long_jobs])
    order = sorted(instance.machines, key=lambda m: (-m.size * m.speed, m.id))
    S_order = [m for m in order if m.id in set(S)]
    fit_index = []
    for W in sets:
        ch = critical_path(instance.dag, W)
        if not any(_fits(len(W), ch, m, T) for m in order):
            det["set_size"], det["set_chain"] = len(W), ch
            return asserted("a job set that must share one machine fits on no machine")
        # number of leading low-delay machines it fits on (capacities descend)
        fit_index.append(sum(1 for m in S_order if _fits(len(W), ch, m, T)))
    placed: dict[int, set[int]] = {m.id: set() for m in S_order}
    todo = sorted(range(len(sets)), key=lambda s: (fit_index[s], min(sets[s])))
    for m in S_order:
        cap = T * m.size * m.speed
        for s in list(todo):
            if len(placed[m.id]) > cap:
                break
            ch = critical_path(instance.dag, sets[s])
            if _fits(len(sets[s]), ch, m, T):
                placed[m.id] |= sets[s]
                todo.remove(s)
    det["unplaced_sets"] = len(todo)
    packed = set().union(*placed.values()) if placed else set()
    residual = rest - packed

    pad = 0
    if S:
        ms = [instance.machine[i] for i in S]
        js = [instance.job[v] for v in rest] or [Job(-1)]
        pad = max(m.out_delay for m in ms) + max(m.in_delay for m in ms)
        pad += max(j.out_delay for j in js) + max(j.in_delay for j in js)
    t = Fraction(0)
    first_stage, last_stage = {}, {}
    for i, U in placed.items():
        low = {u for u in U if any(u == w or u in anc[w] for w in U if w in set(long_jobs))}
        first_stage[i], last_stage[i] = low, U - low
        if low:
            part = list_schedule(instance.dag, low, instance.machine[i])
            parts.append(part)
            t = max(t, makespan(part, instance))
    if residual:
        sub = instance.restrict(residual, S)
        mid, rep = run_pipeline(sub, PipelineOptions(allow_dup=False, lp_method=lp_method))
        det["residual_path"] = rep.path
        mid = mid.shifted(t + pad)
        parts.append(mid)
        t = makespan(mid, instance)
    for i, U in last_stage.items():
        if U:
            parts.append(list_schedule(instance.dag, U, instance.machine[i], t + pad))
    out = Schedule({}, True)
    for part in parts:
        out = out.merged(part)
    out, left = prune_duplicates(instance, out, report=True)
    det["residual_duplicates"] = left
    v = validate_schedule(instance, out)
    if not v.ok:
        raise AssertionError(f"composed schedule invalid: {v.violations[0]}")
    det["makespan"] = v.makespan
    return ThresholdOutcome(T, out, None, det)


def _merge_sets(sets: list[set[int]]) -> list[frozenset[int]]:
    """Union overlapping sets until all are disjoint."""
    parent = list(range(len(sets)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    owner: dict[int, int] = {}
    for s, W in enumerate(sets):
        for v in W:
            if v in owner:
                a, b = find(owner[v]), find(s)
                if a != b:
                    parent[max(a, b)] = min(a, b)
            else:
                owner[v] = s
    merged: dict[int, set[int]] = {}
    for s, W in enumerate(sets):
        merged.setdefault(find(s), set()).update(W)
    return sorted((frozenset(W) for W in merged.values()), key=min)


__all__ = [
    "ComponentInfo",
    "RoundingError",
    "ThresholdOutcome",
    "assignment_loads",
    "components",
    "is_symmetric",
    "lenstra_round",
    "phase_nodup_udps",
    "prune_duplicates",
    "symmetric_threshold",
]
