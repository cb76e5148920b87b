"""Phase-based construction of a schedule from a rounded LP point, and the
end-to-end pipeline driver."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from .grouping import GroupedInstance, ceil_pow2, delay_cap, round_and_group
from .lp import (
    GENERAL_RELATED,
    JOB_MACHINE_DELAYS,
    MACHINE_DELAYS,
    RoundedSolution,
    build_lp,
    check_rounded_feasible,
    combinatorial_rounded_solution,
    round_solution,
)
from .lp_solver import solve
from .model import ADDITIVE, Instance, ModelError, Schedule, makespan, validate_schedule
from .reduction import expand_in_to_inout, merge_out_into_in, shift_schedule_machine_delays
from .udps import UdpsError, UdpsInput, check_input, udps_solve

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")


class PhaseError(PipelineError):
    pass


@dataclass(frozen=True)
class Phase:
    """Jobs of job group ``l`` first placed on machine group ``k`` in window ``d``.

    ``V`` holds the jobs whose completion value falls in the window, ``U``
    their predecessors from the same window (run again here as copies).
    ``pad`` is the communication gap placed before the phase.
    """

    k: int
    l: int
    d: int
    V: frozenset[int]
    U: frozenset[int]
    window: tuple[Fraction, Fraction]
    delta: int
    pad: int

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.k, self.l, self.d)

    @property
    def jobs(self) -> frozenset[int]:
        return self.V | self.U


def _job_levels(grouped: GroupedInstance, rounded: RoundedSolution) -> list[tuple[int, int]]:
    """``(index, delay)`` of the job groups; one zero group for machine delays."""
    if rounded.variant == MACHINE_DELAYS:
        return [(0, 0)]
    return [(g.index, g.delay) for g in grouped.job_groups]


def _job_level_of(grouped: GroupedInstance, rounded: RoundedSolution, v: int) -> int:
    if rounded.variant == MACHINE_DELAYS:
        return 0
    return grouped.job_group_of[v]


def extract_phases(rounded: RoundedSolution, grouped: GroupedInstance) -> list[Phase]:
    """Scan window starts in increasing order, machine groups ascending and
    job groups descending, emitting every nonempty phase.

    Pairs whose combined delay is zero use unit windows.
    """
    inst = grouped.instance
    anc = inst.dag.ancestors
    levels = _job_levels(grouped, rounded)
    C = rounded.C
    starts: set[int] = set()
    for v in C:
        k = rounded.assign[v]
        l = _job_level_of(grouped, rounded, v)
        w = max(grouped.machine_groups[k].delay + dict(levels)[l], 1)
        starts.add(int(C[v] // w) * w)
    members: dict[tuple[int, int], list[int]] = {}
    for v in inst.dag.order:
        members.setdefault((rounded.assign[v], _job_level_of(grouped, rounded, v)), []).append(v)
    phases: list[Phase] = []
    for T in sorted(starts):
        for k, g in enumerate(grouped.machine_groups):
            for l, dl in sorted(levels, reverse=True):
                delta = g.delay + dl
                w = max(delta, 1)
                if T % w:
                    continue
                hi = T + w
                V = frozenset(v for v in members.get((k, l), ()) if T <= C[v] < hi)
                if not V:
                    continue
                U = frozenset(u for v in V for u in anc[v] if T <= C[u] < hi) - V
                top = max(grouped.job_delay(u) for u in V | U) if rounded.variant != MACHINE_DELAYS else 0
                pad = g.delay + top
                phases.append(Phase(k, l, T // w, V, U, (Fraction(T), Fraction(hi)), delta, pad))
    return phases


def phase_witnesses(phase: Phase, rounded: RoundedSolution, grouped: GroupedInstance) -> dict[int, int]:
    """A job of ``V`` with ``z = 1`` for every duplicated predecessor."""
    anc = grouped.instance.dag.ancestors
    out = {}
    for u in phase.U:
        for v in sorted(phase.V):
            if u in anc[v] and (u, v, phase.k) in rounded.z:
                out[u] = v
                break
    return out


@dataclass(frozen=True)
class PhaseStat:
    key: tuple[int, int, int]
    jobs: int
    duplicated: int
    start: Fraction
    length: Fraction


def _udps_input(phase: Phase, rounded: RoundedSolution, grouped: GroupedInstance) -> UdpsInput:
    g = grouped.machine_groups[phase.k]
    return UdpsInput(phase.jobs, grouped.instance.dag, g.members, g.size, g.speed, phase.pad, rounded.alpha)


def build_schedule(
    rounded: RoundedSolution,
    grouped: GroupedInstance,
    *,
    nodup: bool = False,
    report: bool = False,
):
    """Append one fragment per phase behind a communication pad.

    Each fragment is placed at ``theta + pad`` and ``theta`` then advances by
    ``2 pad`` plus the fragment length.  With ``nodup`` each fragment is
    built without internal duplication.  Raises :class:`PhaseError` when a
    phase breaks the predecessor limit of the fragment solver.
    """
    from .nodup import phase_nodup_udps

    phases = extract_phases(rounded, grouped)
    theta = Fraction(0)
    out = Schedule({})
    stats: list[PhaseStat] = []
    for ph in phases:
        inp = _udps_input(ph, rounded, grouped)
        try:
            # chains may run two longer than the window constraint allows
            check_input(inp, chain_slack=2)
        except UdpsError as exc:
            raise PhaseError("schedule", f"phase {ph.key}: {exc}") from exc
        frag = phase_nodup_udps(inp) if nodup else udps_solve(inp, check=False)
        length = max((t + grouped.instance.machine[m].duration for _, m, t in frag.triples()), default=Fraction(0))
        start = theta + ph.pad
        out = out.merged(frag.shifted(start))
        stats.append(PhaseStat(ph.key, len(ph.jobs), len(ph.U), start, length))
        theta += 2 * ph.pad + length
    out = out.with_flag(nodup and out.duplicate_count() == 0)
    return (out, stats) if report else out


def _log2c(x) -> float:
    return max(math.log2(x), 1.0) if x > 1 else 1.0


def schedule_bound(rounded: RoundedSolution, delta_max: int) -> float:
    """``12 a log2(dmax) (K L C* + dmax (K + L))`` with the log clamped at 1."""
    a = float(rounded.alpha)
    K, L = rounded.K, max(rounded.L, 1)
    return 12 * a * _log2c(delta_max) * (K * L * float(rounded.cstar) + delta_max * (K + L))


# ------------------------------------------------------------------ pipeline


@dataclass(frozen=True)
class PipelineOptions:
    """``variant`` is an LP variant name or ``"auto"``; ``alpha`` defaults
    to ``2K``; ``lp_method`` is passed to the LP solver."""

    variant: str = "auto"
    allow_dup: bool = True
    combinatorial_path: bool = False
    alpha: Fraction | None = None
    lp_method: str = "auto"
    expansion: str = "auto"


@dataclass
class PipelineReport:
    variant: str = ""
    path: str = ""
    K: int = 0
    L: int = 0
    alpha: Fraction | None = None
    lp_value: float | None = None
    cstar: Fraction | None = None
    rounded_feasible: bool | None = None
    phases: int = 0
    makespan_in: Fraction | None = None
    makespan: Fraction | None = None
    bound: float | None = None
    excluded_machines: tuple[int, ...] = ()
    residual_duplicates: int = 0
    ok: bool = False
    violations: int = 0
    checkpoints: dict[str, Any] = field(default_factory=dict)

    @property
    def within_bound(self) -> bool:
        return self.bound is None or float(self.makespan_in) <= self.bound + 1e-9

    def to_dict(self) -> dict[str, Any]:
        def conv(x):
            if isinstance(x, Fraction):
                return f"{x.numerator}/{x.denominator}"
            if isinstance(x, tuple):
                return list(x)
            return x

        d = {k: conv(v) for k, v in self.__dict__.items() if k != "checkpoints"}
        d["within_bound"] = self.within_bound
        return d


def _pick_variant(grouped: GroupedInstance, requested: str) -> str:
    if requested != "auto":
        return requested
    if any(g.size != 1 or g.speed != 1 for g in grouped.machine_groups):
        return GENERAL_RELATED
    if all(j.in_delay == 0 for j in grouped.instance.jobs):
        return MACHINE_DELAYS
    return JOB_MACHINE_DELAYS


def _back_to_original(instance: Instance, in_sched: Schedule, method: str) -> Schedule:
    if all(j.out_delay == 0 for j in instance.jobs) and all(m.out_delay == 0 for m in instance.machines):
        return in_sched
    if all(j.in_delay == 0 and j.out_delay == 0 for j in instance.jobs):
        # lift by the largest out-delay so the back shift stays non-negative
        lift = max(m.out_delay for m in instance.machines)
        return shift_schedule_machine_delays(instance, in_sched.shifted(lift), "back")
    return expand_in_to_inout(instance, in_sched, method=method)


def run_pipeline(instance: Instance, options: PipelineOptions | None = None) -> tuple[Schedule, PipelineReport]:
    """Merge delays, group, solve and round the LP (or use the combinatorial
    point), build phases, optionally remove duplicates, map back to the
    in/out model and validate against ``instance``.

    Machines whose rounded delay would exceed the smallest power of two at
    least ``n`` are left out; when none remain the single-machine baseline
    is returned.
    """
    from .nodup import prune_duplicates
    from .oracle import baseline_single_machine

    opts = options or PipelineOptions()
    rep = PipelineReport()
    if instance.model != ADDITIVE:
        raise PipelineError("input", f"pipeline needs the additive model, got {instance.model}")
    merged = merge_out_into_in(instance)
    limit = delay_cap(instance.n)
    keep = [m.id for m in merged.machines if ceil_pow2(m.in_delay) <= limit]
    rep.excluded_machines = tuple(sorted(set(merged.machine) - set(keep)))
    if not keep:
        s = baseline_single_machine(instance)
        rep.path = "baseline"
        rep.makespan_in = rep.makespan = makespan(s, instance)
        v = validate_schedule(instance, s)
        rep.ok, rep.violations = v.ok, len(v.violations)
        return s, rep
    sub = merged.restrict(merged.job, keep)
    try:
        grouped = round_and_group(sub, cap=False)
    except ModelError as exc:
        raise PipelineError("group", str(exc)) from exc
    rep.K, rep.L = grouped.K, grouped.L
    rep.checkpoints["grouped"] = grouped
    uniform = grouped.K == 1 and grouped.machine_groups[0].size == 1 and grouped.machine_groups[0].speed == 1
    if opts.combinatorial_path:
        if not uniform:
            raise PipelineError("lp", "combinatorial path needs one group of unit machines")
        rounded = combinatorial_rounded_solution(grouped)
        rep.path = "combinatorial"
        rep.variant = rounded.variant
    else:
        variant = _pick_variant(grouped, opts.variant)
        rep.variant = variant
        try:
            lp = build_lp(grouped, 1, variant)
        except ValueError as exc:
            raise PipelineError("lp", str(exc)) from exc
        sol = solve(lp, method=opts.lp_method)
        if not sol.ok:
            raise PipelineError("lp", f"relaxation status {sol.status}")
        rep.lp_value = sol.objective
        rep.checkpoints["lp_solution"] = sol
        rounded = round_solution(sol, grouped, opts.alpha, variant)
        rep.path = "lp"
    rep.alpha, rep.cstar = rounded.alpha, rounded.cstar
    rep.rounded_feasible = check_rounded_feasible(rounded, grouped).ok
    rep.checkpoints["rounded"] = rounded
    try:
        in_sched, stats = build_schedule(rounded, grouped, nodup=not opts.allow_dup, report=True)
    except PhaseError:
        raise
    rep.phases = len(stats)
    if not opts.allow_dup:
        in_sched, residual = prune_duplicates(merged, in_sched, report=True)
        rep.residual_duplicates = residual
    rep.makespan_in = makespan(in_sched, merged) if len(in_sched) else Fraction(0)
    rep.bound = schedule_bound(rounded, instance.delta_max)
    rep.checkpoints["in_schedule"] = in_sched
    try:
        final = _back_to_original(instance, in_sched, opts.expansion)
    except ModelError as exc:
        raise PipelineError("expand", str(exc)) from exc
    v = validate_schedule(instance, final)
    rep.ok, rep.violations = v.ok, len(v.violations)
    rep.makespan = v.makespan
    log.info("pipeline %s: makespan %s, %d phases, ok=%s", rep.path, rep.makespan, rep.phases, rep.ok)
    return final, rep


__all__ = [
    "Phase",
    "PhaseError",
    "PhaseStat",
    "PipelineError",
    "PipelineOptions",
    "PipelineReport",
    "build_schedule",
    "extract_phases",
    "phase_witnesses",
    "run_pipeline",
    "schedule_bound",
]
