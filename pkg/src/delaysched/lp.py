"""LP relaxations over grouped instances, rounding and exact re-checking."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping

from .grouping import GroupedInstance
from .lp_solver import EPS, LpProblem, LpSolution

MACHINE_DELAYS = "MachineDelays"
JOB_MACHINE_DELAYS = "JobMachineDelays"
GENERAL_RELATED = "GeneralRelated"
VARIANTS = (MACHINE_DELAYS, JOB_MACHINE_DELAYS, GENERAL_RELATED)

SNAP = 10**6


class LpBuildError(ValueError):
    pass


def name_cstar() -> str:
    return "Cstar"


def name_c(v: int) -> str:
    return f"C_{v}"


def name_x(v: int, k: int) -> str:
    return f"x_{v}_{k}"


def name_y(v: int, k: int) -> str:
    return f"y_{v}_{k}"


def name_z(u: int, v: int, k: int) -> str:
    return f"z_{u}_{v}_{k}"


def name_w(v: int, k: int, u: int) -> str:
    return f"W_{v}_{k}_{u}"


def check_variant(grouped: GroupedInstance, variant: str) -> None:
    if variant not in VARIANTS:
        raise LpBuildError(f"unknown LP variant {variant!r}")
    if variant in (MACHINE_DELAYS, JOB_MACHINE_DELAYS):
        if any(g.size != 1 or g.speed != 1 for g in grouped.machine_groups):
            raise LpBuildError(f"{variant} needs unit machine sizes and speeds")
    if variant == MACHINE_DELAYS and any(j.in_delay for j in grouped.instance.jobs):
        raise LpBuildError("MachineDelays needs zero job delays")


def pair_delay(grouped: GroupedInstance, variant: str, k: int, v: int) -> int:
    """Group delay used for job ``v`` on machine group ``k``."""
    d = grouped.machine_groups[k].delay
    if variant == MACHINE_DELAYS:
        return d
    return d + grouped.job_delay(v)


def build_lp(grouped: GroupedInstance, alpha, variant: str = JOB_MACHINE_DELAYS) -> LpProblem:
    """Emit the relaxation of the chosen variant; the objective is ``Cstar``.

    Pairs ``u < v`` range over the transitive closure of the precedence DAG.
    Coefficients are exact so integral points can be re-checked exactly.
    """
    check_variant(grouped, variant)
    alpha = Fraction(alpha)
    inst = grouped.instance
    jobs = [j.id for j in inst.jobs]
    groups = grouped.machine_groups
    K = len(groups)
    pairs = inst.dag.closure_pairs
    anc = inst.dag.ancestors
    general = variant == GENERAL_RELATED
    p = LpProblem(f"{variant}_alpha_{alpha}")
    p.add_var(name_cstar())
    for v in jobs:
        p.add_var(name_c(v))
    for v in jobs:
        for k in range(K):
            p.add_var(name_x(v, k))
            p.add_var(name_y(v, k))
    for u, v in pairs:
        for k in range(K):
            p.add_var(name_z(u, v, k))
    if general:
        for u, v in pairs:
            for k in range(K):
                p.add_var(name_w(v, k, u))
    p.set_objective({name_cstar(): 1})

    for v in jobs:
        p.add_constraint({name_cstar(): 1, name_c(v): -1}, ">=", 0, f"makespan_{v}")
    for k, g in enumerate(groups):
        cap = g.count * (g.speed * g.size if general else 1)
        row = {name_cstar(): cap}
        for v in jobs:
            row[name_y(v, k)] = -1
        p.add_constraint(row, ">=", 0, f"load_{k}")
    for u, v in pairs:
        for k in range(K):
            d = pair_delay(grouped, variant, k, v)
            p.add_constraint(
                {name_c(v): 1, name_c(u): -1, name_x(v, k): -d, name_z(u, v, k): d},
                ">=",
                0,
                f"delay_{u}_{v}_{k}",
            )
    for u, v in pairs:
        row = {name_c(v): 1, name_c(u): -1}
        for k, g in enumerate(groups):
            row[name_x(v, k)] = -Fraction(1, g.speed)
        p.add_constraint(row, ">=", 0, f"prec_{u}_{v}")
    for v in jobs:
        preds = sorted(anc[v])
        for k, g in enumerate(groups):
            d = pair_delay(grouped, variant, k, v)
            rhs = alpha * d * (g.speed * g.size if general else 1)
            row = {name_z(u, v, k): 1 for u in preds}
            p.add_constraint(row, "<=", rhs, f"dup_{v}_{k}")
    if general:
        for v in jobs:
            preds = sorted(anc[v])
            for k, g in enumerate(groups):
                d = pair_delay(grouped, variant, k, v)
                for u in preds:
                    for u2 in sorted(anc[u]):
                        p.add_constraint(
                            {name_w(v, k, u): 1, name_w(v, k, u2): -1, name_z(u, v, k): -Fraction(1, g.speed)},
                            ">=",
                            0,
                            f"chain_{v}_{k}_{u}_{u2}",
                        )
                    p.add_constraint({name_w(v, k, u): 1}, "<=", alpha * d, f"window_{v}_{k}_{u}")
    for v in jobs:
        p.add_constraint({name_x(v, k): 1 for k in range(K)}, "=", 1, f"exec_{v}")
    for u, v in pairs:
        for k in range(K):
            p.add_constraint({name_x(v, k): 1, name_z(u, v, k): -1}, ">=", 0, f"xz_{u}_{v}_{k}")
            p.add_constraint({name_y(u, k): 1, name_z(u, v, k): -1}, ">=", 0, f"yz_{u}_{v}_{k}")
    for v in jobs:
        for k in range(K):
            p.add_constraint({name_y(v, k): 1, name_x(v, k): -1}, ">=", 0, f"yx_{v}_{k}")
    return p


@dataclass(frozen=True)
class RoundedSolution:
    """Integral LP point: one machine group per job plus duplication flags.

    ``assign[v]`` is the group ``k`` with ``x_{v,k} = 1``; ``z`` holds the
    triples ``(u, v, k)`` with ``z = 1``; ``y`` is derived.  ``W`` carries the
    window completion variables of the general variant.
    """

    variant: str
    alpha: Fraction
    K: int
    L: int
    cstar: Fraction
    C: Mapping[int, Fraction]
    assign: Mapping[int, int]
    z: frozenset[tuple[int, int, int]]
    W: Mapping[tuple[int, int, int], Fraction] = field(default_factory=dict)
    scaled_cstar: Fraction | None = None
    lp_value: float | None = None
    lifted: bool = False

    @property
    def y(self) -> frozenset[tuple[int, int]]:
        out = {(v, k) for v, k in self.assign.items()}
        out |= {(u, k) for u, _, k in self.z}
        return frozenset(out)

    def x(self, v: int, k: int) -> int:
        return int(self.assign[v] == k)

    def values(self, grouped: GroupedInstance) -> dict[str, Fraction]:
        vals: dict[str, Fraction] = {name_cstar(): self.cstar}
        for v, c in self.C.items():
            vals[name_c(v)] = c
        for v, k in self.assign.items():
            vals[name_x(v, k)] = Fraction(1)
        for v, k in self.y:
            vals[name_y(v, k)] = Fraction(1)
        for u, v, k in self.z:
            vals[name_z(u, v, k)] = Fraction(1)
        for (v, k, u), w in self.W.items():
            vals[name_w(v, k, u)] = w
        return vals


def snap(x: float) -> Fraction:
    return Fraction(x).limit_denominator(SNAP)


def _require_optimal(sol: LpSolution) -> None:
    if not sol.ok:
        raise LpBuildError(f"rounding needs an optimal LP solution, got {sol.status}")


def round_solution(fractional: LpSolution, grouped: GroupedInstance, alpha=None, variant: str = JOB_MACHINE_DELAYS) -> RoundedSolution:
    """Round an optimal solution of the alpha=1 relaxation.

    ``x`` goes to the argmax group (lowest index on ties), ``z`` is kept
    when ``x`` is hit and the fractional value reaches ``1/(2K)``, and all
    completion values are scaled by ``2K``.  Scaled values are lifted to the
    exact rounded precedence and delay bounds where float error left them a
    hair short; ``lifted`` records whether that happened.
    """
    _require_optimal(fractional)
    check_variant(grouped, variant)
    inst = grouped.instance
    K = grouped.K
    scale = 2 * K
    alpha = Fraction(scale if alpha is None else alpha)
    groups = grouped.machine_groups
    anc = inst.dag.ancestors
    assign: dict[int, int] = {}
    for v in inst.dag.order:
        xs = [fractional[name_x(v, k)] for k in range(K)]
        top = max(xs)
        assign[v] = next(k for k, val in enumerate(xs) if val >= top - 1e-9)
    thr = 1.0 / scale - EPS
    z = set()
    for u, v in inst.dag.closure_pairs:
        k = assign[v]
        if fractional[name_z(u, v, k)] >= thr:
            z.add((u, v, k))
    lifted = False
    C: dict[int, Fraction] = {}
    for v in inst.dag.order:
        k = assign[v]
        base = scale * snap(fractional[name_c(v)])
        need = Fraction(0)
        for u in anc[v]:
            need = max(need, C[u] + Fraction(1, groups[k].speed))
            if (u, v, k) not in z:
                need = max(need, C[u] + pair_delay(grouped, variant, k, v))
        if need > base:
            lifted = True
            base = need
        C[v] = base
    W: dict[tuple[int, int, int], Fraction] = {}
    if variant == GENERAL_RELATED:
        for v in inst.dag.order:
            k = assign[v]
            s = groups[k].speed
            for kk in range(K):
                for u in (w for w in inst.dag.order if w in anc[v]):
                    if kk != k:
                        W[(v, kk, u)] = Fraction(0)
                        continue
                    inc = Fraction(1, s) if (u, v, k) in z else Fraction(0)
                    prev = [W[(v, k, u2)] + inc for u2 in anc[u]]
                    W[(v, k, u)] = max(prev, default=Fraction(0))
    scaled = scale * snap(fractional[name_cstar()])
    y = {(v, k) for v, k in assign.items()} | {(u, k) for u, _, k in z}
    load_need = Fraction(0)
    for k, g in enumerate(groups):
        cap = g.count * (g.speed * g.size if variant == GENERAL_RELATED else 1)
        load_need = max(load_need, Fraction(sum(1 for _, kk in y if kk == k), cap))
    cstar = max([scaled, load_need, *C.values()])
    if cstar > scaled:
        lifted = True
    return RoundedSolution(
        variant,
        alpha,
        K,
        grouped.L,
        cstar,
        C,
        assign,
        frozenset(z),
        W,
        scaled,
        fractional.objective,
        lifted,
    )


@dataclass(frozen=True)
class FeasibilityReport:
    ok: bool
    violations: tuple[tuple[str, Fraction], ...]
    alpha: Fraction


def check_rounded_feasible(rounded: RoundedSolution, grouped: GroupedInstance, alpha=None) -> FeasibilityReport:
    """Re-evaluate every constraint of the relaxation at ``alpha`` exactly."""
    a = Fraction(rounded.alpha if alpha is None else alpha)
    if rounded.variant == GENERAL_RELATED and not rounded.W:
        vals_w = _minimal_windows(rounded, grouped)
        rounded = RoundedSolution(**{**rounded.__dict__, "W": vals_w})
    lp = build_lp(grouped, a, rounded.variant)
    bad = lp.evaluate(rounded.values(grouped))
    return FeasibilityReport(not bad, tuple(bad), a)


def _minimal_windows(rounded: RoundedSolution, grouped: GroupedInstance):
    inst = grouped.instance
    anc = inst.dag.ancestors
    W = {}
    for v in inst.dag.order:
        k = rounded.assign[v]
        s = grouped.machine_groups[k].speed
        for u in (w for w in inst.dag.order if w in anc[v]):
            inc = Fraction(1, s) if (u, v, k) in rounded.z else Fraction(0)
            W[(v, k, u)] = max((W[(v, k, u2)] + inc for u2 in anc[u]), default=Fraction(0))
    return W


def combinatorial_rounded_solution(grouped: GroupedInstance) -> RoundedSolution:
    """Feasible alpha=1 point for one uniform unit-machine group.

    Predecessors of ``v`` are sorted by decreasing ``C`` and
    ``C_v = max_i (C_{u_i} + i)`` over the first ``rho_v`` of them, where
    ``rho_v`` is the machine delay plus the job's delay; sources get 0.
    """
    if grouped.K != 1:
        raise LpBuildError(f"combinatorial solution needs one machine group, got {grouped.K}")
    g = grouped.machine_groups[0]
    if g.size != 1 or g.speed != 1:
        raise LpBuildError("combinatorial solution needs unit machines")
    inst = grouped.instance
    anc = inst.dag.ancestors
    C: dict[int, Fraction] = {}
    z = set()
    for v in inst.dag.order:
        preds = sorted(anc[v], key=lambda u: (-C[u], u))
        if not preds:
            C[v] = Fraction(0)
            continue
        rho = g.delay + grouped.job_delay(v)
        best = C[preds[0]] + 1
        for i, u in enumerate(preds[: max(rho, 0)], start=1):
            best = max(best, C[u] + i)
        C[v] = best
        for u in preds:
            if C[v] - C[u] < rho:
                z.add((u, v, 0))
    cstar = max([Fraction(inst.n, g.count), *C.values()])
    return RoundedSolution(
        JOB_MACHINE_DELAYS,
        Fraction(1),
        1,
        grouped.L,
        cstar,
        C,
        {v: 0 for v in C},
        frozenset(z),
        {},
        cstar,
        None,
        False,
    )
