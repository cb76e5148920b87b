"""A small two-phase simplex solver over named, non-negative variables.

Constraints keep their coefficients exactly (ints or Fractions) so that
integral points can be re-checked without rounding error; the simplex itself
runs on a dense float tableau with Bland's anti-cycling rule.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Union

import numpy as np

log = logging.getLogger(__name__)

EPS = 1e-7
AUTO_LIMIT = 400_000
Number = Union[int, float, Fraction]

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
UNBOUNDED = "Unbounded"


class LpError(RuntimeError):
    """Malformed problem or numerical stall."""


@dataclass(frozen=True)
class Constraint:
    coeffs: tuple[tuple[int, Number], ...]
    sense: str  # "<=", ">=", "="
    rhs: Number
    name: str


class LpProblem:
    """Builder for a minimisation LP with all variables bounded below by 0."""

    def __init__(self, name: str = "lp"):
        self.name = name
        self.names: list[str] = []
        self.index: dict[str, int] = {}
        self.constraints: list[Constraint] = []
        self.objective: dict[int, Number] = {}

    def add_var(self, name: str) -> int:
        if name in self.index:
            raise LpError(f"variable {name!r} declared twice")
        self.index[name] = len(self.names)
        self.names.append(name)
        return self.index[name]

    def var(self, name: str) -> int:
        return self.index[name]

    def _resolve(self, coeffs: Mapping) -> tuple[tuple[int, Number], ...]:
        acc: dict[int, Number] = {}
        for k, c in coeffs.items():
            if isinstance(k, str) and k not in self.index:
                raise LpError(f"unknown variable {k!r}")
            i = self.index[k] if isinstance(k, str) else int(k)
            if not 0 <= i < len(self.names):
                raise LpError(f"unknown variable {k!r}")
            if isinstance(c, float) and not np.isfinite(c):
                raise LpError("non-finite coefficient")
            acc[i] = acc.get(i, 0) + c
        return tuple(sorted((i, c) for i, c in acc.items() if c != 0))

    def add_constraint(self, coeffs: Mapping, sense: str, rhs: Number = 0, name: str | None = None) -> None:
        if sense not in ("<=", ">=", "="):
            raise LpError(f"bad sense {sense!r}")
        nm = name or f"c{len(self.constraints)}"
        self.constraints.append(Constraint(self._resolve(coeffs), sense, rhs, nm))

    def replace_constraint(self, name: str, coeffs: Mapping, sense: str, rhs: Number = 0) -> None:
        """Swap the constraint called ``name`` in place, keeping its position."""
        for pos, c in enumerate(self.constraints):
            if c.name == name:
                self.constraints[pos] = Constraint(self._resolve(coeffs), sense, rhs, name)
                return
        raise LpError(f"no constraint named {name!r}")

    def set_objective(self, coeffs: Mapping) -> None:
        self.objective = dict(self._resolve(coeffs))

    @property
    def num_vars(self) -> int:
        return len(self.names)

    def evaluate(self, values: Mapping[str, Number], tol: Number = 0) -> list[tuple[str, Number]]:
        """Return ``(name, violation)`` for constraints violated beyond ``tol``.

        With exact inputs (ints or Fractions) the check is exact.
        """
        x = [values.get(n, 0) for n in self.names]
        bad = []
        for c in self.constraints:
            lhs = sum(coef * x[i] for i, coef in c.coeffs)
            if c.sense == "<=":
                viol = lhs - c.rhs
            elif c.sense == ">=":
                viol = c.rhs - lhs
            else:
                viol = abs(lhs - c.rhs)
            if viol > tol:
                bad.append((c.name, viol))
        for n, v in zip(self.names, x):
            if v < -tol if tol else v < 0:
                bad.append((f"nonneg:{n}", -v))
        return bad

    def objective_value(self, values: Mapping[str, Number]) -> Number:
        return sum(c * values.get(self.names[i], 0) for i, c in self.objective.items())


@dataclass(frozen=True)
class LpSolution:
    status: str
    values: Mapping[str, float] = field(default_factory=dict)
    objective: float | None = None
    pivots: int = 0
    basis: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    def __getitem__(self, name: str) -> float:
        return self.values.get(name, 0.0)


class _Tableau:
    def __init__(self, T: np.ndarray, basis: list[int], max_pivots: int, rule: str = "bland"):
        self.T = T
        self.basis = basis
        self.pivots = 0
        self.max_pivots = max_pivots
        self.rule = rule
        self.stall = 0

    def pivot(self, r: int, c: int) -> None:
        T = self.T
        T[r] /= T[r, c]
        col = T[:, c].copy()
        col[r] = 0.0
        nz = np.nonzero(np.abs(col) > 1e-14)[0]
        if nz.size:
            T[nz] -= np.outer(col[nz], T[r])
        self.basis[r] = c
        self.pivots += 1
        if self.pivots > self.max_pivots:
            raise LpError(f"simplex stalled after {self.pivots} pivots")

    def run(self, ncols: int) -> str:
        """Minimise the objective row over the first ``ncols`` columns."""
        T = self.T
        m = T.shape[0] - 1
        while True:
            rc = T[m, :ncols]
            cand = np.nonzero(rc < -EPS)[0]
            if cand.size == 0:
                return OPTIMAL
            bland = self.rule == "bland" or self.stall >= 30
            c = int(cand[0]) if bland else int(cand[np.argmin(rc[cand])])
            colv = T[:m, c]
            rows = np.nonzero(colv > EPS)[0]
            if rows.size == 0:
                return UNBOUNDED
            ratios = T[rows, -1] / colv[rows]
            best = ratios.min()
            tie = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
            r = int(min(tie, key=lambda i: self.basis[i]))
            # degenerate pivots in a row switch Dantzig pricing to Bland's rule
            self.stall = self.stall + 1 if best <= 1e-12 else 0
            self.pivot(r, c)


def _dense(problem: LpProblem):
    m = len(problem.constraints)
    n = problem.num_vars
    A = np.zeros((m, n))
    b = np.zeros(m)
    senses = []
    for r, c in enumerate(problem.constraints):
        for i, coef in c.coeffs:
            A[r, i] = float(coef)
        b[r] = float(c.rhs)
        s = c.sense
        scale = np.abs(A[r]).max() if np.abs(A[r]).max() > 0 else 1.0
        A[r] /= scale
        b[r] /= scale
        if b[r] < 0:
            A[r] *= -1
            b[r] *= -1
            s = {"<=": ">=", ">=": "<=", "=": "="}[s]
        senses.append(s)
    cost = np.zeros(n)
    for i, coef in problem.objective.items():
        cost[i] = float(coef)
    return A, b, senses, cost


def solve(
    problem: LpProblem,
    *,
    method: str = "simplex",
    rule: str = "bland",
    max_pivots: int | None = None,
) -> LpSolution:
    """Minimise ``problem.objective``.

    ``method="simplex"`` (default) runs the in-house two-phase simplex and
    returns a basic solution.  ``rule`` picks the entering column: ``"bland"``
    (smallest index) or ``"dantzig"`` (most negative reduced cost, falling
    back to Bland's rule after a run of degenerate pivots).
    ``method="highs"`` delegates to SciPy's HiGHS dual simplex.
    ``method="auto"`` uses the in-house solver below a tableau-size limit.
    """
    if method == "auto":
        size = len(problem.constraints) * (problem.num_vars + 2 * len(problem.constraints))
        method = "simplex" if size <= AUTO_LIMIT else "highs"
        rule = "dantzig"
    if method == "highs":
        return _solve_highs(problem)
    if rule not in ("bland", "dantzig"):
        raise ValueError(f"unknown pivot rule {rule!r}")
    if method != "simplex":
        raise ValueError(f"unknown LP method {method!r}")
    A, b, senses, cost = _dense(problem)
    m, n = A.shape
    if m == 0:
        if np.any(cost < -EPS):
            return LpSolution(UNBOUNDED)
        return LpSolution(OPTIMAL, {nm: 0.0 for nm in problem.names}, 0.0)
    n_slack = sum(1 for s in senses if s != "=")
    art_rows = [r for r, s in enumerate(senses) if s != "<="]
    N = n + n_slack + len(art_rows)
    T = np.zeros((m + 1, N + 1))
    T[:m, :n] = A
    T[:m, -1] = b
    basis = [0] * m
    k = n
    for r, s in enumerate(senses):
        if s == "<=":
            T[r, k] = 1.0
            basis[r] = k
            k += 1
        elif s == ">=":
            T[r, k] = -1.0
            k += 1
    for j, r in enumerate(art_rows):
        T[r, n + n_slack + j] = 1.0
        basis[r] = n + n_slack + j
    cap = max_pivots or 50 * (m + N) + 1000
    tab = _Tableau(T, basis, cap, rule)
    first_art = n + n_slack
    if art_rows:
        T[m, first_art:N] = 1.0
        for r in art_rows:
            T[m] -= T[r]
        tab.run(N)
        if -T[m, -1] > EPS * max(1.0, m):
            return LpSolution(INFEASIBLE, pivots=tab.pivots)
        # drive zero-level artificials out of the basis
        drop = []
        for r in range(m):
            if tab.basis[r] >= first_art:
                row = T[r, :first_art]
                cand = np.nonzero(np.abs(row) > EPS)[0]
                if cand.size:
                    tab.pivot(r, int(cand[0]))
                else:
                    drop.append(r)
        if drop:
            keep = [r for r in range(m) if r not in set(drop)] + [m]
            T = T[keep]
            tab.T = T
            tab.basis = [tab.basis[r] for r in keep[:-1]]
            m = T.shape[0] - 1
        T = np.hstack([T[:, :first_art], T[:, -1:]])
        tab.T = T
    # phase 2 objective row
    T[m, :] = 0.0
    T[m, :n] = cost
    for r in range(m):
        bj = tab.basis[r]
        if bj < n and cost[bj] != 0.0:
            T[m] -= cost[bj] * T[r]
    status = tab.run(first_art)
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, pivots=tab.pivots)
    x = np.zeros(first_art)
    for r, bj in enumerate(tab.basis):
        x[bj] = T[r, -1]
    x[np.abs(x) < 1e-12] = 0.0
    x = np.maximum(x, 0.0)
    values = {nm: float(x[i]) for i, nm in enumerate(problem.names)}
    obj = float(cost @ x[:n])
    basis_names = tuple(problem.names[bj] for bj in tab.basis if bj < n)
    log.debug("simplex: %d rows, %d cols, %d pivots", m, first_art, tab.pivots)
    return LpSolution(OPTIMAL, values, obj, tab.pivots, basis_names)


def _solve_highs(problem: LpProblem) -> LpSolution:
    from scipy.optimize import linprog
    from scipy.sparse import coo_matrix

    n = problem.num_vars
    ub_r, ub_c, ub_v, ub_b = [], [], [], []
    eq_r, eq_c, eq_v, eq_b = [], [], [], []
    for c in problem.constraints:
        if c.sense == "=":
            r = len(eq_b)
            for i, coef in c.coeffs:
                eq_r.append(r), eq_c.append(i), eq_v.append(float(coef))
            eq_b.append(float(c.rhs))
        else:
            sign = 1.0 if c.sense == "<=" else -1.0
            r = len(ub_b)
            for i, coef in c.coeffs:
                ub_r.append(r), ub_c.append(i), ub_v.append(sign * float(coef))
            ub_b.append(sign * float(c.rhs))
    cost = np.zeros(n)
    for i, coef in problem.objective.items():
        cost[i] = float(coef)
    A_ub = coo_matrix((ub_v, (ub_r, ub_c)), shape=(len(ub_b), n)).tocsr() if ub_b else None
    A_eq = coo_matrix((eq_v, (eq_r, eq_c)), shape=(len(eq_b), n)).tocsr() if eq_b else None
    res = linprog(
        cost,
        A_ub=A_ub,
        b_ub=ub_b or None,
        A_eq=A_eq,
        b_eq=eq_b or None,
        bounds=(0, None),
        method="highs-ds",
    )
    if res.status == 2:
        return LpSolution(INFEASIBLE)
    if res.status == 3:
        return LpSolution(UNBOUNDED)
    if res.status != 0:
        raise LpError(f"HiGHS failed: {res.message}")
    x = np.maximum(res.x, 0.0)
    return LpSolution(OPTIMAL, {nm: float(x[i]) for i, nm in enumerate(problem.names)}, float(res.fun))


def find_vertex_solution(problem: LpProblem, value_cap: Number | None = None) -> LpSolution:
    """Return a basic feasible solution with objective at most ``value_cap``.

    The simplex always ends on a vertex, so the optimum is returned when it
    meets the cap; otherwise the status is ``Infeasible``.
    """
    sol = solve(problem, method="simplex")
    if sol.ok and value_cap is not None and sol.objective > float(value_cap) + EPS:
        return LpSolution(INFEASIBLE, pivots=sol.pivots)
    return sol


def _fmt(c: Number) -> str:
    if isinstance(c, Fraction) and c.denominator == 1:
        c = c.numerator
    if isinstance(c, int):
        return str(c)
    return format(float(c), ".17g")


def _terms(coeffs: Iterable[tuple[int, Number]], names: list[str]) -> str:
    parts = []
    for i, c in coeffs:
        sign = "-" if c < 0 else "+"
        mag = -c if c < 0 else c
        txt = names[i] if mag == 1 else f"{_fmt(mag)} {names[i]}"
        parts.append(f"{sign} {txt}")
    if not parts:
        return "0"
    s = " ".join(parts)
    return s[2:] if s.startswith("+ ") else "-" + s[1:]


def export_lp_text(problem: LpProblem) -> str:
    """Render the problem in the common LP text format."""
    out = [f"\\ {problem.name}", "Minimize", f" obj: {_terms(sorted(problem.objective.items()), problem.names)}"]
    out.append("Subject To")
    for c in problem.constraints:
        sense = "=" if c.sense == "=" else c.sense
        out.append(f" {c.name}: {_terms(c.coeffs, problem.names)} {sense} {_fmt(c.rhs)}")
    out.append("Bounds")
    for nm in problem.names:
        out.append(f" {nm} >= 0")
    out.append("End")
    return "\n".join(out) + "\n"
