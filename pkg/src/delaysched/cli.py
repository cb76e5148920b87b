"""Command-line interface.

Exit codes: 0 success, 2 invalid input, 3 infeasible or asserted,
4 internal invariant breach.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from . import formats
from .grouping import ceil_pow2, floor_pow2
from .lp import build_lp
from .lp_solver import solve
from .model import ModelError, Schedule, validate_schedule
from .oracle import GenParams, OracleError, baseline_single_machine, brute_force_opt, generate, tick
from .scheduler import PipelineError, PipelineOptions, run_pipeline
from .udps import UdpsError, UdpsInvariantError

log = logging.getLogger("delaysched")

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_INTERNAL = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, code: int, msg: str):
        super().__init__(msg)
        self.code = code


@dataclass(frozen=True)
class RunConfig:
    command: str
    input: Path | None = None
    output: Path | None = None
    variant: str = "auto"
    alpha: Fraction | None = None
    allow_dup: bool = True
    T: Fraction | None = None
    seed: int = 0
    emit_stages: Path | None = None


# ----------------------------------------------------------------- helpers


def _read(path: Path | None) -> str:
    if path is None or str(path) == "-":
        return sys.stdin.read()
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_INPUT, f"cannot read {path}: {exc}") from exc


def _write(path: Path | None, text: str) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _load_instance(path):
    try:
        return formats.load_instance(_read(path))
    except ModelError as exc:
        raise CliError(EXIT_INPUT, f"invalid instance: {exc}") from exc


def _load_schedule(path):
    try:
        return formats.load_schedule(_read(path))
    except ModelError as exc:
        raise CliError(EXIT_INPUT, f"invalid schedule: {exc}") from exc


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from exc


def _range(text: str) -> tuple[int, int]:
    try:
        lo, _, hi = text.partition(",")
        return int(lo), int(hi or lo)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected LO,HI, got {text!r}") from exc


def _report_to_json(report) -> dict:
    doc = report.to_dict()
    for k, v in list(doc.items()):
        if isinstance(v, Fraction):
            doc[k] = formats.fmt_time(v)
    return doc


# ---------------------------------------------------------------- commands


def cmd_generate(args) -> int:
    try:
        params = GenParams(
            seed=args.seed,
            n=args.n,
            m=args.m,
            edge_prob=args.edge_prob,
            job_delay=args.job_delay,
            machine_delay=args.machine_delay,
            size=args.size,
            speed=args.speed,
            model=args.model,
            layers=args.layers,
            out_delays=not args.in_only,
            symmetric=args.symmetric,
        )
    except ModelError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from exc
    _write(args.out, formats.dump_instance(generate(params)))
    return EXIT_OK


def cmd_solve(args) -> int:
    inst = _load_instance(args.instance)
    opts = PipelineOptions(
        variant=args.variant,
        allow_dup=not args.no_dup,
        combinatorial_path=args.combinatorial,
        alpha=args.alpha,
        lp_method=args.lp_method,
    )
    try:
        sched, rep = run_pipeline(inst, opts)
    except PipelineError as exc:
        code = EXIT_INPUT if exc.stage == "input" else EXIT_INFEASIBLE
        raise CliError(code, str(exc)) from exc
    if not rep.ok:
        raise CliError(EXIT_INTERNAL, f"pipeline produced an invalid schedule ({rep.violations} violations)")
    if args.emit_stages:
        _emit_stages(Path(args.emit_stages), rep, sched)
    _write(args.out, formats.dump_schedule(sched))
    if args.report:
        Path(args.report).write_text(formats.dumps(_report_to_json(rep)), encoding="utf-8")
    return EXIT_OK


def _emit_stages(folder: Path, rep, final: Schedule) -> None:
    folder.mkdir(parents=True, exist_ok=True)
    cp = rep.checkpoints
    docs = {"report.json": _report_to_json(rep), "schedule.json": formats.schedule_to_dict(final)}
    if "grouped" in cp:
        docs["grouped.json"] = formats.grouped_to_dict(cp["grouped"])
    if "lp_solution" in cp:
        docs["lp_solution.json"] = formats.lp_solution_to_dict(cp["lp_solution"])
    if "rounded" in cp:
        docs["rounded.json"] = formats.rounded_to_dict(cp["rounded"])
    if "in_schedule" in cp:
        docs["in_schedule.json"] = formats.schedule_to_dict(cp["in_schedule"])
    for name, doc in docs.items():
        (folder / name).write_text(formats.dumps(doc), encoding="utf-8")


def cmd_validate(args) -> int:
    inst = _load_instance(args.instance)
    sched = _load_schedule(args.schedule)
    try:
        rep = validate_schedule(inst, sched)
    except ModelError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from exc
    doc = {
        "ok": rep.ok,
        "makespan": formats.fmt_time(rep.makespan),
        "violations": [
            {
                "kind": v.kind,
                "job": v.job,
                "machine": v.machine,
                "time": None if v.time is None else formats.fmt_time(v.time),
                "detail": v.detail,
            }
            for v in rep.violations
        ],
    }
    _write(args.out, formats.dumps(doc))
    return EXIT_OK if rep.ok else EXIT_INFEASIBLE


def cmd_oracle(args) -> int:
    inst = _load_instance(args.instance)
    try:
        res = brute_force_opt(inst, args.horizon, not args.no_dup)
    except OracleError as exc:
        raise CliError(EXIT_INPUT, str(exc)) from exc
    if not res.feasible:
        raise CliError(EXIT_INFEASIBLE, f"no schedule within horizon {args.horizon}")
    doc = {
        "opt": formats.fmt_time(res.makespan),
        "allow_dup": not args.no_dup,
        "horizon": formats.fmt_time(res.horizon),
        "grid": formats.fmt_time(tick(inst)),
        "explored": res.explored,
        "witness": formats.schedule_to_dict(res.schedule),
    }
    _write(args.out, formats.dumps(doc))
    return EXIT_OK


# ------------------------------------------------------------------- bench


def _pow2_normalised(inst):
    """Make grouping lossless: delays become powers of two, sizes and
    speeds are rounded down, out-delays are dropped."""
    jobs = [replace(j, in_delay=ceil_pow2(j.in_delay), out_delay=0) for j in inst.jobs]
    machines = [
        replace(mc, in_delay=ceil_pow2(mc.in_delay), out_delay=0, size=floor_pow2(mc.size), speed=floor_pow2(mc.speed))
        for mc in inst.machines
    ]
    return replace(inst, jobs=tuple(jobs), machines=tuple(machines))


def bench_row(seed: int, n: int, m: int, oracle_n: int = 6) -> dict:
    from .grouping import round_and_group
    from .scheduler import _pick_variant

    inst = _pow2_normalised(
        generate(GenParams(seed=seed, n=n, m=m, edge_prob=0.35, machine_delay=(0, 4), job_delay=(0, 2), speed=(1, 2), size=(1, 2)))
    )
    sched, rep = run_pipeline(inst)
    grouped = round_and_group(inst, cap=False)
    lp_sol = solve(build_lp(grouped, 1, _pick_variant(grouped, "auto")), method="auto")
    opt = None
    if inst.n <= oracle_n:
        res = brute_force_opt(inst, 16, True)
        opt = res.makespan
    ms = rep.makespan
    return {
        "instance": f"seed{seed}",
        "n": inst.n,
        "m": inst.m,
        "opt": None if opt is None else float(opt),
        "lp": lp_sol.objective,
        "cstar_2K": float(rep.cstar) if rep.cstar is not None else None,
        "makespan": float(ms),
        "bound": rep.bound,
        "ratio_opt": None if not opt else float(ms) / float(opt),
        "ratio_bound": None if not rep.bound else float(rep.makespan_in) / rep.bound,
        "valid": rep.ok,
    }


def _bench_job(a):
    return bench_row(*a)


def cmd_bench(args) -> int:
    tasks = [(args.seed + k, args.n, args.m) for k in range(args.count)]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_bench_job, tasks))
    else:
        rows = [_bench_job(t) for t in tasks]
    fields = list(rows[0]) if rows else []
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    if args.csv:
        Path(args.csv).write_text(buf.getvalue(), encoding="utf-8")
    lines = [f"{'instance':>10} {'n':>3} {'m':>2} {'opt':>7} {'lp':>8} {'C*2K':>8} {'makespan':>9} {'bound':>10} ok"]
    broken = 0
    for r in rows:
        good = r["valid"] and (r["opt"] is None or r["lp"] <= r["opt"] + 1e-6 <= r["makespan"] + 2e-6)
        broken += not good
        lines.append(
            f"{r['instance']:>10} {r['n']:>3} {r['m']:>2} {_f(r['opt']):>7} {_f(r['lp']):>8} {_f(r['cstar_2K']):>8}"
            f" {_f(r['makespan']):>9} {_f(r['bound']):>10} {'yes' if good else 'NO'}"
        )
    sys.stdout.write("\n".join(lines) + "\n")
    return EXIT_OK if broken == 0 else EXIT_INTERNAL


def _f(x) -> str:
    return "-" if x is None else f"{x:.3f}"


# ------------------------------------------------------------------- gantt


def _lanes(inst, sched: Schedule):
    """Assign each copy to a processor lane of its machine, first fit by start."""
    out = []
    firsts = {j: min(ps, key=lambda p: (p.start, p.machine)) for j, ps in sched.placements.items()}
    for mc in inst.machines:
        free = [Fraction(-1)] * mc.size
        copies = sorted((p.start, j, p) for j, ps in sched.placements.items() for p in ps if p.machine == mc.id)
        for start, j, p in copies:
            lane = next((k for k, f in enumerate(free) if f <= start), 0)
            free[lane] = start + mc.duration
            out.append((mc.id, lane, j, start, start + mc.duration, p != firsts[j]))
    return out


def render_svg(inst, sched: Schedule, scale: int = 40, row: int = 22) -> str:
    rows = [(mc.id, k) for mc in inst.machines for k in range(mc.size)]
    y_of = {r: i for i, r in enumerate(rows)}
    end = max((b for *_, b, _ in _lanes(inst, sched)), default=Fraction(0))
    left = 60
    width = left + int(math.ceil(end * scale)) + 20
    height = row * len(rows) + 30
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="monospace" font-size="11">',
        '<defs><pattern id="hatch" width="6" height="6" patternUnits="userSpaceOnUse" patternTransform="rotate(45)">'
        '<line x1="0" y1="0" x2="0" y2="6" stroke="#555" stroke-width="2"/></pattern></defs>',
    ]
    for (mid, k), i in y_of.items():
        parts.append(f'<text x="4" y="{i * row + 15}">m{mid}.{k}</text>')
    for mid, lane, j, a, b, dup in _lanes(inst, sched):
        x, w, y = left + float(a) * scale, float(b - a) * scale, y_of[(mid, lane)] * row + 2
        parts.append(f'<rect x="{x:.2f}" y="{y}" width="{w:.2f}" height="{row - 4}" fill="#9cc3e6" stroke="#234"/>')
        if dup:
            parts.append(f'<rect x="{x:.2f}" y="{y}" width="{w:.2f}" height="{row - 4}" fill="url(#hatch)"/>')
        parts.append(f'<text x="{x + 3:.2f}" y="{y + 13}">{j}</text>')
    axis_y = row * len(rows) + 14
    for t in range(int(math.ceil(end)) + 1):
        parts.append(f'<text x="{left + t * scale}" y="{axis_y + 10}">{t}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_ascii(inst, sched: Schedule, cell: int = 4) -> str:
    """One line per processor lane; one cell per grid tick.  Duplicated
    copies are drawn with ``#`` instead of ``=``."""
    step = tick(inst)
    lanes = _lanes(inst, sched)
    end = max((b for *_, b, _ in lanes), default=Fraction(0))
    width = int(end / step) * cell
    rows = {(mc.id, k): [" "] * width for mc in inst.machines for k in range(mc.size)}
    for mid, lane, j, a, b, dup in lanes:
        lo, hi = int(a / step) * cell, int(b / step) * cell
        label = f"{j}".ljust(hi - lo - 1, "#" if dup else "=")[: hi - lo - 1] + "|"
        rows[(mid, lane)][lo:hi] = list(label)
    return "".join(f"m{mid}.{k:<3}|{''.join(cells)}\n" for (mid, k), cells in rows.items())


def cmd_gantt(args) -> int:
    inst = _load_instance(args.instance)
    sched = _load_schedule(args.schedule)
    if args.svg:
        Path(args.svg).write_text(render_svg(inst, sched), encoding="utf-8")
    if args.ascii or not args.svg:
        sys.stdout.write(render_ascii(inst, sched))
    return EXIT_OK


# --------------------------------------------------------------- threshold


def cmd_threshold(args) -> int:
    from .nodup import is_symmetric, symmetric_threshold

    inst = _load_instance(args.instance)
    if not is_symmetric(inst):
        raise CliError(EXIT_INPUT, "threshold search needs a symmetric additive instance")
    if args.T is not None:
        out = symmetric_threshold(inst, args.T)
        _write(args.out, formats.dumps(out.to_dict()))
        return EXIT_INFEASIBLE if out.asserted else EXIT_OK
    base = validate_schedule(inst, baseline_single_machine(inst)).makespan
    lo, hi = 1, max(1, math.ceil(base))
    best = None
    asserted_up_to = 0
    while lo <= hi:
        mid = (lo + hi) // 2
        out = symmetric_threshold(inst, Fraction(mid))
        log.info("threshold T=%s asserted=%s", mid, out.asserted)
        if out.asserted:
            asserted_up_to = max(asserted_up_to, mid)
            lo = mid + 1
        else:
            best = out
            hi = mid - 1
    if best is None:
        best = symmetric_threshold(inst, Fraction(max(1, math.ceil(base))))
    doc = {"baseline": formats.fmt_time(base), "asserted_opt_above": asserted_up_to, "outcome": best.to_dict()}
    _write(args.out, formats.dumps(doc))
    return EXIT_OK if not best.asserted else EXIT_INFEASIBLE


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="delaysched", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a seeded random instance")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--n", type=int, default=8)
    g.add_argument("--m", type=int, default=2)
    g.add_argument("--edge-prob", type=float, default=0.3)
    g.add_argument("--job-delay", type=_range, default=(0, 2), metavar="LO,HI")
    g.add_argument("--machine-delay", type=_range, default=(0, 3), metavar="LO,HI")
    g.add_argument("--size", type=_range, default=(1, 1), metavar="LO,HI")
    g.add_argument("--speed", type=_range, default=(1, 1), metavar="LO,HI")
    g.add_argument("--model", choices=("additive", "job_machine", "umps"), default="additive")
    g.add_argument("--layers", type=int)
    mx = g.add_mutually_exclusive_group()
    mx.add_argument("--in-only", action="store_true", help="no out-delays")
    mx.add_argument("--symmetric", action="store_true", help="in-delay equals out-delay everywhere")
    g.add_argument("--out", type=Path)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="run the full pipeline")
    s.add_argument("instance", type=Path)
    s.add_argument("--variant", default="auto", choices=("auto", "MachineDelays", "JobMachineDelays", "GeneralRelated"))
    s.add_argument("--alpha", type=_fraction)
    s.add_argument("--no-dup", action="store_true")
    s.add_argument("--combinatorial", action="store_true")
    s.add_argument("--lp-method", default="auto", choices=("auto", "simplex", "highs"))
    s.add_argument("--emit-stages", type=Path, metavar="DIR")
    s.add_argument("--report", type=Path)
    s.add_argument("--out", type=Path)
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("validate", help="check a schedule; exit 0 iff valid")
    v.add_argument("instance", type=Path)
    v.add_argument("schedule", type=Path)
    v.add_argument("--out", type=Path)
    v.set_defaults(func=cmd_validate)

    o = sub.add_parser("oracle", help="exact optimum of a tiny instance")
    o.add_argument("instance", type=Path)
    o.add_argument("--horizon", type=_fraction, default=Fraction(12))
    o.add_argument("--no-dup", action="store_true")
    o.add_argument("--out", type=Path)
    o.set_defaults(func=cmd_oracle)

    b = sub.add_parser("bench", help="bound check over a seeded suite")
    b.add_argument("--count", type=int, default=20)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--n", type=int, default=5)
    b.add_argument("--m", type=int, default=2)
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--csv", type=Path)
    b.set_defaults(func=cmd_bench)

    gt = sub.add_parser("gantt", help="draw a schedule")
    gt.add_argument("instance", type=Path)
    gt.add_argument("schedule", type=Path)
    gt.add_argument("--svg", type=Path)
    gt.add_argument("--ascii", action="store_true")
    gt.set_defaults(func=cmd_gantt)

    t = sub.add_parser("threshold", help="no-duplication threshold test for symmetric instances")
    t.add_argument("instance", type=Path)
    t.add_argument("--T", type=_fraction, help="single probe instead of a search")
    t.add_argument("--out", type=Path)
    t.set_defaults(func=cmd_threshold)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    level = os.environ.get("DELAYSCHED_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (UdpsError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (UdpsInvariantError, AssertionError) as exc:
        print(f"internal invariant breached: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
