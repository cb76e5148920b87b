"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also collected and shown in the terminal summary.
"""

from __future__ import annotations

import random
import time
from collections import Counter
from fractions import Fraction

from _support import random_instance, random_params, record

from delaysched.grouping import round_and_group
from delaysched.lp import VARIANTS, build_lp, check_rounded_feasible, check_variant, round_solution
from delaysched.lp_solver import solve
from delaysched.model import Instance, PrecedenceDag, validate_schedule
from delaysched.nodup import symmetric_threshold
from delaysched.oracle import GenParams, brute_force_opt, enumerate_candidates, feasible, generate
from delaysched.reduction import (
    delivery_makespan,
    expand_in_to_inout,
    jm_schedule_to_umps,
    make_umps_instance,
    merge_out_into_in,
    shift_schedule_machine_delays,
    umps_to_job_machine,
)
from delaysched.scheduler import PipelineOptions, run_pipeline
from delaysched.udps import UdpsInput, check_input, udps_solve, validate_udps


def _variants(grouped):
    out = []
    for v in VARIANTS:
        try:
            check_variant(grouped, v)
        except ValueError:
            continue
        out.append(v)
    return out


def _grouped(inst):
    return round_and_group(merge_out_into_in(inst), cap=False)


# ------------------------------------------------------------------- 1


def test_c01_validator_matches_oracle_enumeration():
    t0 = time.perf_counter()
    checked = accepted = 0
    mismatches = []
    for seed in range(50):
        r = random.Random(seed)
        inst = random_instance(seed, n=(2, 6), m=(1, 2))
        horizon = r.randint(3, 12)
        for dup in (False, True):
            for s in enumerate_candidates(inst, horizon, allow_dup=dup, limit=600, seed=seed):
                a = validate_schedule(inst, s).ok
                b = feasible(inst, s)
                checked += 1
                accepted += a
                if a != b:
                    mismatches.append((seed, s))
    elapsed = time.perf_counter() - t0
    ok = not mismatches and accepted > 0 and elapsed < 120
    record(1, ok, f"{checked} candidates, {accepted} feasible, {len(mismatches)} disagreements, {elapsed:.1f}s")
    assert not mismatches, mismatches[:3]
    assert accepted > 0
    assert elapsed < 120


# ------------------------------------------------------------------- 2


def _oracle_instances(count, start=0, **kw):
    """Tiny instances whose rounded version the oracle can solve."""
    out = []
    seed = start
    while len(out) < count:
        inst = random_instance(seed, n=(2, 5), m=(1, 2), **kw)
        seed += 1
        out.append(inst)
    return out


def test_c02_lp_lower_bound():
    t0 = time.perf_counter()
    worst = float("-inf")
    rows = 0
    for inst in _oracle_instances(30):
        g = _grouped(inst)
        opt = brute_force_opt(g.instance, 16, True).makespan
        assert opt is not None
        for variant in _variants(g):
            sol = solve(build_lp(g, 1, variant), method="auto")
            assert sol.ok
            worst = max(worst, sol.objective - float(opt))
            rows += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 300
    record(2, ok, f"{rows} LP solves, max(LP - OPT) = {worst:.3g}, {elapsed:.1f}s")
    assert worst <= 1e-6
    assert elapsed < 300


# ------------------------------------------------------------------- 3


def test_c03_rounding_feasible_at_2k():
    t0 = time.perf_counter()
    good = total = 0
    for seed in range(50):
        inst = random_instance(1000 + seed, n=(4, 12), m=(1, 4), size=(1, 3), speed=(1, 3))
        g = _grouped(inst)
        for variant in _variants(g):
            sol = solve(build_lp(g, 1, variant), method="auto")
            rounded = round_solution(sol, g, None, variant)
            assert rounded.alpha == 2 * g.K
            rep = check_rounded_feasible(rounded, g, 2 * g.K)
            good += rep.ok
            total += 1
    elapsed = time.perf_counter() - t0
    ok = good == total and elapsed < 300
    record(3, ok, f"{good}/{total} rounded points feasible at alpha = 2K, {elapsed:.1f}s")
    assert good == total
    assert elapsed < 300


# ------------------------------------------------------------------- 4


def test_c04_value_bound():
    t0 = time.perf_counter()
    worst = Fraction(0)
    rows = 0
    for inst in _oracle_instances(20, start=2000, size=(1, 1), speed=(1, 1)):
        g = _grouped(inst)
        opt = brute_force_opt(inst, 16, True).makespan
        for variant in _variants(g):
            sol = solve(build_lp(g, 1, variant), method="auto")
            rounded = round_solution(sol, g, None, variant)
            ratio = rounded.cstar / (4 * g.K * opt)
            worst = max(worst, ratio)
            rows += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1 and elapsed < 600
    record(4, ok, f"{rows} checks, max C*_2K / (4K OPT) = {float(worst):.3f}, {elapsed:.1f}s")
    assert worst <= 1
    assert elapsed < 600


# ------------------------------------------------------------------- 5


def _udps_input(seed: int) -> UdpsInput:
    r = random.Random(seed)
    delta = r.choice([1, 2, 4, 8])
    size, speed = r.choice([1, 2]), r.choice([1, 2])
    alpha = Fraction(r.choice([1, 2, 4]))
    # keep predecessor sets and chains inside the limits
    n = r.randint(1, 40)
    limit_pred = int(alpha * delta * size * speed)
    limit_chain = int(alpha * delta * speed)
    edges = []
    depth = [1] * n
    anc = [set() for _ in range(n)]
    for v in range(n):
        for u in r.sample(range(v), min(v, 2)) if v else []:
            if r.random() < 0.5:
                new_anc = anc[v] | {u} | anc[u]
                if len(new_anc) <= limit_pred and max(depth[v], depth[u] + 1) <= limit_chain:
                    edges.append((u, v))
                    anc[v] = new_anc
                    depth[v] = max(depth[v], depth[u] + 1)
    dag = PrecedenceDag(range(n), edges)
    machines = tuple(range(r.randint(1, 4)))
    return UdpsInput(frozenset(range(n)), dag, machines, size, speed, delta, alpha)


def test_c05_udps_bounds():
    t0 = time.perf_counter()
    bad = []
    for seed in range(50):
        inp = _udps_input(seed)
        check_input(inp)
        res = udps_solve(inp, report=True)
        if not validate_udps(inp, res.schedule).ok:
            bad.append((seed, "invalid"))
        if not res.makespan < res.bound:
            bad.append((seed, f"makespan {res.makespan} >= {res.bound}"))
        for rnd in res.rounds:
            if rnd.total > 2 * len(rnd.placed):
                bad.append((seed, "duplication"))
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed < 120
    record(5, ok, f"50 inputs, {len(bad)} failures, {elapsed:.1f}s")
    assert not bad, bad
    assert elapsed < 120


# ------------------------------------------------------------------- 6


def _pipeline_instance(seed: int) -> Instance:
    r = random.Random(seed)
    return generate(
        GenParams(
            seed=seed,
            n=r.randint(2, 30),
            m=r.randint(1, 4),
            edge_prob=r.choice([0.05, 0.15, 0.3]),
            job_delay=(0, r.randint(0, 3)),
            machine_delay=(0, r.randint(0, 6)),
            size=(1, r.randint(1, 3)),
            speed=(1, r.randint(1, 3)),
        )
    )


def test_c06_end_to_end_validity_and_bound():
    t0 = time.perf_counter()
    valid = within = 0
    worst = 0.0
    for seed in range(100):
        inst = _pipeline_instance(3000 + seed)
        s, rep = run_pipeline(inst)
        v = validate_schedule(inst, s)
        valid += v.ok
        within += rep.within_bound
        if rep.bound:
            worst = max(worst, float(rep.makespan_in) / rep.bound)
    elapsed = time.perf_counter() - t0
    ok = valid == 100 and within == 100 and elapsed < 600
    record(6, ok, f"{valid}/100 valid, {within}/100 within bound (max ratio {worst:.3f}), {elapsed:.1f}s")
    assert valid == 100
    assert within == 100
    assert elapsed < 600


# ------------------------------------------------------------------- 7


def test_c07_no_duplication_mode():
    t0 = time.perf_counter()
    good = 0
    for seed in range(50):
        inst = _pipeline_instance(4000 + seed)
        s, rep = run_pipeline(inst, PipelineOptions(allow_dup=False))
        single = all(len(ps) == 1 for ps in s.placements.values()) and set(s.placements) == set(inst.job)
        good += single and validate_schedule(inst, s).ok and rep.residual_duplicates == 0
    elapsed = time.perf_counter() - t0
    ok = good == 50 and elapsed < 300
    record(7, ok, f"{good}/50 runs with one copy per job and valid, {elapsed:.1f}s")
    assert good == 50
    assert elapsed < 300


# ------------------------------------------------------------------- 8


def test_c08_symmetric_threshold_soundness():
    t0 = time.perf_counter()
    false_claims = []
    asserted = probes = 0
    for seed in range(20):
        inst = generate(
            random_params(5000 + seed, n=(3, 5), m=(1, 2), symmetric=True, machine_delay=(0, 4), job_delay=(0, 2))
        )
        opt = brute_force_opt(inst, 16, False).makespan
        assert opt is not None
        sweep = sorted({opt + Fraction(k, 2) for k in range(-4, 5)} - {Fraction(0)})
        for T in (t for t in sweep if t > 0):
            out = symmetric_threshold(inst, T)
            probes += 1
            if out.asserted:
                asserted += 1
                if opt <= T:
                    false_claims.append((seed, T, opt, out.certificate))
            else:
                assert validate_schedule(inst, out.schedule).ok
    elapsed = time.perf_counter() - t0
    ok = not false_claims and elapsed < 600
    record(8, ok, f"{probes} probes, {asserted} assertions, {len(false_claims)} false, {elapsed:.1f}s")
    assert not false_claims, false_claims
    assert asserted > 0
    assert elapsed < 600


# ------------------------------------------------------------------- 9


def _umps_instance(seed: int, n: int | None = None, p: float = 0.4):
    r = random.Random(seed)
    n = n or r.randint(1, 4)
    edges = [(u, v) for u in range(n) for v in range(u + 1, n) if r.random() < p]
    part = {0: [], 1: []}
    for v in range(n):
        part[r.randrange(2)].append(v)
    return make_umps_instance(part, edges)


def test_c09_umps_reduction():
    t0 = time.perf_counter()
    fails = []
    paths = Counter()
    for seed in range(15):
        # the larger ones have OPT(I') < n, which exercises the split paths
        umps = _umps_instance(6000 + seed) if seed < 8 else _umps_instance(6000 + seed, 6, 0.15)
        reduced = umps_to_job_machine(umps)
        opt_i = brute_force_opt(umps, 16, False, max_jobs=10)
        opt_r = brute_force_opt(reduced, 16, False, max_jobs=10)
        if opt_r.makespan > opt_i.makespan + 2:
            fails.append((seed, "a", opt_r.makespan, opt_i.makespan))
        conv = jm_schedule_to_umps(umps, opt_r.schedule, report=True)
        paths[conv.path] += 1
        ms = validate_schedule(umps, conv.schedule).makespan
        limit = umps.n if conv.path == "list" else 2 * opt_r.makespan + 1
        if not validate_schedule(umps, conv.schedule).ok or ms > limit:
            fails.append((seed, "b", conv.path, ms, limit))
    elapsed = time.perf_counter() - t0
    ok = not fails and elapsed < 600
    mix = ", ".join(f"{k}={v}" for k, v in sorted(paths.items()))
    record(9, ok, f"15 instances ({mix}), {len(fails)} failures, {elapsed:.1f}s")
    assert not fails, fails
    assert elapsed < 600


# ------------------------------------------------------------------ 10


def test_c10_reduction_exactness():
    from delaysched.oracle import baseline_single_machine
    from delaysched.reduction import expansion_bound

    t0 = time.perf_counter()
    exact = 0
    for seed in range(30):
        inst = generate(random_params(7000 + seed, n=(2, 10), m=(1, 3), job_delay=(0, 0)))
        merged = merge_out_into_in(inst)
        s, _ = run_pipeline(inst)
        fwd = shift_schedule_machine_delays(inst, s, "forward")
        back = shift_schedule_machine_delays(inst, fwd, "back")
        same = (
            back == s
            and validate_schedule(merged, fwd).ok
            and validate_schedule(inst, back).makespan == validate_schedule(inst, s).makespan
            and delivery_makespan(merged, fwd) == delivery_makespan(inst, s)
        )
        exact += same
    expand_ok = 0
    for seed in range(30):
        inst = generate(random_params(8000 + seed, n=(2, 10), m=(1, 3), job_delay=(0, 4)))
        merged = merge_out_into_in(inst)
        base = baseline_single_machine(merged)
        out, rep = expand_in_to_inout(inst, base, report=True)
        ms_in = validate_schedule(merged, base).makespan
        v = validate_schedule(inst, out)
        expand_ok += v.ok and float(v.makespan) <= expansion_bound(inst.delta_max, ms_in) + 1e-9
    elapsed = time.perf_counter() - t0
    ok = exact == 30 and expand_ok == 30 and elapsed < 300
    record(10, ok, f"{exact}/30 exact round trips, {expand_ok}/30 expansions valid and within bound, {elapsed:.1f}s")
    assert exact == 30
    assert expand_ok == 30
    assert elapsed < 300
