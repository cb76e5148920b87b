from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from _support import chain, random_instance

from delaysched import scheduler
from delaysched.grouping import round_and_group
from delaysched.lp import JOB_MACHINE_DELAYS, RoundedSolution, build_lp, round_solution
from delaysched.lp_solver import solve
from delaysched.model import Instance, Job, Machine, critical_path, makespan, validate_schedule
from delaysched.oracle import generate, GenParams
from delaysched.reduction import merge_out_into_in
from delaysched.scheduler import (
    PhaseError,
    PipelineError,
    PipelineOptions,
    build_schedule,
    extract_phases,
    phase_witnesses,
    run_pipeline,
)


def _rounded(inst, variant=None):
    g = round_and_group(merge_out_into_in(inst), cap=False)
    variant = variant or scheduler._pick_variant(g, "auto")
    sol = solve(build_lp(g, 1, variant), method="auto")
    return round_solution(sol, g, None, variant), g


def _point(inst, C, z=(), alpha=1):
    g = round_and_group(inst, cap=False)
    return (
        RoundedSolution(JOB_MACHINE_DELAYS, Fraction(alpha), g.K, g.L, max(C.values()) + 1, C, {v: 0 for v in C}, frozenset(z)),
        g,
    )


def test_all_jobs_in_first_window_form_one_phase():
    inst = Instance(tuple(Job(v) for v in range(3)), (Machine(0, in_delay=4),), ((0, 1),))
    r, g = _point(inst, {0: Fraction(0), 1: Fraction(1), 2: Fraction(2)}, {(0, 1, 0)})
    phases = extract_phases(r, g)
    assert len(phases) == 1 and phases[0].d == 0 and phases[0].jobs == {0, 1, 2}


def test_job_lands_in_its_window():
    inst = Instance(tuple(Job(v) for v in range(2)), (Machine(0, in_delay=2),))
    r, g = _point(inst, {0: Fraction(0), 1: Fraction(5)})
    ph = {p.d: p for p in extract_phases(r, g)}
    assert set(ph) == {0, 2} and ph[2].V == {1}


def test_empty_instance_gives_empty_schedule():
    inst = Instance((), (Machine(0),))
    g = round_and_group(inst, cap=False)
    r = RoundedSolution(JOB_MACHINE_DELAYS, Fraction(1), g.K, g.L, Fraction(0), {}, {}, frozenset())
    assert len(build_schedule(r, g)) == 0


def test_single_phase_is_pad_plus_fragment():
    inst = Instance(tuple(Job(v) for v in range(2)), (Machine(0, in_delay=4),), ((0, 1),))
    r, g = _point(inst, {0: Fraction(0), 1: Fraction(1)}, {(0, 1, 0)})
    s, stats = build_schedule(r, g, report=True)
    assert len(stats) == 1 and stats[0].start == 4
    assert min(t for _, _, t in s.triples()) == 4


def test_predecessor_limit_breach_names_the_phase():
    inst = Instance(tuple(Job(v) for v in range(4)), (Machine(0, in_delay=1),), ((0, 3), (1, 3), (2, 3)))
    C = {0: Fraction(0), 1: Fraction(0), 2: Fraction(0), 3: Fraction(1, 2)}
    r, g = _point(inst, C, {(u, 3, 0) for u in range(3)})
    with pytest.raises(PhaseError, match=r"phase \(0, 0, 0\)"):
        build_schedule(r, g)


def _random(seed):
    return random_instance(seed, n=(2, 16), m=(1, 4), size=(1, 3), speed=(1, 3), job_delay=(0, 3), machine_delay=(0, 5))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_phase_witnesses_cover_duplicates(seed):
    r, g = _rounded(_random(seed))
    for ph in extract_phases(r, g):
        assert set(phase_witnesses(ph, r, g)) == set(ph.U)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_phases_run_one_at_a_time_with_pads(seed):
    r, g = _rounded(_random(seed))
    phases = extract_phases(r, g)
    s, stats = build_schedule(r, g, report=True)
    for (a, pa), (b, pb) in zip(zip(stats, phases), list(zip(stats, phases))[1:]):
        assert b.start >= a.start + a.length + pa.pad + pb.pad


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.booleans())
def test_pipeline_valid_and_within_bound(seed, dup):
    inst = _random(seed)
    s, rep = run_pipeline(inst, PipelineOptions(allow_dup=dup))
    assert rep.ok and validate_schedule(inst, s).ok
    assert rep.within_bound
    assert rep.path == "baseline" or rep.rounded_feasible


def test_zero_delay_single_machine_is_a_list_schedule():
    inst = chain(3, (Machine(0, size=2),))
    inst = Instance(inst.jobs + (Job(3), Job(4)), inst.machines, inst.edges)
    s, rep = run_pipeline(inst)
    m = inst.machines[0]
    assert rep.ok
    assert makespan(s, inst) <= Fraction(inst.n, m.size * m.speed) + critical_path(inst)


def test_combinatorial_path_skips_the_lp(monkeypatch):
    inst = Instance(tuple(Job(v, 1) for v in range(4)), (Machine(0, in_delay=2), Machine(1, in_delay=2)), ((0, 1), (1, 2)))

    def boom(*a, **k):
        raise AssertionError("LP solved on the combinatorial path")

    monkeypatch.setattr(scheduler, "solve", boom)
    s, rep = run_pipeline(inst, PipelineOptions(combinatorial_path=True))
    assert rep.path == "combinatorial" and rep.ok


def test_combinatorial_path_needs_uniform_unit_machines():
    inst = Instance(tuple(Job(v) for v in range(8)), (Machine(0, in_delay=1), Machine(1, in_delay=4)))
    with pytest.raises(PipelineError):
        run_pipeline(inst, PipelineOptions(combinatorial_path=True))


def test_pipeline_rejects_other_models():
    inst = generate(GenParams(seed=1, n=3, m=2, model="umps"))
    with pytest.raises(PipelineError):
        run_pipeline(inst)


def test_machines_above_the_cap_are_excluded():
    inst = Instance(tuple(Job(v) for v in range(3)), (Machine(0), Machine(1, in_delay=100)), ((0, 1),))
    s, rep = run_pipeline(inst)
    assert rep.excluded_machines == (1,)
    assert all(p.machine == 0 for ps in s.placements.values() for p in ps)


def test_baseline_when_every_machine_is_above_the_cap():
    inst = Instance(tuple(Job(v) for v in range(3)), (Machine(0, in_delay=50), Machine(1, in_delay=60)))
    s, rep = run_pipeline(inst)
    assert rep.path == "baseline" and rep.ok


def test_alpha_override_and_report_dict():
    inst = _random(5)
    _, rep = run_pipeline(inst, PipelineOptions(alpha=Fraction(2 * 8)))
    d = rep.to_dict()
    assert d["alpha"] == "16/1" and d["ok"] is True
