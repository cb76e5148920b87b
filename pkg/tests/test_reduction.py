import pytest
from hypothesis import given, settings, strategies as st

from _support import random_instance, sched

from delaysched.model import Instance, Job, Machine, is_valid, makespan, validate_schedule
from delaysched.oracle import baseline_single_machine, brute_force_opt
from delaysched.reduction import (
    ReductionError,
    delivery_makespan,
    expand_in_to_inout,
    expand_inout_to_in,
    expansion_bound,
    jm_schedule_to_umps,
    make_umps_instance,
    merge_out_into_in,
    shift_schedule_machine_delays,
    umps_aux_ids,
    umps_forward_schedule,
    umps_to_job_machine,
)
from delaysched.scheduler import run_pipeline


def test_merge_examples():
    inst = Instance((Job(0, 1, 4),), (Machine(0, in_delay=3, out_delay=2),))
    m = merge_out_into_in(inst)
    assert (m.machines[0].in_delay, m.machines[0].out_delay) == (5, 0)
    assert (m.jobs[0].in_delay, m.jobs[0].out_delay) == (5, 0)
    zero = Instance((Job(0),), (Machine(0),))
    assert merge_out_into_in(zero) == zero


def _machine_only(seed):
    return random_instance(seed, n=(2, 10), m=(1, 3), job_delay=(0, 0))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_shift_round_trip_and_validity(seed):
    inst = _machine_only(seed)
    s, _ = run_pipeline(inst)
    fwd = shift_schedule_machine_delays(inst, s, "forward")
    assert is_valid(merge_out_into_in(inst), fwd)
    assert shift_schedule_machine_delays(inst, fwd, "back") == s
    assert delivery_makespan(merge_out_into_in(inst), fwd) == delivery_makespan(inst, s)


@pytest.mark.parametrize("seed", range(10))
def test_back_shift_of_merged_schedule_is_valid(seed):
    inst = random_instance(seed, n=(2, 8), m=(2, 2), job_delay=(0, 0), machine_delay=(1, 2))
    merged = merge_out_into_in(inst)
    s, _ = run_pipeline(merged)
    lift = max(m.out_delay for m in inst.machines)
    back = shift_schedule_machine_delays(inst, s.shifted(lift), "back")
    assert is_valid(inst, back)


def test_shift_rejects_job_delays_and_negative_times():
    inst = Instance((Job(0, 1, 0),), (Machine(0),))
    with pytest.raises(ReductionError):
        shift_schedule_machine_delays(inst, sched((0, 0, 0)), "forward")
    inst2 = Instance((Job(0),), (Machine(0, out_delay=2),))
    with pytest.raises(ReductionError):
        shift_schedule_machine_delays(inst2, sched((0, 0, 1)), "back")


def test_expansion_degenerate_case_is_a_shift():
    inst = Instance((Job(0), Job(1)), (Machine(0, in_delay=2), Machine(1)), ((0, 1),))
    s = sched((0, 0, 0), (1, 0, 1))
    out = expand_in_to_inout(inst, s)
    diffs = {t2 - t for (j, m, t), (j2, m2, t2) in zip(sorted(s.triples()), sorted(out.triples()))}
    assert len(diffs) == 1 and is_valid(inst, out)


def test_single_job_expansion_is_valid():
    inst = Instance((Job(0, 2, 3),), (Machine(0, 1, 1, 1, 1),))
    out = expand_in_to_inout(inst, sched((0, 0, 0)))
    assert is_valid(inst, out)


def _with_job_delays(seed):
    return random_instance(seed, n=(2, 8), m=(1, 3), job_delay=(0, 4))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_expansion_to_inout_is_valid_and_bounded(seed):
    inst = _with_job_delays(seed)
    merged = merge_out_into_in(inst)
    base = baseline_single_machine(merged)
    out, rep = expand_in_to_inout(inst, base, report=True)
    assert is_valid(inst, out)
    assert float(makespan(out, inst)) <= expansion_bound(inst.delta_max, makespan(base, merged)) + 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_expansion_to_in_is_valid_and_round_trip_valid(seed):
    inst = _with_job_delays(seed)
    merged = merge_out_into_in(inst)
    s, _ = run_pipeline(inst)
    back, rep = expand_inout_to_in(inst, s, report=True)
    assert is_valid(merged, back)
    assert float(makespan(back, merged)) <= expansion_bound(inst.delta_max, makespan(s, inst)) + 1e-9
    assert is_valid(inst, expand_in_to_inout(inst, back))


def test_expansion_keeps_no_duplication():
    inst = _with_job_delays(3)
    s, _ = run_pipeline(inst, __import__("delaysched.scheduler", fromlist=["PipelineOptions"]).PipelineOptions(allow_dup=False))
    assert s.duplicate_count() == 0


# ------------------------------------------------------------------ UMPS


def test_umps_single_machine_reduction():
    umps = make_umps_instance({0: [0]})
    red = umps_to_job_machine(umps)
    assert red.n == 3
    (u, v), = umps_aux_ids(umps).values()
    assert red.dag.precedes(u, 0) and red.dag.precedes(0, v)
    assert all(d == 0 for row in red.table.values() for d in row.values())


def test_umps_guard_rows():
    umps = make_umps_instance({0: [0, 1], 1: [2, 3]})
    red = umps_to_job_machine(umps)
    u0, _ = umps_aux_ids(umps)[0]
    assert red.table[u0] == {0: 0, 1: 4}
    assert red.n == umps.n + 2 * umps.m


def test_umps_reduction_is_injective():
    a = make_umps_instance({0: [0], 1: [1]})
    b = make_umps_instance({0: [0, 1], 1: []})
    assert umps_to_job_machine(a) != umps_to_job_machine(b)


def _umps(seed, n=4):
    import random

    r = random.Random(seed)
    edges = [(u, v) for u in range(n) for v in range(u + 1, n) if r.random() < 0.3]
    part = {0: [], 1: []}
    for v in range(n):
        part[r.randrange(2)].append(v)
    return make_umps_instance(part, edges)


@pytest.mark.parametrize("seed", range(10))
def test_forward_construction_adds_two(seed):
    umps = _umps(seed)
    opt = brute_force_opt(umps, 16, False)
    fwd = umps_forward_schedule(umps, opt.schedule)
    red = umps_to_job_machine(umps)
    rep = validate_schedule(red, fwd)
    assert rep.ok and rep.makespan == opt.makespan + 2


def test_identity_conversion_when_everything_stays_home():
    umps = make_umps_instance({0: [0], 1: [1]}, [])
    red = umps_to_job_machine(umps)
    opt = brute_force_opt(red, 16, False)
    conv = jm_schedule_to_umps(umps, opt.schedule, report=True)
    assert is_valid(umps, conv.schedule)


def test_long_schedule_path_is_list():
    umps = _umps(1, 3)
    red = umps_to_job_machine(umps)
    s = brute_force_opt(red, 16, False).schedule.shifted(5)
    conv = jm_schedule_to_umps(umps, s, report=True)
    assert conv.path == "list"
    assert validate_schedule(umps, conv.schedule).makespan <= umps.n


def test_conversion_rejects_invalid_input():
    umps = make_umps_instance({0: [0], 1: [1]}, [(0, 1)])
    red = umps_to_job_machine(umps)
    bad = sched(*((j, 0, 0) for j in red.job), nodup=True)
    with pytest.raises(ReductionError):
        jm_schedule_to_umps(umps, bad)


def test_interleave_when_home_job_feeds_away_job():
    # job 0 runs at home on machine 0 and feeds job 2, which belongs to
    # machine 1 but runs on machine 0 next to its guard; moving home jobs
    # past the away jobs would break 0 -> 2
    umps = make_umps_instance({0: [0, 1], 1: [2, 3, 4, 5, 6]}, [(0, 2)])
    red = umps_to_job_machine(umps)
    (u0, v0), (u1, v1) = umps_aux_ids(umps)[0], umps_aux_ids(umps)[1]
    s = sched(
        (u1, 0, 0), (u0, 0, 1), (0, 0, 2), (2, 0, 3), (1, 0, 4), (v0, 0, 5),
        (3, 1, 1), (4, 1, 2), (5, 1, 3), (6, 1, 4), (v1, 1, 5),
        nodup=True,
    )
    assert validate_schedule(red, s).ok and makespan(s, red) == 6 < umps.n
    conv = jm_schedule_to_umps(umps, s, report=True)
    assert conv.path == "interleave"
    assert validate_schedule(umps, conv.schedule).makespan <= 2 * 6 + 1
