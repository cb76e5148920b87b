import json
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from _support import antichain, chain, random_instance, random_params

from delaysched.formats import instance_to_dict
from delaysched.model import ModelError, Instance, Job, Machine, makespan, validate_schedule
from delaysched.oracle import (
    GenParams,
    OracleError,
    baseline_single_machine,
    brute_force_opt,
    enumerate_feasible,
    feasible,
    generate,
    tick,
)


def test_single_job():
    assert brute_force_opt(antichain(1)).makespan == 1


def test_two_job_chain_with_expensive_link():
    ms = (Machine(0, in_delay=3), Machine(1, in_delay=3))
    inst = chain(2, ms)
    res = brute_force_opt(inst, 8, allow_dup=False)
    assert res.makespan == 2
    assert validate_schedule(inst, res.schedule).ok


def test_duplication_can_help():
    # two children of one root; machine 1 is expensive to reach
    jobs = (Job(0), Job(1), Job(2, 0, 0))
    ms = (Machine(0, in_delay=4), Machine(1, in_delay=4))
    inst = Instance(jobs, ms, ((0, 1), (0, 2)))
    dup = brute_force_opt(inst, 8, True).makespan
    nodup = brute_force_opt(inst, 8, False).makespan
    assert dup <= nodup


def test_faster_machine_ticks():
    inst = chain(2, (Machine(0, speed=2), Machine(1, speed=3)))
    assert tick(inst) == Fraction(1, 6)
    assert brute_force_opt(inst, 4).makespan == Fraction(2, 3)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_opt_orderings(seed):
    inst = random_instance(seed, n=(2, 5), m=(1, 2))
    dup = brute_force_opt(inst, 16, True)
    nodup = brute_force_opt(inst, 16, False)
    base = makespan(baseline_single_machine(inst), inst)
    assert dup.makespan <= nodup.makespan <= base
    assert validate_schedule(inst, nodup.schedule).ok
    assert nodup.schedule.duplicate_count() == 0


@pytest.mark.parametrize("seed", range(8))
def test_opt_is_monotone_in_horizon(seed):
    inst = random_instance(seed, n=(3, 5))
    opt = brute_force_opt(inst, 16).makespan
    tight = brute_force_opt(inst, opt)
    assert tight.makespan == opt
    assert brute_force_opt(inst, opt - tick(inst)).makespan is None


def test_infeasible_horizon():
    res = brute_force_opt(chain(4), 3)
    assert not res.feasible and res.makespan is None


def test_size_caps():
    with pytest.raises(OracleError):
        brute_force_opt(antichain(9))
    with pytest.raises(OracleError):
        brute_force_opt(antichain(2, tuple(Machine(i) for i in range(4))))
    with pytest.raises(OracleError):
        brute_force_opt(antichain(2), 17)


@pytest.mark.parametrize("seed", range(5))
def test_finer_grid_gives_the_same_optimum(seed):
    inst = random_instance(500 + seed, n=(2, 4), m=(1, 2), speed=(1, 1))
    base = brute_force_opt(inst, 10, False).makespan
    fine = brute_force_opt(inst, 10, False, grid=tick(inst) / 2).makespan
    assert fine == base


@pytest.mark.parametrize("seed", range(6))
def test_exhaustive_enumeration_agrees(seed):
    inst = random_instance(700 + seed, n=(2, 3), m=(1, 2), speed=(1, 1))
    opt = brute_force_opt(inst, 6, False).makespan
    good = enumerate_feasible(inst, 6, limit=10**6)
    assert min(makespan(s, inst) for s in good) == opt


def test_feasible_rejects_missing_jobs_and_overlaps():
    from _support import sched

    inst = antichain(2)
    assert not feasible(inst, sched((0, 0, 0)))
    assert not feasible(inst, sched((0, 0, 0), (1, 0, 0)))
    assert feasible(inst, sched((0, 0, 0), (1, 0, 1)))


# ------------------------------------------------------------ generator


def test_generate_is_deterministic():
    p = random_params(42, n=(5, 8), m=(2, 3))
    a = json.dumps(instance_to_dict(generate(p)), sort_keys=True)
    b = json.dumps(instance_to_dict(generate(p)), sort_keys=True)
    assert a == b


def test_edge_probability_extremes():
    assert not generate(GenParams(seed=1, n=7, edge_prob=0)).dag.edges
    dense = generate(GenParams(seed=1, n=7, edge_prob=1, layers=7))
    assert len(dense.dag.edges) > 0
    assert len(dense.dag.order) == 7


def test_symmetric_and_in_only_generation():
    s = generate(GenParams(seed=3, n=5, m=3, symmetric=True))
    assert all(j.in_delay == j.out_delay for j in s.jobs)
    assert all(m.in_delay == m.out_delay for m in s.machines)
    i = generate(GenParams(seed=3, n=5, m=3, out_delays=False))
    assert all(j.out_delay == 0 for j in i.jobs)


@pytest.mark.parametrize("model", ["job_machine", "umps"])
def test_other_models_generate(model):
    inst = generate(GenParams(seed=5, n=5, m=2, model=model))
    assert inst.model == model
    assert validate_schedule(inst, baseline_single_machine(inst)).ok


@pytest.mark.parametrize(
    "kw",
    [dict(n=-1), dict(m=0), dict(edge_prob=1.5), dict(size=(2, 1)), dict(speed=(0, 1)), dict(model="nope")],
)
def test_bad_parameters(kw):
    with pytest.raises(ModelError):
        GenParams(**kw)
