import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from delaysched.model import Machine, PrecedenceDag
from delaysched.udps import (
    UdpsError,
    UdpsInput,
    check_input,
    list_schedule,
    udps_bound,
    udps_solve,
    validate_udps,
)


def _end(s, machine: Machine):
    return max(t for _, _, t in s.triples()) + machine.duration


def test_list_schedule_independent_jobs():
    dag = PrecedenceDag(range(4), [])
    m = Machine(0, size=2)
    assert _end(list_schedule(dag, range(4), m), m) == 2


@pytest.mark.parametrize("size", [1, 2, 5])
def test_list_schedule_chain(size):
    dag = PrecedenceDag(range(3), [(0, 1), (1, 2)])
    m = Machine(0, size=size)
    assert _end(list_schedule(dag, range(3), m), m) == 3


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_list_schedule_graham_bound(seed):
    r = random.Random(seed)
    n = r.randint(1, 15)
    dag = PrecedenceDag(range(n), [(u, v) for u in range(n) for v in range(u + 1, n) if r.random() < 0.2])
    m = Machine(0, size=r.randint(1, 3), speed=r.randint(1, 3))
    s = list_schedule(dag, range(n), m, start=Fraction(1, 2))
    from delaysched.model import critical_path

    assert _end(s, m) - Fraction(1, 2) <= Fraction(n, m.size * m.speed) + critical_path(dag) * m.duration


def _inp(n, edges, machines=(0,), size=1, speed=1, delta=2, alpha=1):
    return UdpsInput(frozenset(range(n)), PrecedenceDag(range(n), edges), machines, size, speed, delta, Fraction(alpha))


def test_single_job():
    inp = _inp(1, [], delta=3, speed=2)
    res = udps_solve(inp, report=True)
    assert len(res.rounds) == 1 and res.makespan <= inp.delta + Fraction(1, 2)


def test_antichain_is_one_balanced_round():
    inp = _inp(6, [], machines=(0, 1, 2), size=2)
    res = udps_solve(inp, report=True)
    assert len(res.rounds) == 1
    assert res.rounds[0].loads == (2, 2, 2)


def test_precondition_violation_names_job():
    inp = _inp(4, [(0, 3), (1, 3), (2, 3)], delta=1)
    with pytest.raises(UdpsError, match="job 3"):
        check_input(inp)
    with pytest.raises(UdpsError):
        udps_solve(inp)


def _random_input(seed):
    r = random.Random(seed)
    delta, size, speed = r.choice([1, 2, 4]), r.choice([1, 2]), r.choice([1, 2])
    alpha = r.choice([1, 2])
    n = r.randint(1, 30)
    edges, anc, depth = [], [set() for _ in range(n)], [1] * n
    for v in range(1, n):
        for u in r.sample(range(v), min(v, 2)):
            cand = anc[v] | {u} | anc[u]
            if r.random() < 0.6 and len(cand) <= alpha * delta * size * speed and depth[u] + 1 <= alpha * delta * speed:
                edges.append((u, v))
                anc[v], depth[v] = cand, max(depth[v], depth[u] + 1)
    return _inp(n, edges, tuple(range(r.randint(1, 3))), size, speed, delta, alpha)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_random_inputs_valid_and_within_bound(seed):
    inp = _random_input(seed)
    res = udps_solve(inp, report=True)
    assert validate_udps(inp, res.schedule).ok
    assert res.makespan < udps_bound(inp)
    for rnd in res.rounds:
        assert rnd.total <= 2 * len(rnd.placed)
        assert max(rnd.loads) - min(rnd.loads) <= inp.pred_limit + 1


def test_rounds_are_separated_by_delta():
    inp = _inp(4, [(0, 1), (1, 2), (2, 3)], size=1, delta=4, alpha=1)
    res = udps_solve(inp, report=True)
    for a, b in zip(res.rounds, res.rounds[1:]):
        assert b.start >= a.end + inp.delta
