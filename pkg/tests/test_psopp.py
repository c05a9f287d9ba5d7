import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sotest import psopp
from sotest.clock import SimulatedClock
from sotest.domain import (
    Partitioning,
    PartitioningConstraints,
    all_partitionings,
    check_partition_bounds,
    feasible,
    validate_partitioning,
)
from sotest.generation import PsoppParams, random_partitioning
from sotest.psopp import OperatorInapplicable, exchange, fitness, join, split

C = PartitioningConstraints
P = Partitioning.of


def test_split_examples():
    assert split(P([{1, 2}]), {1, 2}, {1}, C(1, 2, 1, 2)) == P([{1}, {2}])
    with pytest.raises(OperatorInapplicable):
        split(P([{1}]), {1}, {1}, C(1, 1, 1, 2))
    out = split(P([{1, 2, 3}, {4, 5}]), {1, 2, 3}, {1}, C(1, 3, 1, 3))
    assert out == P([{1}, {2, 3}, {4, 5}])
    assert validate_partitioning(out, range(1, 6)).passed and check_partition_bounds(out, C(1, 3, 1, 3)).passed


def test_split_respects_bounds():
    with pytest.raises(OperatorInapplicable):
        split(P([{1, 2, 3}]), 0, {1}, C(2, 3, 1, 2))
    with pytest.raises(OperatorInapplicable):
        split(P([{1, 2}, {3, 4}]), 0, {1}, C(1, 2, 1, 2))
    with pytest.raises(OperatorInapplicable):
        split(P([{1, 2}]), {7}, {1}, C(1, 2, 1, 2))


def test_join_examples():
    assert join(P([{1}, {2}]), {1}, {2}, C(1, 2, 1, 2)) == P([{1, 2}])
    with pytest.raises(OperatorInapplicable):
        join(P([{1}, {2}]), {1}, {2}, C(1, 1, 1, 2))
    out = join(P([{1, 2}, {3}, {4}]), {3}, {4}, C(1, 2, 2, 3))
    assert out == P([{1, 2}, {3, 4}])
    assert check_partition_bounds(out, C(1, 2, 2, 3)).passed
    with pytest.raises(OperatorInapplicable):
        join(P([{1}, {2}]), {1}, {2}, C(1, 2, 2, 2))


def test_exchange_examples():
    c = C(1, 3, 1, 3)
    assert exchange(P([{1, 2}, {3, 4}]), {1, 2}, {3, 4}, {1}, {3}, c) == P([{3, 2}, {1, 4}])
    with pytest.raises(OperatorInapplicable):
        exchange(P([{1, 2}, {3, 4}]), {1, 2}, {3, 4}, set(), set(), c)
    out = exchange(P([{1, 2}, {3, 4}]), {1, 2}, {3, 4}, {1}, set(), c)
    assert out == P([{2}, {1, 3, 4}])
    with pytest.raises(OperatorInapplicable):
        exchange(P([{1, 2}, {3, 4}]), {1, 2}, {3, 4}, {1}, set(), C(2, 3, 1, 3))
    with pytest.raises(OperatorInapplicable):
        exchange(P([{1}, {2}]), {1}, {2}, {1}, set(), c)


def test_fitness_examples():
    assert fitness(P([{0}, {1}]), [0.4, 0.4]) == 1.0
    assert fitness(P([{0}, {1}]), [0.0, 1.0]) == pytest.approx(2 / 3)
    assert fitness(P([{0, 1, 2}]), [0.0, 0.5, 1.0]) == 1.0


@st.composite
def feasible_instance(draw, max_n=30):
    n = draw(st.integers(1, max_n))
    s_min = draw(st.integers(1, n))
    s_max = draw(st.integers(s_min, n))
    n_min = draw(st.integers(1, n))
    n_max = draw(st.integers(n_min, n))
    c = C(s_min, s_max, n_min, n_max)
    if not feasible(n, c):
        c = C(1, n, 1, n)
    seed = draw(st.integers(0, 2**31))
    return n, c, seed


def _valid(parts, n, c):
    p = Partitioning.of(parts)
    return validate_partitioning(p, range(n)).passed and check_partition_bounds(p, c).passed


@given(feasible_instance())
def test_random_moves_preserve_validity(inst):
    n, c, seed = inst
    rng = random.Random(seed)
    parts = tuple(random_partitioning(range(n), c, rng))
    for _ in range(30):
        for op in (psopp.random_split, psopp.random_join, psopp.random_exchange):
            res = op(parts, c, rng)
            if res is not None:
                parts = res[0]
                assert _valid(parts, n, c)


@given(feasible_instance(), st.integers(0, 2**31))
def test_approach_preserves_validity_and_reaches_target(inst, seed2):
    n, c, seed = inst
    rng = random.Random(seed)
    parts = tuple(random_partitioning(range(n), c, rng))
    target = tuple(random_partitioning(range(n), c, random.Random(seed2)))
    for _ in range(200):
        new = psopp.approach(parts, target, c, rng)
        if new is None:
            break
        assert _valid(new, n, c)
        if new is parts:
            break
        parts = new


def test_approach_at_target_is_noop():
    parts = (frozenset({0, 1}), frozenset({2}))
    assert psopp.approach(parts, parts, C(1, 3, 1, 3), random.Random(0)) is parts


def _swarm(n, c, params, seed, hook=None):
    acc = [random.Random(seed + i).random() for i in range(n)]
    return psopp.prepare_psopp(None, c, params, acc, random.Random(seed), SimulatedClock(), agents=range(n),
                               hook=hook)


def test_pure_random_direction():
    kinds = []

    def spy(kind, info, parts, rng):
        kinds.append(kind)
        return parts

    swarm = _swarm(12, C(1, 12, 1, 12), PsoppParams(3, 0, 1.0, 0.0, 0.0, 0.2), 3, spy)
    psopp.run_swarm(swarm, random.Random(3))
    assert kinds
    assert set(kinds) <= {psopp.RANDOM_SPLIT, psopp.RANDOM_JOIN, psopp.RANDOM_EXCHANGE}


@given(feasible_instance(max_n=20))
def test_particles_stay_valid(inst):
    n, c, seed = inst
    swarm = _swarm(n, c, PsoppParams(3, 0, 0.4, 0.3, 0.3, 10.0), seed)
    rng = random.Random(seed)
    for _ in range(40):
        for particle in swarm.particles:
            psopp.iterate_particle(particle, swarm, rng)
            assert _valid(particle.position, n, c)
        swarm.iteration += 1


def test_forced_single_partition():
    for seed in range(10):
        res = psopp.run_psopp(None, C(2, 2, 1, 1), PsoppParams(2, 0, 0.5, 0.25, 0.25, 0.1), [0.1, 0.9],
                              random.Random(seed), agents=[0, 1])
        assert res == P([{0, 1}])


@given(st.integers(0, 2**31))
def test_result_never_worse_than_initial(seed):
    rng = random.Random(seed)
    n = rng.randint(2, 25)
    c = C(1, n, 1, n)
    acc = [rng.random() for _ in range(n)]
    initial = Partitioning.of(random_partitioning(range(n), c, rng))
    params = PsoppParams(2, 1, 0.3, 0.3, 0.4, 0.1)
    res = psopp.run_psopp(initial, c, params, acc, rng)
    assert fitness(res, acc) >= fitness(initial, acc) - 1e-12


def _optimum(acc, c):
    return max(
        fitness([frozenset(b) for b in p], acc)
        for p in all_partitionings(range(len(acc)))
        if c.count_ok(len(p)) and all(c.size_ok(len(b)) for b in p)
    )


def test_six_agents_near_optimum():
    c = C(2, 3, 2, 3)
    near = 0
    for seed in range(50):
        r = random.Random(seed)
        acc = [r.random() for _ in range(6)]
        res = psopp.run_psopp(None, c, PsoppParams(4, 0, 1 / 3, 1 / 3, 1 / 3, 1.0), acc, random.Random(seed),
                              agents=range(6))
        near += fitness(res, acc) >= 0.95 * _optimum(acc, c)
    assert near >= 45


def test_gbest_history_is_monotone():
    swarm = _swarm(15, C(2, 6, 2, 6), PsoppParams(4, 0, 0.4, 0.3, 0.3, 0.5), 8)
    psopp.run_swarm(swarm, random.Random(8))
    h = swarm.gbest_history
    assert h and all(b >= a for a, b in zip(h, h[1:]))


def test_infeasible_constraints_rejected():
    from sotest.envmodel import ConfigurationError

    with pytest.raises(ConfigurationError):
        psopp.run_psopp(None, C(2, 3, 2, 2), PsoppParams(1, 0, 1, 0, 0, 0.1), [0.5] * 7, random.Random(0),
                        agents=range(7))
    with pytest.raises(ValueError):
        psopp.run_psopp(None, C(1, 2, 1, 2), PsoppParams(1, 0, 1, 0, 0, 0.1), [0.5], random.Random(0))


def test_budget_bounds_iterations():
    clock = SimulatedClock(tick=0.01)
    psopp.run_psopp(None, C(1, 40, 1, 40), PsoppParams(2, 0, 0.5, 0.25, 0.25, 0.2), [0.3] * 40,
                    random.Random(1), clock, agents=range(40))
    assert clock.peek() < 2.0
