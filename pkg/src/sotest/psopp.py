"""Particle swarm optimizer for the constrained partitioning problem.

Positions are partitionings and particles move with three set operations
(join, split, exchange), either at random or towards a better solution.
Every operator refuses moves that would break the partitioning constraints,
so a swarm started on valid positions only ever visits valid positions.

Internally a position is a tuple of frozensets; :class:`Partitioning` is
only built at the public boundary.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from sotest import kernels
from sotest.clock import SimulatedClock
from sotest.domain import Partitioning, PartitioningConstraints, feasible
from sotest.envmodel import ConfigurationError
from sotest.generation import PsoppParams, random_partitioning

MAX_MOVE_ATTEMPTS = 20
APPROACH_STEPS = 5
STAGNATION_ROUNDS = 200
EPS = 1e-12

RANDOM_SPLIT = "random_split"
RANDOM_JOIN = "random_join"
RANDOM_EXCHANGE = "random_exchange"
APPROACH_SPLIT = "approach_split"
APPROACH_JOIN = "approach_join"
APPROACH_EXCHANGE = "approach_exchange"

Parts = tuple  # tuple[frozenset, ...]
# hook(kind, info, result_parts, rng) -> parts; ``info`` names the sets involved
MoveHook = Callable[[str, dict, Parts, random.Random], Parts]


class OperatorInapplicable(Exception):
    """The requested move would violate the constraints; callers re-draw."""


def _parts(p) -> Parts:
    if isinstance(p, Partitioning):
        return tuple(p.member_sets())
    return tuple(frozenset(x) for x in p)


def _locate(parts: Parts, target) -> int:
    if isinstance(target, int):
        if not 0 <= target < len(parts):
            raise OperatorInapplicable(f"no partition #{target}")
        return target
    target = frozenset(target)
    try:
        return parts.index(target)
    except ValueError:
        raise OperatorInapplicable(f"{sorted(target)} is not a partition") from None


def _replace(parts: Parts, drop: Iterable[int], add: Iterable[frozenset]) -> Parts:
    drop = set(drop)
    return tuple(p for i, p in enumerate(parts) if i not in drop) + tuple(add)


def split_parts(parts: Parts, i: int, left: frozenset, c: PartitioningConstraints):
    k = parts[i]
    left = frozenset(left) & k
    right = k - left
    if not left or not right:
        raise OperatorInapplicable("split halves must be non-empty")
    if not (c.size_ok(len(left)) and c.size_ok(len(right)) and len(parts) + 1 <= c.n_max):
        raise OperatorInapplicable("split violates constraints")
    return _replace(parts, [i], [left, right]), (k, left, right)


def join_parts(parts: Parts, i: int, j: int, c: PartitioningConstraints):
    if i == j:
        raise OperatorInapplicable("join needs two distinct partitions")
    a, b = parts[i], parts[j]
    m = a | b
    if len(m) > c.s_max or len(parts) - 1 < c.n_min:
        raise OperatorInapplicable("join violates constraints")
    return _replace(parts, [i, j], [m]), (a, b, m)


def exchange_parts(parts: Parts, i: int, j: int, move_ab, move_ba, c: PartitioningConstraints):
    if i == j:
        raise OperatorInapplicable("exchange needs two distinct partitions")
    a, b = parts[i], parts[j]
    move_ab = frozenset(move_ab) & a
    move_ba = frozenset(move_ba) & b
    if not move_ab and not move_ba:
        raise OperatorInapplicable("nothing to exchange")
    new_a = (a - move_ab) | move_ba
    new_b = (b - move_ba) | move_ab
    if not new_a or not new_b or not (c.size_ok(len(new_a)) and c.size_ok(len(new_b))):
        raise OperatorInapplicable("exchange violates constraints")
    return _replace(parts, [i, j], [new_a, new_b]), (a, b, new_a, new_b)


def split(p: Partitioning, target, assignment, c: PartitioningConstraints) -> Partitioning:
    """Replace ``target`` by ``assignment`` and its complement within ``target``."""
    parts = _parts(p)
    new, _ = split_parts(parts, _locate(parts, target), frozenset(assignment), c)
    return Partitioning.of(new)


def join(p: Partitioning, a, b, c: PartitioningConstraints) -> Partitioning:
    parts = _parts(p)
    new, _ = join_parts(parts, _locate(parts, a), _locate(parts, b), c)
    return Partitioning.of(new)


def exchange(p: Partitioning, a, b, move_ab, move_ba, c: PartitioningConstraints) -> Partitioning:
    parts = _parts(p)
    new, _ = exchange_parts(parts, _locate(parts, a), _locate(parts, b), move_ab, move_ba, c)
    return Partitioning.of(new)


def fitness(p, accuracies) -> float:
    """1 / (1 + population std of partition mean accuracies); 1.0 means perfectly homogeneous."""
    return kernels.homogeneity_fitness(_parts(p), kernels.as_vector(accuracies))


# -- random moves ---------------------------------------------------------


def _sorted(s) -> list:
    return sorted(s)


def random_split(parts: Parts, c: PartitioningConstraints, rng: random.Random):
    if len(parts) >= c.n_max:
        return None
    candidates = [i for i, k in enumerate(parts) if len(k) >= 2 * c.s_min]
    if not candidates:
        return None
    i = rng.choice(candidates)
    k = parts[i]
    lo, hi = max(c.s_min, len(k) - c.s_max), min(c.s_max, len(k) - c.s_min)
    if lo > hi:
        return None
    left = frozenset(rng.sample(_sorted(k), rng.randint(lo, hi)))
    try:
        return split_parts(parts, i, left, c)
    except OperatorInapplicable:
        return None


def random_join(parts: Parts, c: PartitioningConstraints, rng: random.Random):
    if len(parts) - 1 < c.n_min or len(parts) < 2:
        return None
    smallest = min(len(k) for k in parts)
    firsts = [i for i, k in enumerate(parts) if len(k) + smallest <= c.s_max]
    while firsts:
        i = firsts.pop(rng.randrange(len(firsts)))
        room = c.s_max - len(parts[i])
        others = [j for j, k in enumerate(parts) if j != i and len(k) <= room]
        if others:
            try:
                return join_parts(parts, i, rng.choice(others), c)
            except OperatorInapplicable:
                continue
    return None


def random_exchange(parts: Parts, c: PartitioningConstraints, rng: random.Random):
    if len(parts) < 2:
        return None
    i, j = rng.sample(range(len(parts)), 2)
    a, b = parts[i], parts[j]
    options = []
    if len(a) - 1 >= c.s_min and len(b) + 1 <= c.s_max:
        options.append("a_to_b")
    if len(b) - 1 >= c.s_min and len(a) + 1 <= c.s_max:
        options.append("b_to_a")
    if rng.random() < 0.5 or not options:
        move_ab, move_ba = [rng.choice(_sorted(a))], [rng.choice(_sorted(b))]
    elif rng.choice(options) == "a_to_b":
        move_ab, move_ba = [rng.choice(_sorted(a))], []
    else:
        move_ab, move_ba = [], [rng.choice(_sorted(b))]
    try:
        return exchange_parts(parts, i, j, move_ab, move_ba, c)
    except OperatorInapplicable:
        return None


def applicable_random_kinds(parts: Parts, c: PartitioningConstraints) -> list[str]:
    kinds = []
    if len(parts) < c.n_max and any(len(k) >= 2 * c.s_min for k in parts):
        kinds.append(RANDOM_SPLIT)
    if len(parts) >= 2 and len(parts) - 1 >= c.n_min:
        a, b = sorted(len(k) for k in parts)[:2]
        if a + b <= c.s_max:
            kinds.append(RANDOM_JOIN)
    if len(parts) >= 2:
        kinds.append(RANDOM_EXCHANGE)
    return kinds


_RANDOM_OPS = {RANDOM_SPLIT: random_split, RANDOM_JOIN: random_join, RANDOM_EXCHANGE: random_exchange}


# -- approach moves -------------------------------------------------------


def _best_exchange(h_size, g_size, extras, needed, c):
    """Largest (a, b): send ``a`` extras H->G and take ``b`` needed G->H within bounds."""
    best = None
    for d in range(-extras, needed + 1):
        if not (c.size_ok(h_size + d) and c.size_ok(g_size - d)):
            continue
        a = min(extras, needed - d)
        if a < max(0, -d):
            continue
        b = a + d
        if a + b >= 1 and (best is None or a + b > best[0] + best[1]):
            best = (a, b)
    return best


def _approach_step(parts: Parts, q: frozenset, c: PartitioningConstraints, rng: random.Random):
    h = max(range(len(parts)), key=lambda i: (len(parts[i] & q), -i))
    hset = parts[h]
    extras = hset - q
    needed = q - hset
    if not needed:
        if extras:
            try:
                return APPROACH_SPLIT, split_parts(parts, h, hset & q, c)
            except OperatorInapplicable:
                pass
    else:
        inside = [j for j, g in enumerate(parts) if j != h and g <= q]
        for j in sorted(inside, key=lambda j: (-len(parts[j]), j)):
            try:
                return APPROACH_JOIN, join_parts(parts, h, j, c)
            except OperatorInapplicable:
                continue
    # exchange with the partition holding most of what is still needed
    # (or, when nothing is needed, any partition that can absorb extras)
    order = sorted(
        (j for j in range(len(parts)) if j != h),
        key=lambda j: (-len(parts[j] & needed), j),
    )
    for j in order:
        g = parts[j]
        gn = g & needed
        if not gn and not extras:
            continue
        best = _best_exchange(len(hset), len(g), len(extras), len(gn), c)
        if best is None:
            continue
        a, b = best
        move_ab = rng.sample(_sorted(extras), a) if a else []
        move_ba = rng.sample(_sorted(gn), b) if b else []
        try:
            return APPROACH_EXCHANGE, exchange_parts(parts, h, j, move_ab, move_ba, c)
        except OperatorInapplicable:
            continue
    return None


def approach(parts: Parts, target: Parts, c: PartitioningConstraints, rng: random.Random,
             hook: MoveHook | None = None):
    """Move ``parts`` towards ``target`` by rebuilding one of its partitions.

    Returns the new position, ``parts`` itself when already at the target,
    or None when no constraint-respecting step exists.
    """
    current = set(parts)
    missing = sorted((q for q in set(target) if q not in current), key=lambda s: (min(s), len(s)) if s else (-1, 0))
    missing = [q for q in missing if q]
    if not missing:
        return parts
    q = rng.choice(missing)
    moved = False
    for _ in range(APPROACH_STEPS):
        if q in parts:
            break
        step = _approach_step(parts, q, c, rng)
        if step is None:
            break
        kind, (new, involved) = step
        if hook is not None:
            new = hook(kind, _info(kind, involved), new, rng)
        parts = new
        moved = True
    return parts if moved else None


def _info(kind: str, involved: tuple) -> dict:
    if kind.endswith("split"):
        k, l, m = involved
        return {"K": k, "L": l, "M": m}
    if kind.endswith("join"):
        k, l, m = involved
        return {"K": k, "L": l, "M": m}
    k, l, m, n = involved
    return {"K": k, "L": l, "M": m, "N": n}


# -- swarm ----------------------------------------------------------------


@dataclass
class Particle:
    id: int
    position: Parts
    pbest: Parts | None = None
    pbest_fitness: float = -math.inf
    neighborhood: tuple[int, ...] = ()
    nbest: Parts | None = None
    nbest_fitness: float = -math.inf
    fitness: float = -math.inf
    done: bool = False


@dataclass
class SwarmState:
    particles: list[Particle]
    constraints: PartitioningConstraints
    params: PsoppParams
    accuracies: object
    clock: object
    start: float
    gbest: Parts | None = None
    gbest_fitness: float = -math.inf
    iteration: int = 0
    last_improvement: int = 0
    stagnation: int = STAGNATION_ROUNDS
    hook: MoveHook | None = None
    gbest_history: list[float] = field(default_factory=list)
    pbest_record: float = -math.inf

    def offer_gbest(self, parts: Parts, f: float):
        if f > self.gbest_fitness + EPS or self.gbest is None:
            self.gbest, self.gbest_fitness = parts, f
            self.last_improvement = self.iteration
            self.gbest_history.append(f)

    def should_stop(self) -> bool:
        if self.clock.now() - self.start >= self.params.max_runtime:
            return True
        return self.iteration - self.last_improvement >= self.stagnation


def _random_move(parts: Parts, swarm: SwarmState, rng: random.Random):
    kinds = applicable_random_kinds(parts, swarm.constraints)
    while kinds:
        kind = kinds.pop(rng.randrange(len(kinds)))
        res = _RANDOM_OPS[kind](parts, swarm.constraints, rng)
        if res is not None:
            new, involved = res
            if swarm.hook is not None:
                new = swarm.hook(kind, _info(kind, involved), new, rng)
            return kind, new
    return None


def iterate_particle(particle: Particle, swarm: SwarmState, rng: random.Random) -> bool:
    """One particle iteration; returns False once the termination criterion holds."""
    # (1) evaluate
    f = kernels.homogeneity_fitness(particle.position, swarm.accuracies)
    particle.fitness = f
    # (2) personal best, notifying every particle that has this one as a neighbour
    if f > particle.pbest_fitness + EPS or particle.pbest is None:
        particle.pbest, particle.pbest_fitness = particle.position, f
        swarm.pbest_record = max(swarm.pbest_record, f)
        for other in swarm.particles:
            if particle.id in other.neighborhood and f > other.nbest_fitness + EPS:
                other.nbest, other.nbest_fitness = particle.position, f
        swarm.offer_gbest(particle.position, f)
    # (3) neighbourhood best includes the particle's own best
    if particle.pbest_fitness > particle.nbest_fitness + EPS or particle.nbest is None:
        particle.nbest, particle.nbest_fitness = particle.pbest, particle.pbest_fitness
    # (4) stop?
    if swarm.should_stop():
        particle.done = True
        return False
    # (5) pick a direction, (6) move; inapplicable moves are re-drawn
    p = swarm.params
    for _ in range(MAX_MOVE_ATTEMPTS):
        u = rng.random()
        if u < p.c_rdm:
            res = _random_move(particle.position, swarm, rng)
            new = None if res is None else res[1]
        else:
            target = particle.pbest if u < p.c_rdm + p.c_pbest else particle.nbest
            new = approach(particle.position, target, swarm.constraints, rng, swarm.hook)
        if new is not None:
            particle.position = new
            break
    return True


def init_swarm(agents: Sequence, initial: Parts | None, c: PartitioningConstraints, params: PsoppParams,
               accuracies, rng: random.Random, clock, hook: MoveHook | None = None,
               stagnation: int = STAGNATION_ROUNDS) -> SwarmState:
    acc = kernels.as_vector(accuracies)
    initial_ok = initial is not None and _satisfies(initial, agents, c)
    particles = []
    for pid in range(params.particles):
        if initial_ok and pid < params.start_at_current:
            pos = tuple(initial)
        else:
            pos = tuple(sorted(random_partitioning(agents, c, rng), key=min))
        particles.append(Particle(pid, pos))
    ids = tuple(range(params.particles))
    for part in particles:
        part.neighborhood = tuple(i for i in ids if i != part.id)
    return SwarmState(particles, c, params, acc, clock, clock.now(), hook=hook, stagnation=stagnation)


def _satisfies(parts: Parts, agents, c: PartitioningConstraints) -> bool:
    if not c.count_ok(len(parts)) or not all(c.size_ok(len(k)) for k in parts):
        return False
    total = sum(len(k) for k in parts)
    return total == len(agents) and set().union(*parts) == set(agents)


def run_swarm(swarm: SwarmState, rng: random.Random) -> Parts:
    active = list(swarm.particles)
    while active:
        still = []
        for particle in active:
            if iterate_particle(particle, swarm, rng):
                still.append(particle)
            else:
                # the criterion is global, so one stop ends the whole swarm
                for other in active:
                    other.done = True
                still = []
                break
        active = still
        swarm.iteration += 1
    return swarm.gbest


def run_psopp(initial: Partitioning | None, c: PartitioningConstraints, params: PsoppParams, accuracies,
              rng: random.Random, clock=None, *, agents: Sequence | None = None,
              hook: MoveHook | None = None, stagnation: int = STAGNATION_ROUNDS) -> Partitioning:
    swarm = prepare_psopp(initial, c, params, accuracies, rng, clock, agents=agents, hook=hook,
                          stagnation=stagnation)
    return Partitioning.of(run_swarm(swarm, rng))


def prepare_psopp(initial: Partitioning | None, c: PartitioningConstraints, params: PsoppParams, accuracies,
                  rng: random.Random, clock=None, *, agents: Sequence | None = None,
                  hook: MoveHook | None = None, stagnation: int = STAGNATION_ROUNDS) -> SwarmState:
    init_parts = None if initial is None else _parts(initial)
    if agents is None:
        if init_parts is None:
            raise ValueError("need either an initial partitioning or the agent list")
        agents = sorted(set().union(*init_parts))
    agents = sorted(agents)
    if not feasible(len(agents), c):
        raise ConfigurationError(f"{len(agents)} agents cannot satisfy {c}")
    if init_parts is not None:
        init_parts = tuple(sorted(init_parts, key=min))
    return init_swarm(agents, init_parts, c, params, accuracies, rng, clock or SimulatedClock(), hook, stagnation)
