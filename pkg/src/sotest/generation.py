"""Random test-suite generation from the model of the system under test.

Sampling is dependency ordered (agent count, then constraints, groups,
profiles, initial structure) and every stage rejection-resamples draws that
would make later stages infeasible.
"""
from __future__ import annotations

import functools
import hashlib
import itertools
import random
from dataclasses import dataclass, field, fields, replace
from typing import Iterator, Mapping, Sequence

from sotest.domain import (
    Agent,
    AgentGroup,
    AgentType,
    PartitioningConstraints,
    SystemStructure,
    TriggerConstraint,
    feasible,
    feasible_counts,
)
from sotest.envmodel import (
    EnvironmentProfile,
    InfluenceFunction,
    random_influence,
    random_profile,
    step_profile,
)

MAX_REJECTIONS = 10_000

SPADA = "spada"
PSOPP = "psopp"
ALGORITHMS = (SPADA, PSOPP)
DESK_THETA = 0.15


class GenerationError(Exception):
    pass


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from any printable parts (independent of PYTHONHASHSEED)."""
    digest = hashlib.sha256(":".join(map(str, parts)).encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def derive_rng(*parts) -> random.Random:
    return random.Random(derive_seed(*parts))


@dataclass(frozen=True)
class ModelOfSuT:
    agents: tuple[int, int] = (2, 1000)
    group_size_min: int = 2
    sequences_per_suite: int = 10
    cases_per_sequence: tuple[int, int] = (50, 1000)
    ep_states: tuple[int, int] = (3, 25)
    max_influence_delta: float = 0.2
    initial_accuracy: tuple[float, float] = (0.0, 1.0)
    # optional pins for directed testing; None means "sample within the full range"
    s_min: int | None = None
    s_max: int | None = None
    n_min: int | None = None
    n_max: int | None = None
    groups: tuple[int, int] | None = None

    def __post_init__(self):
        lo, hi = self.agents
        if not 2 <= lo <= hi:
            raise ValueError(f"bad agent range {self.agents}")
        c_lo, c_hi = self.cases_per_sequence
        if not 0 <= c_lo <= c_hi:
            raise ValueError(f"bad sequence length range {self.cases_per_sequence}")
        e_lo, e_hi = self.ep_states
        if not 1 <= e_lo <= e_hi:
            raise ValueError(f"bad EP state range {self.ep_states}")
        if self.sequences_per_suite < 1:
            raise ValueError("need at least one sequence per suite")

    @classmethod
    def desk(cls, **overrides) -> "ModelOfSuT":
        """Laptop-sized defaults: at most 200 agents, short sequences, one sequence per suite.

        One sequence per suite spreads a fixed sequence budget over more
        system configurations; the stronger influence keeps reorganizations
        frequent at the lower desk trigger threshold (``DESK_THETA``).
        """
        base = dict(agents=(2, 200), cases_per_sequence=(50, 200), sequences_per_suite=1,
                    max_influence_delta=0.5)
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelOfSuT":
        kw = {}
        for f in fields(cls):
            if f.name in d:
                v = d[f.name]
                kw[f.name] = tuple(v) if isinstance(v, list) else v
        return cls(**kw)


@dataclass(frozen=True)
class SpadaParams:
    acquaintances: int
    evaluated: int
    max_integrations: int

    kind = SPADA

    def to_dict(self) -> dict:
        return {"kind": SPADA, "acquaintances": self.acquaintances, "evaluated": self.evaluated,
                "max_integrations": self.max_integrations}


@dataclass(frozen=True)
class SpadaParamRanges:
    acquaintances: tuple[int, int] = (1, 20)
    evaluated: tuple[int, int] = (1, 10)
    max_integrations: tuple[int, int] = (1, 10)


@dataclass(frozen=True)
class PsoppParams:
    particles: int
    start_at_current: int
    c_rdm: float
    c_pbest: float
    c_gbest: float
    max_runtime: float

    kind = PSOPP

    def __post_init__(self):
        if not 0 <= self.start_at_current <= self.particles:
            raise ValueError("start_at_current must lie in [0, particles]")
        if abs(self.c_rdm + self.c_pbest + self.c_gbest - 1.0) > 1e-9:
            raise ValueError("move probabilities must sum to 1")

    def to_dict(self) -> dict:
        return {"kind": PSOPP, "particles": self.particles, "start_at_current": self.start_at_current,
                "c_rdm": self.c_rdm, "c_pbest": self.c_pbest, "c_gbest": self.c_gbest,
                "max_runtime": self.max_runtime}


@dataclass(frozen=True)
class PsoppParamRanges:
    particles: tuple[int, int] = (1, 4)
    max_runtime: tuple[float, float] = (0.1, 1.0)
    probabilities: tuple[float, float, float] | None = None


def params_from_dict(d: Mapping) -> SpadaParams | PsoppParams:
    d = dict(d)
    kind = d.pop("kind")
    return SpadaParams(**d) if kind == SPADA else PsoppParams(**d)


def simplex_point(rng: random.Random) -> tuple[float, float, float]:
    w = [rng.expovariate(1.0) for _ in range(3)]
    total = sum(w)
    a, b = w[0] / total, w[1] / total
    return a, b, 1.0 - a - b


def sample_sout_parameters(algo: str, ranges, rng: random.Random) -> SpadaParams | PsoppParams:
    if algo == SPADA:
        ranges = ranges or SpadaParamRanges()
        return SpadaParams(
            rng.randint(*ranges.acquaintances),
            rng.randint(*ranges.evaluated),
            rng.randint(*ranges.max_integrations),
        )
    if algo == PSOPP:
        ranges = ranges or PsoppParamRanges()
        particles = rng.randint(*ranges.particles)
        start = rng.randint(0, particles)
        probs = ranges.probabilities or simplex_point(rng)
        lo, hi = ranges.max_runtime
        runtime = lo if lo == hi else rng.uniform(lo, hi)
        return PsoppParams(particles, start, *probs, max_runtime=runtime)
    raise ValueError(f"unknown algorithm {algo!r}")


_REJECTION_TRIES = 64


@functools.lru_cache(maxsize=16)
def _composition_rows(k: int, r: int, w: int) -> tuple:
    """Row j holds N(j, t) for t <= r, the number of ways to write t as j parts in [0, w].

    Rows are rescaled independently; sampling only ever compares entries of
    one row, so the scale cancels.
    """
    rows = [tuple([1.0] + [0.0] * r)]
    for _ in range(k):
        prev = rows[-1]
        prefix = list(itertools.accumulate(prev, initial=0.0))
        row = [prefix[t + 1] - prefix[max(0, t - w)] for t in range(r + 1)]
        top = max(row) or 1.0
        rows.append(tuple(v / top for v in row))
    return tuple(rows)


def random_composition(total: int, count: int, lo: int, hi: int, rng: random.Random) -> list[int]:
    """Uniform draw among all size vectors of ``count`` parts in [lo, hi] summing to ``total``."""
    if count < 1 or not count * lo <= total <= count * hi:
        raise GenerationError(f"cannot split {total} items into {count} blocks of {lo}..{hi}")
    r, w = total - count * lo, hi - lo
    # stars and bars is uniform over unbounded compositions; reject overflows
    for _ in range(_REJECTION_TRIES):
        cuts = sorted(rng.sample(range(r + count - 1), count - 1))
        bounds = [-1] + cuts + [r + count - 1]
        extra = [b - a - 1 for a, b in zip(bounds, bounds[1:])]
        if max(extra) <= w:
            return [lo + x for x in extra]
    rows = _composition_rows(count, r, w)
    sizes = []
    for j in range(count, 0, -1):
        prev = rows[j - 1]
        xs = range(max(0, r - (j - 1) * w), min(w, r) + 1)
        weights = [prev[r - x] for x in xs]
        u = rng.random() * sum(weights)
        pick = xs[-1]
        for x, wt in zip(xs, weights):
            u -= wt
            if u < 0:
                pick = x
                break
        sizes.append(lo + pick)
        r -= pick
    return sizes


def assemble(items: Sequence, count: int, s_min: int, s_max: int, rng: random.Random) -> list[frozenset]:
    """Deal shuffled ``items`` into ``count`` blocks with sizes in [s_min, s_max].

    The size vector is uniform over all admissible ones, so lopsided
    structures are as likely as balanced ones.
    """
    items = list(items)
    sizes = random_composition(len(items), count, s_min, s_max, rng)
    rng.shuffle(items)
    out, pos = [], 0
    for s in sizes:
        out.append(frozenset(items[pos:pos + s]))
        pos += s
    return out


def random_partitioning(items: Sequence, c: PartitioningConstraints, rng: random.Random) -> list[frozenset]:
    counts = feasible_counts(len(items), c)
    if not counts:
        raise GenerationError(f"{len(items)} agents cannot satisfy {c}")
    return assemble(items, rng.choice(counts), c.s_min, c.s_max, rng)


@dataclass
class SystemConfiguration:
    agents: list[Agent]
    groups: list[AgentGroup]
    structure: SystemStructure
    algorithm: str
    params: SpadaParams | PsoppParams
    trigger: TriggerConstraint
    constraints: PartitioningConstraints
    seed: int

    @property
    def universe(self) -> frozenset:
        return frozenset(a.id for a in self.agents)

    def accuracies(self) -> list[float]:
        acc = [0.0] * len(self.agents)
        for a in self.agents:
            acc[a.id] = a.prediction_accuracy
        return acc

    def to_dict(self) -> dict:
        return {
            "agents": [[a.id, a.agent_type.value, a.group_id, a.prediction_accuracy] for a in self.agents],
            "groups": [
                {
                    "id": g.id,
                    "members": sorted(g.member_ids),
                    "profile": g.profile.to_dict(),
                    "influence": g.influence.to_dict(),
                }
                for g in self.groups
            ],
            "structure": self.structure.partitioning().to_lists(),
            "algorithm": self.algorithm,
            "params": self.params.to_dict(),
            "theta": self.trigger.dissimilarity_threshold,
            "constraints": [self.constraints.s_min, self.constraints.s_max,
                            self.constraints.n_min, self.constraints.n_max],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SystemConfiguration":
        return cls(
            agents=[Agent(i, AgentType(t), g, acc) for i, t, g, acc in d["agents"]],
            groups=[
                AgentGroup(
                    g["id"],
                    frozenset(g["members"]),
                    EnvironmentProfile.from_dict(g["profile"]),
                    InfluenceFunction.from_dict(g["influence"]),
                )
                for g in d["groups"]
            ],
            structure=SystemStructure.from_partitioning(d["structure"]),
            algorithm=d["algorithm"],
            params=params_from_dict(d["params"]),
            trigger=TriggerConstraint(d["theta"]),
            constraints=PartitioningConstraints(*d["constraints"]),
            seed=d["seed"],
        )


def _sample_constraints(n: int, model: ModelOfSuT, rng: random.Random) -> PartitioningConstraints:
    n_hi = max(1, n // 2)
    for _ in range(MAX_REJECTIONS):
        s_min, s_max = sorted((rng.randint(2, n), rng.randint(2, n)))
        n_min, n_max = sorted((rng.randint(1, n_hi), rng.randint(1, n_hi)))
        if model.s_min is not None:
            s_min = model.s_min
        if model.s_max is not None:
            s_max = model.s_max
        if model.n_min is not None:
            n_min = model.n_min
        if model.n_max is not None:
            n_max = model.n_max
        if s_min > s_max or n_min > n_max:
            continue
        c = PartitioningConstraints(s_min, s_max, n_min, n_max)
        if feasible(n, c):
            return c
    raise GenerationError(f"no feasible partitioning constraints for {n} agents under {model}")


def sample_system_configuration(
    model: ModelOfSuT,
    rng: random.Random,
    algorithm: str = PSOPP,
    *,
    fixed_count: bool = False,
    theta: float = 0.3,
    spada_ranges: SpadaParamRanges | None = None,
    psopp_ranges: PsoppParamRanges | None = None,
) -> SystemConfiguration:
    seed = rng.getrandbits(63)
    for _ in range(MAX_REJECTIONS):
        n = rng.randint(*model.agents)
        try:
            constraints = _sample_constraints(n, model, rng)
        except GenerationError:
            continue
        break
    else:
        raise GenerationError(f"model {model} admits no feasible configuration")

    ids = list(range(n))
    types = [rng.choice(list(AgentType)) for _ in ids]
    g_lo, g_hi = model.groups or (1, max(1, n // model.group_size_min))
    g_hi = min(g_hi, n // model.group_size_min)
    if g_lo > g_hi:
        raise GenerationError(f"cannot form {g_lo} groups of >= {model.group_size_min} from {n} agents")
    n_groups = rng.randint(g_lo, g_hi)
    blocks = assemble(ids, n_groups, model.group_size_min, n, rng)
    blocks.sort(key=min)

    groups, group_of = [], {}
    for gid, members in enumerate(blocks):
        profile = random_profile(rng.randint(*model.ep_states), rng, prefix=f"g{gid}s")
        influence = random_influence(profile.states, [types[a] for a in members], rng, model.max_influence_delta)
        groups.append(AgentGroup(gid, members, profile, influence))
        for a in members:
            group_of[a] = gid

    lo, hi = model.initial_accuracy
    agents = [Agent(a, types[a], group_of[a], round(rng.uniform(lo, hi), 6)) for a in ids]
    parts = random_partitioning(ids, constraints, rng)
    if fixed_count:
        # fewest partitions with room for an exchange: largest parts, so size-gated faults stay reachable.
        # The unpinned draw above still happens so the parameters match the unpinned configuration.
        counts = feasible_counts(n, constraints)
        k = min((x for x in counts if x >= 2), default=counts[0])
        constraints = replace(constraints, n_min=k, n_max=k)
        parts = random_partitioning(ids, constraints, derive_rng(seed, "structure"))
    structure = SystemStructure.from_partitioning(sorted(parts, key=min))
    ranges = spada_ranges if algorithm == SPADA else psopp_ranges
    params = sample_sout_parameters(algorithm, ranges, rng)
    return SystemConfiguration(
        agents, groups, structure, algorithm, params, TriggerConstraint(theta), constraints, seed
    )


@dataclass(frozen=True)
class TestCase:
    step: int
    states: tuple[int, ...]

    __test__ = False


@dataclass(frozen=True)
class TestSequence:
    index: int
    seed: int
    cases: tuple[TestCase, ...]

    __test__ = False

    def __len__(self):
        return len(self.cases)

    def to_dict(self) -> dict:
        return {"index": self.index, "seed": self.seed, "cases": [list(c.states) for c in self.cases]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "TestSequence":
        return cls(d["index"], d["seed"], tuple(TestCase(i, tuple(s)) for i, s in enumerate(d["cases"])))


@dataclass
class TestSuite:
    id: int
    config: SystemConfiguration
    sequences: list[TestSequence]
    fault: str | None = None

    __test__ = False

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "fault": self.fault,
            "config": self.config.to_dict(),
            "sequences": [s.to_dict() for s in self.sequences],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TestSuite":
        return cls(
            d["id"],
            SystemConfiguration.from_dict(d["config"]),
            [TestSequence.from_dict(s) for s in d["sequences"]],
            d.get("fault"),
        )


def generate_test_sequence(config: SystemConfiguration, length: int, rng: random.Random,
                           index: int = 0, seed: int = 0) -> TestSequence:
    current = [g.profile.initial_state for g in config.groups]
    profiles = [g.profile for g in config.groups]
    cases = []
    for step in range(length):
        for k, ep in enumerate(profiles):
            current[k] = step_profile(ep, current[k], rng)
        cases.append(TestCase(step, tuple(current)))
    return TestSequence(index, seed, tuple(cases))


@dataclass(frozen=True)
class SuiteSpec:
    """Everything besides the seed that determines a generated suite."""

    model: ModelOfSuT = field(default_factory=ModelOfSuT.desk)
    algorithm: str = PSOPP
    fault: str | None = None
    fixed_count: bool = False
    theta: float = 0.3
    sequences: int | None = None
    spada_ranges: SpadaParamRanges | None = None
    psopp_ranges: PsoppParamRanges | None = None


def make_suite(spec: SuiteSpec, seed: int, suite_id: int) -> TestSuite:
    rng = derive_rng(seed, "suite", suite_id)
    config = sample_system_configuration(
        spec.model, rng, spec.algorithm, fixed_count=spec.fixed_count, theta=spec.theta,
        spada_ranges=spec.spada_ranges, psopp_ranges=spec.psopp_ranges,
    )
    m = spec.sequences or spec.model.sequences_per_suite
    sequences = []
    for j in range(m):
        seq_seed = derive_seed(seed, "suite", suite_id, "sequence", j)
        seq_rng = random.Random(seq_seed)
        length = seq_rng.randint(*spec.model.cases_per_sequence)
        sequences.append(generate_test_sequence(config, length, seq_rng, index=j, seed=seq_seed))
    return TestSuite(suite_id, config, sequences, spec.fault)


def suite_stream(mode: str, spec: SuiteSpec, seed: int, count: int | None = None) -> list[TestSuite] | Iterator[TestSuite]:
    """Offline mode returns a finished list; online mode yields suites lazily (endless when ``count`` is None)."""
    if mode == "offline":
        if count is None:
            raise ValueError("offline mode needs a suite count")
        return [make_suite(spec, seed, i) for i in range(count)]
    if mode == "online":
        ids = itertools.count() if count is None else range(count)
        return (make_suite(spec, seed, i) for i in ids)
    raise ValueError(f"unknown mode {mode!r}")

