"""Environment profiles (first-order Markov chains) and influence tables."""
from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from sotest import kernels
from sotest.domain import Agent, AgentType, Verdict, Violation, ViolationKind

ROW_TOL = 1e-9


class ConfigurationError(Exception):
    """The model of the system under test is incomplete or contradictory."""


@dataclass(frozen=True)
class EnvironmentProfile:
    states: tuple[str, ...]
    transitions: tuple[tuple[float, ...], ...]
    initial_state: int = 0

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "transitions", tuple(tuple(float(x) for x in row) for row in self.transitions))

    def index(self, label: str) -> int:
        return self.states.index(label)

    def positive_transitions(self) -> list[tuple[int, int]]:
        return [(i, j) for i, row in enumerate(self.transitions) for j, p in enumerate(row) if p > 0.0]

    def to_dict(self) -> dict:
        return {
            "states": list(self.states),
            "initial_state": self.initial_state,
            "transitions": [list(r) for r in self.transitions],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EnvironmentProfile":
        return cls(tuple(d["states"]), tuple(tuple(r) for r in d["transitions"]), int(d.get("initial_state", 0)))


def validate_profile(ep: EnvironmentProfile) -> Verdict:
    problems = []
    n = len(ep.states)
    if n == 0:
        problems.append(("empty",))
    if not 0 <= ep.initial_state < max(n, 1):
        problems.append(("initial_state", ep.initial_state))
    if len(ep.transitions) != n:
        problems.append(("rows", len(ep.transitions)))
    for i, row in enumerate(ep.transitions):
        if len(row) != n:
            problems.append(("row_length", i, len(row)))
            continue
        if any(not 0.0 <= p <= 1.0 for p in row):
            problems.append(("entry_range", i))
        total = sum(row)
        if abs(total - 1.0) > ROW_TOL:
            problems.append(("row_sum", i, round(total, 12)))
    return Verdict(tuple(Violation(ViolationKind.MALFORMED_PROFILE, p) for p in problems))


def step_profile(ep: EnvironmentProfile, current: int, rng: random.Random) -> int:
    """Draw the successor of ``current``; consumes exactly one ``rng.random()``."""
    return kernels.sample_row(ep.transitions[current], rng.random())


@dataclass(frozen=True)
class InfluenceFunction:
    """Deterministic accuracy deltas keyed by (agent type, environment state label)."""

    table: Mapping = field(default_factory=dict)

    def delta(self, agent_type: AgentType, state: str) -> float:
        try:
            return self.table[(AgentType(agent_type), state)]
        except KeyError:
            raise ConfigurationError(
                f"influence table has no entry for ({AgentType(agent_type).value}, {state!r})"
            ) from None

    def to_dict(self) -> dict:
        out: dict = {}
        for (t, s), d in sorted(self.table.items(), key=lambda kv: (kv[0][0].value, kv[0][1])):
            out.setdefault(t.value, {})[s] = d
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "InfluenceFunction":
        return cls({(AgentType(t), s): float(v) for t, row in d.items() for s, v in row.items()})


def clamp01(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


def apply_influence(f: InfluenceFunction, agent: Agent, new_env_state: str) -> Agent:
    delta = f.delta(agent.agent_type, new_env_state)
    if delta == 0.0:
        return agent
    return replace(agent, prediction_accuracy=clamp01(agent.prediction_accuracy + delta))


@dataclass
class EnvTrace:
    visited_states: Counter = field(default_factory=Counter)
    taken_transitions: Counter = field(default_factory=Counter)

    def visit(self, state: int):
        self.visited_states[state] += 1

    def take(self, src: int, dst: int):
        self.taken_transitions[(src, dst)] += 1
        self.visited_states[dst] += 1

    def to_dict(self) -> dict:
        return {
            "visited": sorted([s, k] for s, k in self.visited_states.items()),
            "transitions": sorted([a, b, k] for (a, b), k in self.taken_transitions.items()),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "EnvTrace":
        return cls(
            Counter({s: k for s, k in d["visited"]}),
            Counter({(a, b): k for a, b, k in d["transitions"]}),
        )


def coverage(ep: EnvironmentProfile, trace: EnvTrace) -> tuple[float, float]:
    n_states = len(ep.states)
    positive = ep.positive_transitions()
    states = len(set(trace.visited_states)) / n_states if n_states else 0.0
    trans = len(set(trace.taken_transitions) & set(positive)) / len(positive) if positive else 0.0
    return states, trans


def random_profile(n_states: int, rng: random.Random, prefix: str = "s") -> EnvironmentProfile:
    rows = []
    for _ in range(n_states):
        w = [rng.expovariate(1.0) for _ in range(n_states)]
        total = sum(w)
        row = [x / total for x in w]
        # put rounding residue on the largest entry so the row sums to 1 within 1e-12
        k = max(range(n_states), key=row.__getitem__)
        row[k] += 1.0 - sum(row)
        rows.append(tuple(row))
    states = tuple(f"{prefix}{i}" for i in range(n_states))
    return EnvironmentProfile(states, tuple(rows), rng.randrange(n_states))


def random_influence(
    states: Sequence[str],
    agent_types: Sequence[AgentType],
    rng: random.Random,
    max_delta: float = 0.2,
) -> InfluenceFunction:
    table = {}
    for t in sorted(set(agent_types), key=lambda a: a.value):
        for s in states:
            table[(t, s)] = round(rng.uniform(-max_delta, max_delta), 6)
    return InfluenceFunction(table)


WEATHER_STATES = ("rainy", "sunny", "cloudy")


def weather_profile() -> EnvironmentProfile:
    """Three-state weather chain used throughout the docs and tests."""
    return EnvironmentProfile(
        WEATHER_STATES,
        (
            (0.6, 0.2, 0.2),  # rainy
            (0.5, 0.3, 0.2),  # sunny
            (0.5, 0.1, 0.4),  # cloudy
        ),
        initial_state=1,
    )
