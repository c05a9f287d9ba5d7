"""Agents, partitionings, system structures and the constraints checked on them.

Partitionings are plain values.  An invalid partitioning (a missing agent, an
agent listed twice) is representable on purpose: the oracle has to be able to
inspect whatever a faulty algorithm hands back.
"""
from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from sotest import kernels


class AgentType(str, enum.Enum):
    SOLAR = "solar"
    WIND = "wind"
    BIOGAS = "biogas"
    HYDRO = "hydro"


class Outcome(str, enum.Enum):
    PASSED = "passed"
    FAILED = "failed"


class ViolationKind(str, enum.Enum):
    MISSING_AGENT = "missing_agent"
    DUPLICATE_AGENT = "duplicate_agent"
    FOREIGN_AGENT = "foreign_agent"
    SIZE_BOUND = "size_bound"
    COUNT_BOUND = "count_bound"
    SMOKE = "smoke"
    MALFORMED_PROFILE = "malformed_profile"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    subjects: tuple = ()
    view: str | None = None

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "subjects": list(self.subjects), "view": self.view}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Violation":
        return cls(ViolationKind(d["kind"]), tuple(d["subjects"]), d.get("view"))


@dataclass(frozen=True)
class Verdict:
    violations: tuple[Violation, ...] = ()

    @property
    def outcome(self) -> Outcome:
        return Outcome.FAILED if self.violations else Outcome.PASSED

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def failed(self) -> bool:
        return bool(self.violations)

    def kinds(self) -> set[ViolationKind]:
        return {v.kind for v in self.violations}

    def __add__(self, other: "Verdict") -> "Verdict":
        return Verdict(self.violations + other.violations)

    def with_view(self, view: str) -> "Verdict":
        return Verdict(tuple(Violation(v.kind, v.subjects, view) for v in self.violations))

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome.value,
            "violations": [v.to_dict() for v in self.violations],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Verdict":
        return cls(tuple(Violation.from_dict(v) for v in d["violations"]))


PASSED = Verdict()


@dataclass
class Agent:
    id: int
    agent_type: AgentType
    group_id: int
    prediction_accuracy: float

    def __post_init__(self):
        if not 0.0 <= self.prediction_accuracy <= 1.0:
            raise ValueError(f"prediction accuracy {self.prediction_accuracy} outside [0, 1]")


@dataclass(frozen=True)
class Partition:
    members: frozenset
    leader_id: int | None = None

    def __post_init__(self):
        if not isinstance(self.members, frozenset):
            object.__setattr__(self, "members", frozenset(self.members))
        if self.leader_id is not None and self.leader_id not in self.members:
            raise ValueError(f"leader {self.leader_id} is not a member")

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, item):
        return item in self.members


def _order_key(members: frozenset):
    return (min(members), len(members), tuple(sorted(members))) if members else (float("inf"), 0, ())


@dataclass(frozen=True)
class Partitioning:
    """An ordered collection of partitions, kept sorted by smallest member id.

    Duplicates (whole partitions or single agents) are preserved so that
    faulty solutions survive until the oracle looks at them.
    """

    partitions: tuple[Partition, ...] = ()

    def __post_init__(self):
        parts = tuple(p if isinstance(p, Partition) else Partition(frozenset(p)) for p in self.partitions)
        parts = tuple(sorted(parts, key=lambda p: _order_key(p.members)))
        object.__setattr__(self, "partitions", parts)

    @classmethod
    def of(cls, sets: Iterable[Iterable]) -> "Partitioning":
        return cls(tuple(Partition(frozenset(s)) for s in sets))

    def __len__(self):
        return len(self.partitions)

    def __iter__(self):
        return iter(self.partitions)

    def member_sets(self) -> list[frozenset]:
        return [p.members for p in self.partitions]

    def agents(self) -> set:
        return set().union(*self.member_sets()) if self.partitions else set()

    def as_sets(self) -> frozenset:
        """Order- and leader-free view, for comparing valid partitionings."""
        return frozenset(self.member_sets())

    def sizes(self) -> list[int]:
        return [len(p) for p in self.partitions]

    def to_lists(self) -> list[list]:
        return [sorted(p.members) for p in self.partitions]


@dataclass(frozen=True)
class PartitioningConstraints:
    s_min: int
    s_max: int
    n_min: int
    n_max: int

    def __post_init__(self):
        if not (1 <= self.s_min <= self.s_max and 1 <= self.n_min <= self.n_max):
            raise ValueError(f"inconsistent partitioning constraints {self}")

    def size_ok(self, size: int) -> bool:
        return self.s_min <= size <= self.s_max

    def count_ok(self, count: int) -> bool:
        return self.n_min <= count <= self.n_max


@dataclass(frozen=True)
class TriggerConstraint:
    dissimilarity_threshold: float = 0.3

    def __post_init__(self):
        if self.dissimilarity_threshold < 0:
            raise ValueError("dissimilarity threshold must be non-negative")


@dataclass
class AgentGroup:
    id: int
    member_ids: frozenset
    profile: object = None
    influence: object = None


@dataclass
class SystemStructure:
    """Live AVPP layout: ``assignment`` maps agent -> AVPP id, ``avpps`` the reverse."""

    assignment: dict = field(default_factory=dict)
    avpps: dict = field(default_factory=dict)

    @classmethod
    def from_partitioning(cls, p: Partitioning | Iterable[Iterable], first_id: int = 0) -> "SystemStructure":
        sets = p.member_sets() if isinstance(p, Partitioning) else [frozenset(s) for s in p]
        avpps, assignment = {}, {}
        for avpp_id, members in enumerate(sets, start=first_id):
            avpps[avpp_id] = Partition(members)
            for a in members:
                if a in assignment:
                    raise ValueError(f"agent {a} assigned twice")
                assignment[a] = avpp_id
        return cls(assignment, avpps)

    def partitioning(self) -> Partitioning:
        return Partitioning(tuple(self.avpps[k] for k in sorted(self.avpps)))

    def is_consistent(self) -> bool:
        seen = {}
        for avpp_id, part in self.avpps.items():
            if not part.members:
                return False
            for a in part.members:
                if a in seen:
                    return False
                seen[a] = avpp_id
        return seen == self.assignment

    def copy(self) -> "SystemStructure":
        return SystemStructure(dict(self.assignment), dict(self.avpps))


def validate_partitioning(p: Partitioning, universe: Iterable) -> Verdict:
    universe = set(universe)
    counts = Counter(a for part in p.partitions for a in part.members)
    violations = []
    missing = sorted(universe - counts.keys())
    if missing:
        violations.append(Violation(ViolationKind.MISSING_AGENT, tuple(missing)))
    dup = sorted(a for a, k in counts.items() if k > 1)
    if dup:
        violations.append(Violation(ViolationKind.DUPLICATE_AGENT, tuple(dup)))
    foreign = sorted(a for a in counts if a not in universe)
    if foreign:
        violations.append(Violation(ViolationKind.FOREIGN_AGENT, tuple(foreign)))
    return Verdict(tuple(violations))


def check_partition_bounds(p: Partitioning, c: PartitioningConstraints) -> Verdict:
    violations = []
    if not c.count_ok(len(p)):
        violations.append(Violation(ViolationKind.COUNT_BOUND, (len(p),)))
    for part in p.partitions:
        if not c.size_ok(len(part)):
            violations.append(Violation(ViolationKind.SIZE_BOUND, tuple(sorted(part.members))))
    return Verdict(tuple(violations))


def feasible_counts(num_agents: int, c: PartitioningConstraints) -> list[int]:
    return [n for n in range(c.n_min, c.n_max + 1) if n * c.s_min <= num_agents <= n * c.s_max]


def feasible(num_agents: int, c: PartitioningConstraints) -> bool:
    return bool(feasible_counts(num_agents, c))


def avpp_means(structure: SystemStructure, accuracies) -> list[float]:
    acc = kernels.as_vector(accuracies)
    return kernels.partition_means([structure.avpps[k].members for k in sorted(structure.avpps)], acc)


def dissimilarity(structure: SystemStructure, accuracies) -> float:
    """Largest gap between two AVPPs' mean member accuracy."""
    acc = kernels.as_vector(accuracies)
    return kernels.mean_spread([part.members for part in structure.avpps.values()], acc)


def all_partitionings(items: Sequence) -> Iterable[list[list]]:
    """Every set partition of ``items`` (Bell(n) of them), in a stable order."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for sub in all_partitionings(rest):
        for i in range(len(sub)):
            yield sub[:i] + [[first] + sub[i]] + sub[i + 1:]
        yield [[first]] + sub


def bell_count(n: int) -> int:
    return sum(1 for _ in all_partitionings(range(n)))
