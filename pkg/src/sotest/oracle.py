"""Constraint oracle and test monitor.

Two views on every reorganization:

* gray box -- the solution the algorithm hands to the adapter, before adoption
* black box -- the live system structure after adoption

Bounds on partition size and count are only part of the check set for the
swarm optimizer; the decentralized algorithm does not support them.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from sotest.domain import (
    Partitioning,
    PartitioningConstraints,
    SystemStructure,
    Verdict,
    Violation,
    ViolationKind,
    check_partition_bounds,
    validate_partitioning,
)
from sotest.generation import PSOPP

GRAY = "gray"
BLACK = "black"

COMPLETED = "completed"
ABORTED_BLACK = "aborted-black"
ABORTED_SMOKE = "aborted-smoke"


def _check(p: Partitioning, universe, c: PartitioningConstraints | None, algo: str) -> Verdict:
    verdict = validate_partitioning(p, universe)
    if algo == PSOPP and c is not None:
        verdict = verdict + check_partition_bounds(p, c)
    return verdict


def evaluate_solution(solution: Partitioning, universe, c: PartitioningConstraints | None, algo: str) -> Verdict:
    return _check(solution, universe, c, algo).with_view(GRAY)


def evaluate_structure(structure: SystemStructure, universe, c: PartitioningConstraints | None, algo: str) -> Verdict:
    return _check(structure.partitioning(), universe, c, algo).with_view(BLACK)


def smoke_verdict(what: str, detail: str = "") -> Verdict:
    return Verdict((Violation(ViolationKind.SMOKE, (what, detail), "smoke"),))


@dataclass
class SequenceResult:
    suite_id: int
    index: int
    planned_cases: int
    reports: list = field(default_factory=list)
    traces: list = field(default_factory=list)
    status: str = COMPLETED
    activations: int = 0

    def gray_failures(self) -> int:
        return sum(1 for r in self.reports if r.gray is not None and r.gray.failed)

    def black_failures(self) -> int:
        return sum(1 for r in self.reports if r.black is not None and r.black.failed)

    def smoke_failures(self) -> int:
        return sum(1 for r in self.reports if r.smoke is not None and r.smoke.failed)


@dataclass
class TestRunResult:
    suite_id: int
    fault: str | None = None
    sequences: list[SequenceResult] = field(default_factory=list)

    __test__ = False


def record(result: SequenceResult | TestRunResult, report) -> None:
    """Append-only: attach ``report`` to the sequence currently being executed."""
    target = result.sequences[-1] if isinstance(result, TestRunResult) else result
    target.reports.append(report)


class Monitor:
    """Receives snapshots at the two synchronization points of a reorganization.

    Snapshots are immutable values (frozensets inside tuples) or explicit
    copies, so evaluating them cannot disturb the algorithm.
    """

    def __init__(self, universe, constraints: PartitioningConstraints | None, algo: str,
                 keep_snapshots: bool = False):
        self.universe = frozenset(universe)
        self.constraints = constraints
        self.algo = algo
        self.keep_snapshots = keep_snapshots
        self.snapshots: list[tuple[str, object]] = []

    def on_solution(self, solution: Partitioning) -> Verdict:
        if self.keep_snapshots:
            self.snapshots.append((GRAY, solution))
        return evaluate_solution(solution, self.universe, self.constraints, self.algo)

    def on_structure(self, structure: SystemStructure) -> Verdict:
        snap = structure.copy()
        if self.keep_snapshots:
            self.snapshots.append((BLACK, snap))
        return evaluate_structure(snap, self.universe, self.constraints, self.algo)
