"""Stepwise execution of test sequences against a self-organization algorithm.

Each test case is one synchronized step: environment change, influence on
the agents, trigger check, and (if triggered) a full reorganization through
the controller protocol ``initiate -> compute -> adopt`` with the monitor
looking at the solution before adoption and at the structure after it.
"""
from __future__ import annotations

import random
import traceback
from dataclasses import dataclass, field
from typing import Callable, Protocol

from sotest import kernels, psopp, spada
from sotest.clock import SimulatedClock
from sotest.domain import Partition, Partitioning, SystemStructure, Verdict
from sotest.envmodel import EnvTrace, clamp01
from sotest.faults import FaultConfig, wrap
from sotest.generation import PSOPP, SPADA, SystemConfiguration, TestCase, TestSequence, derive_rng
from sotest.oracle import (
    ABORTED_BLACK,
    ABORTED_SMOKE,
    COMPLETED,
    Monitor,
    SequenceResult,
    record,
    smoke_verdict,
)

OVERRUN_FACTOR = 10.0
DEFAULT_TICK = 0.002


class Controller(Protocol):
    kind: str

    def initiate(self, structure: SystemStructure, params, accuracies) -> None: ...

    def compute(self) -> Partitioning: ...

    def adopt(self, solution: Partitioning, structure: SystemStructure) -> SystemStructure: ...


def adopt_result(structure: SystemStructure, result: Partitioning) -> SystemStructure:
    """Move every agent named in ``result`` into a fresh AVPP for its partition.

    Agents the result forgets stay where they are, an agent listed twice
    lands in the first partition (smallest member id first), agents outside
    the system are ignored, and AVPPs left empty are dissolved.  Whatever the
    result looks like, every agent ends up in exactly one AVPP.
    """
    assignment = dict(structure.assignment)
    members = {k: set(p.members) for k, p in structure.avpps.items()}
    next_id = max(members, default=-1) + 1
    placed = set()
    for part in result.partitions:
        movers = [a for a in sorted(part.members) if a in assignment and a not in placed]
        if not movers:
            continue
        new_id = next_id
        next_id += 1
        members[new_id] = set()
        for a in movers:
            members[assignment[a]].discard(a)
            members[new_id].add(a)
            assignment[a] = new_id
            placed.add(a)
    avpps = {k: Partition(frozenset(m)) for k, m in sorted(members.items()) if m}
    return SystemStructure(assignment, avpps)


class PsoppController:
    kind = PSOPP

    def __init__(self, config: SystemConfiguration, rng: random.Random, clock_factory=None):
        self.config = config
        self.rng = rng
        self.clock_factory = clock_factory or (lambda: SimulatedClock(DEFAULT_TICK))
        self.hook = None
        self.elapsed = 0.0
        self._job = None

    def initiate(self, structure, params, accuracies):
        self._job = (structure.partitioning(), params, accuracies)

    def compute(self) -> Partitioning:
        initial, params, acc = self._job
        clock = self.clock_factory()
        start = clock.now()
        result = psopp.run_psopp(
            initial, self.config.constraints, params, acc, self.rng, clock,
            agents=sorted(self.config.universe), hook=self.hook,
        )
        self.elapsed = clock.now() - start
        return result

    def adopt(self, solution, structure):
        return adopt_result(structure, solution)


class SpadaController:
    kind = SPADA

    def __init__(self, config: SystemConfiguration, rng: random.Random, clock_factory=None, tick=DEFAULT_TICK):
        self.config = config
        self.rng = rng
        self.omit_hook = None
        self.transform = None
        self.tick = tick
        self.elapsed = 0.0
        self._job = None

    def initiate(self, structure, params, accuracies):
        self._job = (structure, params, accuracies)

    def compute(self) -> Partitioning:
        structure, params, acc = self._job
        omit = self.omit_hook(structure) if self.omit_hook else None
        graphs = []
        result = spada.run_spada(structure, params, acc, self.rng, omit=omit,
                                 transform=self.transform, graph_out=graphs)
        self.elapsed = self.tick * len(graphs[0].nodes)
        return result

    def adopt(self, solution, structure):
        return adopt_result(structure, solution)


def make_controller(config: SystemConfiguration, seed: int, fault=None, fault_cfg: FaultConfig | None = None,
                    clock_factory=None):
    cls = PsoppController if config.algorithm == PSOPP else SpadaController
    ctrl = cls(config, derive_rng(seed, "controller"), clock_factory)
    return wrap(ctrl, fault, fault_cfg, derive_rng(seed, "fault"))


@dataclass
class StepReport:
    step: int
    env_states: tuple
    triggered: bool
    gray: Verdict | None = None
    black: Verdict | None = None
    smoke: Verdict | None = None
    activations: int = 0
    wall_time: float = 0.0

    def failed(self) -> bool:
        return any(v is not None and v.failed for v in (self.gray, self.black, self.smoke))


@dataclass
class EngineState:
    config: SystemConfiguration
    structure: SystemStructure
    accuracies: list
    env_states: list
    traces: list
    step: int = 0
    rng: random.Random = field(default_factory=random.Random)

    @classmethod
    def initial(cls, config: SystemConfiguration, seed: int) -> "EngineState":
        env = [g.profile.initial_state for g in config.groups]
        traces = []
        for s in env:
            t = EnvTrace()
            t.visit(s)
            traces.append(t)
        return cls(config, config.structure.copy(), config.accuracies(), env, traces,
                   rng=derive_rng(seed, "engine"))


class _InfluenceTable:
    """Per group and state, the (agent, delta) pairs an environment change applies."""

    def __init__(self, config: SystemConfiguration):
        types = {a.id: a.agent_type for a in config.agents}
        self.rows = []
        for g in config.groups:
            members = sorted(g.member_ids)
            per_state = []
            for label in g.profile.states:
                per_state.append([(a, g.influence.delta(types[a], label)) for a in members])
            self.rows.append(per_state)


def _apply_case(state: EngineState, case: TestCase, table: _InfluenceTable):
    acc = state.accuracies
    for gi, new in enumerate(case.states):
        state.traces[gi].take(state.env_states[gi], new)
        state.env_states[gi] = new
        for a, d in table.rows[gi][new]:
            if d:
                acc[a] = clamp01(acc[a] + d)


def run_test_case(state: EngineState, case: TestCase, controller: Controller, monitor: Monitor,
                  table: _InfluenceTable | None = None) -> StepReport:
    if case.step != state.step:
        raise ValueError(f"test case {case.step} applied at step {state.step}")
    table = table or _InfluenceTable(state.config)
    _apply_case(state, case, table)
    acc = kernels.as_vector(state.accuracies)
    spread = kernels.mean_spread([p.members for p in state.structure.avpps.values()], acc)
    report = StepReport(state.step, tuple(case.states), spread > state.config.trigger.dissimilarity_threshold)
    if report.triggered:
        counter = getattr(controller, "counter", None)
        before = counter.count if counter else 0
        try:
            controller.initiate(state.structure, state.config.params, list(state.accuracies))
            solution = controller.compute()
            report.gray = monitor.on_solution(solution)
            new_structure = controller.adopt(solution, state.structure)
            report.black = monitor.on_structure(new_structure)
            state.structure = new_structure
            report.wall_time = round(getattr(controller, "elapsed", 0.0), 9)
            budget = getattr(state.config.params, "max_runtime", None)
            if budget is not None and report.wall_time > OVERRUN_FACTOR * budget:
                report.smoke = smoke_verdict("runtime_overrun", f"{report.wall_time:.3f}s > {OVERRUN_FACTOR}x budget")
        except Exception as exc:  # noqa: BLE001 -- any crash is a smoke-test failure
            tb = traceback.extract_tb(exc.__traceback__)
            where = f"{tb[-1].name}:{tb[-1].lineno}" if tb else ""
            report.smoke = smoke_verdict(type(exc).__name__, f"{exc} @ {where}")
        report.activations = (counter.count if counter else 0) - before
    state.step += 1
    return report


def run_sequence(config: SystemConfiguration, sequence: TestSequence,
                 controller_factory: Callable[[SystemConfiguration, int], Controller],
                 monitor: Monitor | None = None, suite_id: int = 0) -> SequenceResult:
    """Run ``sequence`` from the suite's initial configuration.

    Stop policy: keep going after gray-box failures, stop at the first
    black-box or smoke failure.
    """
    state = EngineState.initial(config, sequence.seed)
    controller = controller_factory(config, sequence.seed)
    monitor = monitor or Monitor(config.universe, config.constraints, config.algorithm)
    result = SequenceResult(suite_id, sequence.index, len(sequence.cases))
    table = _InfluenceTable(config)
    for case in sequence.cases:
        report = run_test_case(state, case, controller, monitor, table)
        record(result, report)
        if report.smoke is not None and report.smoke.failed:
            result.status = ABORTED_SMOKE
            break
        if report.black is not None and report.black.failed:
            result.status = ABORTED_BLACK
            break
    else:
        result.status = COMPLETED
    result.traces = state.traces
    counter = getattr(controller, "counter", None)
    result.activations = counter.count if counter else 0
    return result
