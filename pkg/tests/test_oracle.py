import json

from sotest.domain import Partitioning, PartitioningConstraints, SystemStructure, Verdict, ViolationKind
from sotest.engine import StepReport, adopt_result
from sotest.oracle import (
    BLACK,
    GRAY,
    Monitor,
    SequenceResult,
    TestRunResult,
    evaluate_solution,
    evaluate_structure,
    record,
    smoke_verdict,
)

C = PartitioningConstraints


def test_gray_checks():
    u = range(4)
    assert evaluate_solution(Partitioning.of([{0, 1}, {2, 3}]), u, C(2, 2, 2, 2), "psopp").passed
    v = evaluate_solution(Partitioning.of([{0, 1}, {1, 2, 3}]), u, C(1, 4, 1, 4), "psopp")
    assert v.kinds() == {ViolationKind.DUPLICATE_AGENT}
    assert all(x.view == GRAY for x in v.violations)


def test_spada_bounds_are_unchecked():
    u = range(150)
    big = Partitioning.of([set(range(120)), set(range(120, 150))])
    assert evaluate_solution(big, u, C(2, 100, 1, 10), "spada").passed
    assert evaluate_solution(big, u, C(2, 100, 1, 10), "psopp").kinds() == {ViolationKind.SIZE_BOUND}


def test_black_checks():
    s = SystemStructure.from_partitioning([{0, 1}, {2}])
    v = evaluate_structure(s, range(3), C(2, 2, 1, 2), "psopp")
    assert v.kinds() == {ViolationKind.SIZE_BOUND}
    assert v.violations[0].view == BLACK
    assert evaluate_structure(adopt_result(s, Partitioning.of([{0, 1, 2}])), range(3), None, "spada").passed


def test_monitor_snapshots_are_isolated():
    m = Monitor(range(2), None, "psopp", keep_snapshots=True)
    s = SystemStructure.from_partitioning([{0}, {1}])
    m.on_structure(s)
    s.assignment[0] = 1
    snap = m.snapshots[0][1]
    assert snap.assignment == {0: 0, 1: 1}


def test_record_appends():
    res = SequenceResult(0, 0, 5)
    for i in range(5):
        record(res, StepReport(i, (0,), False))
    assert len(res.reports) == 5
    run = TestRunResult(0, sequences=[SequenceResult(0, 0, 2)])
    record(run, StepReport(0, (0,), False))
    assert len(run.sequences[0].reports) == 1


def test_verdict_serialization():
    v = evaluate_solution(Partitioning.of([{0}, {0}]), range(2), None, "psopp")
    d = json.loads(json.dumps(v.to_dict()))
    assert Verdict.from_dict(d) == v
    assert d["outcome"] == "failed"
    s = smoke_verdict("Timeout", "3s")
    assert s.failed and s.violations[0].kind is ViolationKind.SMOKE
