import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sotest import cli
from sotest.envmodel import ConfigurationError
from sotest.generation import PSOPP, ModelOfSuT, make_suite
from sotest.reporting import (
    CampaignConfig,
    MetricsRow,
    aggregate,
    format_table,
    load_config,
    read_records,
    report,
    run_campaign,
    summarize,
)

FAIL = {"outcome": "failed", "violations": [{"kind": "missing_agent", "subjects": [1], "view": "gray"}]}
PASS = {"outcome": "passed", "violations": []}
TINY = ModelOfSuT.desk(agents=(4, 12), cases_per_sequence=(5, 15), ep_states=(2, 4))


def _seq(block, sid, planned, steps, activations=0):
    """``steps``: list of (triggered, gray_failed, black_failed, activations)."""
    recs = []
    for i, (trig, g, b, a) in enumerate(steps):
        recs.append({
            "type": "step", "block": block, "suite": sid, "sequence": 0, "case": i, "env": [0],
            "triggered": trig, "gray": (FAIL if g else PASS) if trig else None,
            "black": (FAIL if b else PASS) if trig else None, "smoke": None, "activations": a, "wall_time": 0.0,
        })
    recs.append({
        "type": "sequence", "block": block, "algorithm": "psopp", "suite": sid, "sequence": 0,
        "planned_cases": planned, "applied_cases": len(steps), "status": "completed",
        "activations": activations or sum(s[3] for s in steps), "agents": 10, "groups": 2,
        "ep": [{"states": 3, "transitions": 6, "state_coverage": 1.0, "transition_coverage": 0.5,
                "trace": {"visited": [], "transitions": []}}],
    })
    return recs


def test_counting_sequences_without_failure():
    recs = []
    for sid in range(10):
        fails = sid < 3
        recs += _seq("F", sid, 4, [(True, fails, False, 1), (False, False, False, 0)] * 2)
    row = aggregate(summarize(recs))
    assert row.sequences == 10
    assert row.sequences_without_failure == pytest.approx(70.0)
    assert row.gray_failures == 3 and row.black_failures == 0


def test_applied_percentage_of_aborted_sequence():
    steps = [(False, False, False, 0)] * 6 + [(True, True, True, 1)]
    row = aggregate(summarize(_seq("F", 0, 50, steps)))
    assert row.applied_test_cases == pytest.approx(14.0)
    assert row.depth_first_failure == (7.0, 0.0)
    assert row.depth_first_black == (7.0, 0.0)


def test_activation_accounting():
    steps = [(True, True, False, 3), (True, False, False, 1), (True, False, False, 0), (True, True, True, 2)]
    row = aggregate(summarize(_seq("F", 0, 4, steps)))
    assert row.fault_activations == 6
    assert row.detected_gray == pytest.approx(100 * 5 / 6)
    assert row.undetected_activations == pytest.approx(100 / 6)
    assert row.detected_black == pytest.approx(100 * 2 / 6)
    assert row.depth_first_gray == (1.0, 0.0)
    assert row.depth_first_black == (4.0, 0.0)


def test_rows_without_activations_report_none():
    row = aggregate(summarize(_seq("B", 0, 2, [(True, False, False, 0)])))
    assert row.undetected_activations is None and row.detected_gray is None
    assert math.isnan(row.depth_first_failure[0])
    assert "n/a" in format_table([row])


@st.composite
def result_sets(draw):
    n = draw(st.integers(1, 12))
    recs = []
    for sid in range(n):
        k = draw(st.integers(1, 8))
        steps = [
            (t, t and g, t and g and b, a if t else 0)
            for t, g, b, a in draw(st.lists(st.tuples(st.booleans(), st.booleans(), st.booleans(),
                                                      st.integers(0, 3)), min_size=k, max_size=k))
        ]
        recs.append(_seq("F", sid, draw(st.integers(k, 3 * k)), steps))
    return recs


@given(result_sets(), st.data())
def test_split_aggregation_matches_whole(seqs, data):
    whole = aggregate(summarize([r for s in seqs for r in s]))
    cut = data.draw(st.integers(0, len(seqs)))
    parts = [seqs[:cut], seqs[cut:]]
    rows = [aggregate(summarize([r for s in p for r in s])) for p in parts if p]
    weights = [r.sequences for r in rows]
    assert sum(weights) == whole.sequences
    for field in ("sequences_without_failure", "applied_test_cases", "ep_state_coverage"):
        combined = sum(getattr(r, field) * w for r, w in zip(rows, weights)) / sum(weights)
        assert combined == pytest.approx(getattr(whole, field))
    for field in ("reorganizations_per_sequence", "agents", "test_cases_per_sequence"):
        combined = sum(getattr(r, field)[0] * w for r, w in zip(rows, weights)) / sum(weights)
        assert combined == pytest.approx(getattr(whole, field)[0])
    assert sum(r.fault_activations for r in rows) == whole.fault_activations
    if whole.fault_activations:
        assert whole.detected_gray + whole.undetected_activations == pytest.approx(100.0)
        for v in (whole.detected_gray, whole.detected_black, whole.undetected_activations):
            assert 0.0 <= v <= 100.0


def test_config_validation():
    with pytest.raises(ConfigurationError):
        CampaignConfig(mode="batch")
    with pytest.raises(ConfigurationError):
        CampaignConfig(faults=["PSOPP_F9"])
    with pytest.raises(ConfigurationError):
        CampaignConfig(suites=0)
    with pytest.raises(ConfigurationError):
        CampaignConfig.from_dict({"colour": "red"})
    with pytest.raises(ConfigurationError):
        CampaignConfig.from_dict({"fault_config": {"t1": 100, "t2": 2}})


def test_config_file(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(
        "seed: 9\nsuites: 2\nfaults: [PSOPP_F5]\ntheta: 0.2\n"
        "model: {agents: [4, 30], cases_per_sequence: [10, 20]}\nfault_config: {t2: 20}\n"
    )
    cfg = load_config(p)
    assert (cfg.seed, cfg.suites, cfg.faults, cfg.theta) == (9, 2, ["PSOPP_F5"], 0.2)
    assert cfg.model.agents == (4, 30) and cfg.model.max_influence_delta == 0.5
    assert cfg.fault_config.t2 == 20
    assert CampaignConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    bad = tmp_path / "bad.yaml"
    bad.write_text("seed: [1\n")
    with pytest.raises(ConfigurationError, match="bad.yaml"):
        load_config(bad)
    with pytest.raises(ConfigurationError, match="missing.yaml"):
        load_config(tmp_path / "missing.yaml")
    listy = tmp_path / "list.yaml"
    listy.write_text("- 1\n")
    with pytest.raises(ConfigurationError):
        load_config(listy)


def test_single_baseline_sequence(tmp_path):
    cfg = CampaignConfig(seed=2, suites=1, faults=[], model=TINY, workers=1)
    rows, path = run_campaign(cfg, tmp_path)
    assert [r.fault for r in rows] == ["BASELINE_PSOPP", "BASELINE_SPADA"]
    for r in rows:
        assert r.sequences == 1
        assert r.gray_failures == r.black_failures == r.smoke_failures == 0
        assert r.fault_activations == 0
    assert (tmp_path / "metrics.json").exists()
    assert (tmp_path / "suites" / "BASELINE_SPADA.jsonl").exists()
    # metrics come back from the file alone
    assert [r.to_dict() for r in report(path)] == [r.to_dict() for r in rows]


def test_offline_and_online_agree(tmp_path):
    base = dict(seed=5, suites=2, faults=["PSOPP_F2"], baseline=False, model=TINY, workers=1)
    _, a = run_campaign(CampaignConfig(mode="offline", **base), tmp_path / "a")
    _, b = run_campaign(CampaignConfig(mode="online", **base), tmp_path / "b")
    strip = lambda p: [line for line in p.read_text().splitlines()[1:]]
    assert strip(a) == strip(b)


def test_result_file_checks(tmp_path):
    p = tmp_path / "r.jsonl"
    p.write_text('{"schema": "other"}\n')
    with pytest.raises(ConfigurationError):
        list(read_records(p))
    p.write_text('{"schema": "sotest.results", "version": 99}\n')
    with pytest.raises(ConfigurationError):
        list(read_records(p))


def test_metrics_row_serializes():
    row = aggregate(summarize(_seq("F", 0, 1, [(True, True, False, 1)])))
    d = row.to_dict()
    assert isinstance(d["agents"], list)
    assert set(d) == {f for f in MetricsRow.__dataclass_fields__}


def _cli(*args):
    return cli.main([*args, "-q"])


def test_cli_pipeline_and_exit_codes(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("model: {agents: [4, 12], cases_per_sequence: [5, 15], ep_states: [2, 4]}\n")
    out = tmp_path / "run"
    common = ["--config", str(cfg), "--seed", "3", "--suites", "1", "--fault", "none", "--out", str(out),
              "--workers", "1"]
    assert _cli("generate", *common) == cli.EXIT_OK
    assert sorted(p.name for p in (out / "suites").iterdir()) == ["BASELINE_PSOPP.jsonl", "BASELINE_SPADA.jsonl"]
    assert _cli("execute", *common) == cli.EXIT_OK
    first = (out / "results.jsonl").read_bytes()
    assert _cli("report", *common) == cli.EXIT_OK
    assert "BASELINE_SPADA" in capsys.readouterr().out
    assert _cli("all", *common, "--fail-on-detect") == cli.EXIT_OK
    assert (out / "results.jsonl").read_bytes() == first


def test_cli_reports_detections(tmp_path, monkeypatch):
    from sotest import reporting

    row = aggregate(summarize(_seq("F", 0, 1, [(True, True, False, 1)])))
    monkeypatch.setattr(reporting, "report", lambda path: [row])
    monkeypatch.setattr(cli, "report", lambda path: [row])
    (tmp_path / "results.jsonl").write_text("")
    assert _cli("report", "--out", str(tmp_path)) == cli.EXIT_OK
    assert _cli("report", "--out", str(tmp_path), "--fail-on-detect") == cli.EXIT_DETECTED


def test_cli_config_errors(tmp_path, capsys):
    assert _cli("all", "--config", str(tmp_path / "nope.yaml")) == cli.EXIT_CONFIG
    assert _cli("all", "--fault", "PSOPP_F7", "--out", str(tmp_path)) == cli.EXIT_CONFIG
    assert _cli("report", "--input", str(tmp_path / "none.jsonl")) == cli.EXIT_CONFIG
    assert "error" in capsys.readouterr().err


def test_fault_list_parsing():
    assert cli._fault_list("all") == CampaignConfig().faults
    assert cli._fault_list("none") == []
    assert cli._fault_list("psopp_f1, SPADA_F2") == ["PSOPP_F1", "SPADA_F2"]


def test_deterministic_results(tmp_path):
    cfg = CampaignConfig(seed=11, suites=2, faults=["PSOPP_F5", "SPADA_F2"], model=TINY, workers=1)
    _, a = run_campaign(cfg, tmp_path / "a")
    _, b = run_campaign(cfg, tmp_path / "b")
    assert a.read_bytes() == b.read_bytes()


def test_directed_block_reuses_f5_configurations():
    cfg = CampaignConfig(seed=4, suites=3, faults=["PSOPP_F5", "PSOPP_F5D"], baseline=False)
    assert cfg.block_seed("PSOPP_F5D") == cfg.block_seed("PSOPP_F5")
    assert cfg.block_seed("PSOPP_F4") != cfg.block_seed("PSOPP_F5")
    f5 = make_suite(cfg.spec(PSOPP, "PSOPP_F5"), cfg.block_seed("PSOPP_F5"), 0)
    f5d = make_suite(cfg.spec(PSOPP, "PSOPP_F5D"), cfg.block_seed("PSOPP_F5D"), 0)
    assert f5.sequences == f5d.sequences
    assert f5d.config.constraints.n_min == f5d.config.constraints.n_max
