"""Campaign orchestration, result files and the metrics table.

A campaign runs a no-fault baseline per algorithm plus one block per fault
id.  Every block is a stream of suites; suites are executed in parallel and
merged back in (block, suite, sequence) order, so the result file does not
depend on scheduling.  Metrics are computed from the result file alone.
"""
from __future__ import annotations

import json
import math
import os
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from sotest.engine import StepReport, make_controller, run_sequence
from sotest.envmodel import ConfigurationError, EnvTrace, coverage
from sotest.faults import FaultConfig, FaultId
from sotest.generation import (
    DESK_THETA,
    PSOPP,
    SPADA,
    ModelOfSuT,
    PsoppParamRanges,
    SpadaParamRanges,
    SuiteSpec,
    TestSuite,
    derive_seed,
    make_suite,
)

SCHEMA = "sotest.results"
SCHEMA_VERSION = 1
SUITE_SCHEMA = "sotest.suites"
BASELINE = {PSOPP: "BASELINE_PSOPP", SPADA: "BASELINE_SPADA"}
ALL_FAULTS = tuple(f.value for f in FaultId)


# -- configuration ----------------------------------------------------------


@dataclass
class CampaignConfig:
    mode: str = "offline"
    seed: int = 1
    suites: int = 100
    sequences: int | None = None  # per suite; None keeps the model's value
    faults: list = field(default_factory=lambda: list(ALL_FAULTS))
    baseline: bool = True
    theta: float = DESK_THETA
    model: ModelOfSuT = field(default_factory=ModelOfSuT.desk)
    fault_config: FaultConfig = field(default_factory=FaultConfig)
    spada_ranges: SpadaParamRanges = field(default_factory=SpadaParamRanges)
    psopp_ranges: PsoppParamRanges = field(default_factory=PsoppParamRanges)
    workers: int = 0  # 0: one per CPU
    out: str = "results"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.mode not in ("offline", "online"):
            raise ConfigurationError(f"mode must be offline or online, not {self.mode!r}")
        if self.suites < 1:
            raise ConfigurationError("need at least one suite per fault")
        if self.sequences is not None and self.sequences < 1:
            raise ConfigurationError("need at least one sequence per suite")
        if self.theta < 0:
            raise ConfigurationError("theta must be non-negative")
        if self.workers < 0:
            raise ConfigurationError("workers must be >= 0")
        for f in self.faults:
            if f not in ALL_FAULTS:
                raise ConfigurationError(f"unknown fault id {f!r}; known: {', '.join(ALL_FAULTS)}")

    def blocks(self) -> list[tuple[str, str, str | None]]:
        """(label, algorithm, fault) for every block, baselines first."""
        out = []
        if self.baseline:
            out += [(BASELINE[PSOPP], PSOPP, None), (BASELINE[SPADA], SPADA, None)]
        out += [(f, FaultId(f).algorithm, f) for f in self.faults]
        return out

    def spec(self, algorithm: str, fault: str | None) -> SuiteSpec:
        directed = fault is not None and FaultId(fault).directed
        return SuiteSpec(self.model, algorithm, fault, fixed_count=directed, theta=self.theta,
                         sequences=self.sequences,
                         spada_ranges=self.spada_ranges, psopp_ranges=self.psopp_ranges)

    def block_seed(self, label: str) -> int:
        if label in ALL_FAULTS:
            label = FaultId(label).paired.value
        return derive_seed(self.seed, "campaign", label)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["model"] = self.model.to_dict()
        d["fault_config"] = asdict(self.fault_config)
        d["spada_ranges"] = asdict(self.spada_ranges)
        d["psopp_ranges"] = asdict(self.psopp_ranges)
        d["faults"] = list(self.faults)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "CampaignConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            if "model" in d:
                d["model"] = ModelOfSuT.desk(**_tuples(d["model"]))
            if "fault_config" in d:
                d["fault_config"] = FaultConfig(**d["fault_config"])
            if "spada_ranges" in d:
                d["spada_ranges"] = SpadaParamRanges(**_tuples(d["spada_ranges"]))
            if "psopp_ranges" in d:
                d["psopp_ranges"] = PsoppParamRanges(**_tuples(d["psopp_ranges"]))
            if "faults" in d:
                d["faults"] = [str(f) for f in (d["faults"] or [])]
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"invalid campaign config: {exc}") from exc


def _tuples(d: Mapping) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in (d or {}).items()}


def load_config(path: str | os.PathLike) -> CampaignConfig:
    """Read a YAML (or JSON, which YAML accepts) campaign file."""
    import yaml

    path = Path(path)
    try:
        with path.open(encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigurationError(f"{path}: {exc.strerror}") from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: not valid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: expected a mapping at top level")
    try:
        return CampaignConfig.from_dict(data)
    except ConfigurationError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc


# -- file formats -------------------------------------------------------------


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def write_suites(path: str | os.PathLike, label: str, suites: Iterable[TestSuite]) -> int:
    """One header line, then one suite per line."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps({"schema": SUITE_SCHEMA, "version": SCHEMA_VERSION, "block": label}) + "\n")
        for s in suites:
            fh.write(dumps(s.to_dict()) + "\n")
            n += 1
    return n


def read_suites(path: str | os.PathLike) -> tuple[str, list[TestSuite]]:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("schema") != SUITE_SCHEMA:
            raise ConfigurationError(f"{path}: not a suite file")
        return header["block"], [TestSuite.from_dict(json.loads(line)) for line in fh if line.strip()]


def _verdict(v):
    return None if v is None else v.to_dict()


def step_record(label: str, suite_id: int, seq: int, r: StepReport) -> dict:
    return {
        "type": "step",
        "block": label,
        "suite": suite_id,
        "sequence": seq,
        "case": r.step,
        "env": list(r.env_states),
        "triggered": r.triggered,
        "gray": _verdict(r.gray),
        "black": _verdict(r.black),
        "smoke": _verdict(r.smoke),
        "activations": r.activations,
        "wall_time": r.wall_time,
    }


def sequence_record(label: str, algorithm: str, suite: TestSuite, result) -> dict:
    cfg = suite.config
    eps = []
    for g, trace in zip(cfg.groups, result.traces):
        sc, tc = coverage(g.profile, trace)
        eps.append({"states": len(g.profile.states), "transitions": len(g.profile.positive_transitions()),
                    "state_coverage": sc, "transition_coverage": tc, "trace": trace.to_dict()})
    return {
        "type": "sequence",
        "block": label,
        "algorithm": algorithm,
        "suite": suite.id,
        "sequence": result.index,
        "planned_cases": result.planned_cases,
        "applied_cases": len(result.reports),
        "status": result.status,
        "activations": result.activations,
        "agents": len(cfg.agents),
        "groups": len(cfg.groups),
        "ep": eps,
    }


def records_for(label: str, algorithm: str, suite: TestSuite, result) -> list[dict]:
    """Step records followed by the closing sequence record, as written to the result file."""
    out = [step_record(label, suite.id, result.index, r) for r in result.reports]
    out.append(sequence_record(label, algorithm, suite, result))
    return out


# -- execution ----------------------------------------------------------------


def _run_suite(job) -> list[str]:
    label, algorithm, fault, fault_cfg, suite = job
    lines = []
    for seq in suite.sequences:
        result = run_sequence(
            suite.config, seq,
            lambda cfg, s: make_controller(cfg, s, fault, fault_cfg),
            suite_id=suite.id,
        )
        lines.extend(dumps(rec) for rec in records_for(label, algorithm, suite, result))
    return lines


def _online_job(job) -> list[str]:
    label, algorithm, fault, fault_cfg, spec, seed, suite_id = job
    return _run_suite((label, algorithm, fault, fault_cfg, make_suite(spec, seed, suite_id)))


def generate(cfg: CampaignConfig, out_dir: str | os.PathLike) -> list[Path]:
    """Offline generation: one suite file per block."""
    out_dir = Path(out_dir)
    (out_dir / "suites").mkdir(parents=True, exist_ok=True)
    paths = []
    for label, algorithm, fault in cfg.blocks():
        spec = cfg.spec(algorithm, fault)
        seed = cfg.block_seed(label)
        path = out_dir / "suites" / f"{label}.jsonl"
        write_suites(path, label, (make_suite(spec, seed, i) for i in range(cfg.suites)))
        paths.append(path)
    return paths


def _jobs(cfg: CampaignConfig, suite_dir: Path | None) -> Iterator[tuple]:
    for label, algorithm, fault in cfg.blocks():
        if suite_dir is not None:
            file_label, suites = read_suites(suite_dir / f"{label}.jsonl")
            for s in suites:
                yield _run_suite, (label, algorithm, fault, cfg.fault_config, s)
        else:
            spec = cfg.spec(algorithm, fault)
            for i in range(cfg.suites):
                yield _online_job, (label, algorithm, fault, cfg.fault_config, spec, cfg.block_seed(label), i)


def _call(fn_and_job):
    fn, job = fn_and_job
    return fn(job)


def execute(cfg: CampaignConfig, out_dir: str | os.PathLike, suite_dir: str | os.PathLike | None = None,
            progress=None) -> Path:
    """Run every block and write ``results.jsonl``; returns its path.

    ``suite_dir`` holds offline suite files; without it suites are generated
    on the fly (online mode).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "results.jsonl"
    jobs = list(_jobs(cfg, Path(suite_dir) if suite_dir is not None else None))
    workers = cfg.workers or os.cpu_count() or 1
    # output location and worker count do not influence results; keep them out so reruns compare equal
    semantic = {k: v for k, v in cfg.to_dict().items() if k not in ("out", "workers")}
    header = {"schema": SCHEMA, "version": SCHEMA_VERSION, "type": "header", "config": semantic}
    tmp = path.with_suffix(".jsonl.part")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(dumps(header) + "\n")
        if workers == 1:
            chunks = map(_call, jobs)
        else:
            pool = ProcessPoolExecutor(workers)
            chunks = pool.map(_call, jobs)  # map keeps submission order
        try:
            for i, lines in enumerate(chunks, 1):
                fh.write("\n".join(lines) + ("\n" if lines else ""))
                if progress:
                    progress(i, len(jobs))
        finally:
            if workers != 1:
                pool.shutdown()
    os.replace(tmp, path)
    return path


def run_campaign(cfg: CampaignConfig, out_dir: str | os.PathLike | None = None, progress=None):
    """generate (offline mode) -> execute -> report; returns (rows, results path)."""
    out_dir = Path(out_dir or cfg.out)
    suite_dir = None
    if cfg.mode == "offline":
        generate(cfg, out_dir)
        suite_dir = out_dir / "suites"
    path = execute(cfg, out_dir, suite_dir, progress)
    rows = report(path)
    write_metrics(rows, out_dir)
    return rows, path


# -- metrics ------------------------------------------------------------------


@dataclass
class SequenceSummary:
    block: str
    algorithm: str
    ep_states: float
    ep_transitions: float
    state_coverage: float
    transition_coverage: float
    agents: int
    groups: int
    planned: int
    applied: int
    reorganizations: int
    activations: int
    act_gray: int  # activations on reorganizations the gray view caught
    act_black: int
    gray: bool
    black: bool
    smoke: bool
    first_any: int | None
    first_gray: int | None
    first_black: int | None

    @property
    def failed(self) -> bool:
        return self.gray or self.black or self.smoke


class _SeqAcc:
    def __init__(self):
        self.reorg = self.act = self.act_gray = self.act_black = 0
        self.first = {"any": None, "gray": None, "black": None}
        self.smoke = False

    def step(self, rec: Mapping):
        depth = rec["case"] + 1
        gray = rec["gray"] is not None and rec["gray"]["outcome"] == "failed"
        black = rec["black"] is not None and rec["black"]["outcome"] == "failed"
        smoke = rec["smoke"] is not None and rec["smoke"]["outcome"] == "failed"
        if rec["triggered"]:
            self.reorg += 1
        a = rec["activations"]
        self.act += a
        if gray:
            self.act_gray += a
        if black:
            self.act_black += a
        for key, hit in (("gray", gray), ("black", black), ("any", gray or black or smoke)):
            if hit and self.first[key] is None:
                self.first[key] = depth
        self.smoke |= smoke


def _mean(xs):
    return sum(xs) / len(xs) if xs else 0.0


def summarize(records: Iterable[Mapping]) -> list[SequenceSummary]:
    """Per-sequence summaries from result records, in file order."""
    open_: dict = {}
    out = []
    for rec in records:
        kind = rec.get("type")
        key = (rec.get("block"), rec.get("suite"), rec.get("sequence"))
        if kind == "step":
            open_.setdefault(key, _SeqAcc()).step(rec)
        elif kind == "sequence":
            acc = open_.pop(key, None) or _SeqAcc()
            eps = rec["ep"]
            out.append(SequenceSummary(
                block=rec["block"],
                algorithm=rec["algorithm"],
                ep_states=_mean([e["states"] for e in eps]),
                ep_transitions=_mean([e["transitions"] for e in eps]),
                state_coverage=_mean([e["state_coverage"] for e in eps]),
                transition_coverage=_mean([e["transition_coverage"] for e in eps]),
                agents=rec["agents"],
                groups=rec["groups"],
                planned=rec["planned_cases"],
                applied=rec["applied_cases"],
                reorganizations=acc.reorg,
                activations=rec["activations"],
                act_gray=acc.act_gray,
                act_black=acc.act_black,
                gray=acc.first["gray"] is not None,
                black=acc.first["black"] is not None,
                smoke=acc.smoke,
                first_any=acc.first["any"],
                first_gray=acc.first["gray"],
                first_black=acc.first["black"],
            ))
    return out


def _ms(xs) -> tuple[float, float]:
    xs = list(xs)
    if not xs:
        return (math.nan, math.nan)
    return (statistics.fmean(xs), statistics.pstdev(xs) if len(xs) > 1 else 0.0)


def _pct(num, den):
    return 100.0 * num / den if den else None


@dataclass
class MetricsRow:
    fault: str
    sequences: int
    ep_states: tuple
    ep_transitions: tuple
    ep_state_coverage: float
    ep_transition_coverage: float
    agents: tuple
    agent_groups: tuple
    sequences_without_failure: float
    test_cases_per_sequence: tuple
    applied_test_cases: float
    reorganizations_per_sequence: tuple
    fault_activations: int
    undetected_activations: float | None
    detected_gray: float | None
    detected_black: float | None
    gray_failures: int
    black_failures: int
    smoke_failures: int
    sequences_gray_only: float | None
    sequences_black_only: float | None
    depth_first_failure: tuple
    depth_first_gray: tuple
    depth_first_black: tuple

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}


def aggregate(summaries: list[SequenceSummary], fault: str | None = None) -> MetricsRow:
    """One table row; all summaries belong to the same block."""
    s = summaries
    n = len(s)
    act = sum(x.activations for x in s)
    act_gray = sum(x.act_gray for x in s)
    detected = [x for x in s if x.gray or x.black]
    return MetricsRow(
        fault=fault or (s[0].block if s else ""),
        sequences=n,
        ep_states=_ms(x.ep_states for x in s),
        ep_transitions=_ms(x.ep_transitions for x in s),
        ep_state_coverage=100.0 * _mean([x.state_coverage for x in s]),
        ep_transition_coverage=100.0 * _mean([x.transition_coverage for x in s]),
        agents=_ms(x.agents for x in s),
        agent_groups=_ms(x.groups for x in s),
        sequences_without_failure=_pct(sum(not x.failed for x in s), n) or 0.0,
        test_cases_per_sequence=_ms(x.planned for x in s),
        # a sequence without planned cases counts as fully applied
        applied_test_cases=100.0 * _mean([x.applied / x.planned if x.planned else 1.0 for x in s]),
        reorganizations_per_sequence=_ms(x.reorganizations for x in s),
        fault_activations=act,
        undetected_activations=_pct(act - act_gray, act),
        detected_gray=_pct(act_gray, act),
        detected_black=_pct(sum(x.act_black for x in s), act),
        gray_failures=sum(x.gray for x in s),
        black_failures=sum(x.black for x in s),
        smoke_failures=sum(x.smoke for x in s),
        sequences_gray_only=_pct(sum(x.gray and not x.black for x in detected), len(detected)),
        sequences_black_only=_pct(sum(x.black and not x.gray for x in detected), len(detected)),
        depth_first_failure=_ms(x.first_any for x in s if x.first_any is not None),
        depth_first_gray=_ms(x.first_gray for x in s if x.first_gray is not None),
        depth_first_black=_ms(x.first_black for x in s if x.first_black is not None),
    )


def read_records(path: str | os.PathLike) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline() or "{}")
        if header.get("schema") != SCHEMA:
            raise ConfigurationError(f"{path}: not a result file")
        if header.get("version") != SCHEMA_VERSION:
            raise ConfigurationError(f"{path}: unsupported schema version {header.get('version')}")
        for line in fh:
            if line.strip():
                yield json.loads(line)


def report(path: str | os.PathLike) -> list[MetricsRow]:
    by_block: dict[str, list[SequenceSummary]] = {}
    for s in summarize(read_records(path)):
        by_block.setdefault(s.block, []).append(s)
    return [aggregate(v, k) for k, v in by_block.items()]


def write_metrics(rows: list[MetricsRow], out_dir: str | os.PathLike) -> Path:
    path = Path(out_dir) / "metrics.json"
    path.write_text(json.dumps([r.to_dict() for r in rows], indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _fmt(v) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, tuple):
        m, sd = v
        return "n/a" if math.isnan(m) else f"{m:.2f} ({sd:.2f})"
    if isinstance(v, float):
        return "n/a" if math.isnan(v) else f"{v:.2f}"
    return str(v)


TABLE_FIELDS = [
    ("#EP states", "ep_states"),
    ("#EP transitions", "ep_transitions"),
    ("%EP state coverage", "ep_state_coverage"),
    ("%EP transition coverage", "ep_transition_coverage"),
    ("#agents", "agents"),
    ("#agent groups", "agent_groups"),
    ("%sequences w/o failure", "sequences_without_failure"),
    ("#test cases/sequence", "test_cases_per_sequence"),
    ("%applied test cases", "applied_test_cases"),
    ("#reorganizations/sequence", "reorganizations_per_sequence"),
    ("#fault activations", "fault_activations"),
    ("%undetected activations", "undetected_activations"),
    ("%detected (gray)", "detected_gray"),
    ("%detected (black)", "detected_black"),
    ("#sequences gray failure", "gray_failures"),
    ("#sequences black failure", "black_failures"),
    ("#sequences smoke failure", "smoke_failures"),
    ("%gray-only sequences", "sequences_gray_only"),
    ("%black-only sequences", "sequences_black_only"),
    ("depth first failure", "depth_first_failure"),
    ("depth first failure (gray)", "depth_first_gray"),
    ("depth first failure (black)", "depth_first_black"),
]


def format_table(rows: list[MetricsRow]) -> str:
    """Metrics as a text table, one column per block."""
    head = ["metric"] + [r.fault for r in rows]
    body = [[name] + [_fmt(getattr(r, attr)) for r in rows] for name, attr in TABLE_FIELDS]
    widths = [max(len(line[i]) for line in [head] + body) for i in range(len(head))]
    fmt = lambda line: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(line, widths)))
    return "\n".join([fmt(head), "-" * len(fmt(head))] + [fmt(line) for line in body])


def traces_of(rec: Mapping) -> list[EnvTrace]:
    return [EnvTrace.from_dict(e["trace"]) for e in rec["ep"]]
