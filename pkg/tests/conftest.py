import os

from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


import pytest  # noqa: E402

from sotest.domain import (  # noqa: E402
    Agent,
    AgentGroup,
    AgentType,
    PartitioningConstraints,
    SystemStructure,
    TriggerConstraint,
)
from sotest.envmodel import EnvironmentProfile, InfluenceFunction  # noqa: E402
from sotest.generation import PSOPP, PsoppParams, SpadaParams, SystemConfiguration  # noqa: E402


def _build_config(accs, structure, *, algorithm=PSOPP, theta=0.3, constraints=None, delta=0.0,
                  params=None, profile=None):
    """One agent group over all agents, every agent solar, a uniform influence ``delta``."""
    n = len(accs)
    profile = profile or EnvironmentProfile(("s0", "s1"), ((0.5, 0.5), (0.5, 0.5)))
    influence = InfluenceFunction({(AgentType.SOLAR, s): delta for s in profile.states})
    agents = [Agent(i, AgentType.SOLAR, 0, a) for i, a in enumerate(accs)]
    group = AgentGroup(0, frozenset(range(n)), profile, influence)
    if params is None:
        params = PsoppParams(2, 1, 0.4, 0.3, 0.3, 0.1) if algorithm == PSOPP else SpadaParams(3, 3, 3)
    return SystemConfiguration(
        agents, [group], SystemStructure.from_partitioning(structure), algorithm, params,
        TriggerConstraint(theta), constraints or PartitioningConstraints(1, n, 1, n), seed=0,
    )


@pytest.fixture
def build_config():
    return _build_config


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_log():
    def log(criterion: str, ok: bool | None, detail: str):
        status = {True: "PASS", False: "FAIL", None: "INFO"}[ok]
        line = f"[{status}] {criterion}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return log


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
