import pytest

from btcnetsim.config import LinkSpec, MinerConfig, ScenarioConfig, TopologySpec
from btcnetsim.mining import Auto, Fixed


def small_config(**kw):
    """Three-node mesh, 2-second blocks, a few hundred blocks."""
    base = dict(
        name="small",
        seed=11,
        nodes=3,
        duration=600.0,
        miners=[MinerConfig(i, cpus=1.0) for i in range(3)],
        difficulty=Auto(2.0),
        links=LinkSpec(latency=0.1),
        sample_every=50.0,
    )
    base.update(kw)
    return ScenarioConfig(**base)


@pytest.fixture
def small():
    return small_config()


def mesh5(**kw):
    base = dict(
        name="mesh5",
        seed=5,
        nodes=5,
        topology=TopologySpec("mesh"),
        miners=[MinerConfig(i, cpus=10.0) for i in range(5)],
        difficulty=Fixed(0.01),
        block_cap=200,
        links=LinkSpec(latency=0.01),
    )
    base.update(kw)
    return ScenarioConfig(**base)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(capsys):
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(number, title, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {title} | {detail}"
        ACCEPTANCE_LINES.append((number, line))
        with capsys.disabled():
            print("\n" + line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
