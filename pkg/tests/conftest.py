import random
from importlib import resources
from pathlib import Path

import pytest
from hypothesis import strategies as st

from tracemax import topology as topo

GOLDEN = Path(__file__).parent / "golden"


def bundled(name: str) -> Path:
    return Path(str(resources.files("tracemax") / "data" / name))


def golden(name: str) -> bytes:
    return bytes.fromhex((GOLDEN / name).read_text().replace(" ", "").strip())


def random_suite(count: int, max_n: int = 40, seed: int = 2024):
    """Deterministic list of random connected topologies (some with parallel links)."""
    rng = random.Random(seed)
    out = []
    for _ in range(count):
        n = rng.randint(2, max_n)
        out.append(topo.random_connected(n, rng.randint(0, n), rng, parallel=rng.random() < 0.2))
    return out


@st.composite
def topologies(draw, max_n=12, parallel=True):
    n = draw(st.integers(1, max_n))
    extra = draw(st.integers(0, n))
    seed = draw(st.integers(0, 2**32 - 1))
    return topo.random_connected(n, extra, random.Random(seed), parallel=parallel and draw(st.booleans()))


@pytest.fixture
def fig4():
    from tracemax import IdAssignment, Topology
    return Topology.load(bundled("fig4_invalid.yaml")), IdAssignment.load(bundled("fig4_invalid_assignment.yaml"))


@pytest.fixture
def fig5():
    from tracemax import IdAssignment, Topology
    return Topology.load(bundled("fig5_bridged.yaml")), IdAssignment.load(bundled("fig5_bridged_assignment.yaml"))


_acceptance = {}


def pytest_runtest_logreport(report):
    if "acceptance" in report.keywords and (report.when == "call" or report.outcome != "passed"):
        _acceptance[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, outcome in sorted(_acceptance.items()):
        name = nodeid.split("::")[-1]
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")
