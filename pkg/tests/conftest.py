from __future__ import annotations

import pytest

from sddroute.model import ScenarioConfig
from sddroute.network import Network


def line_network(n: int, step_s: float = 10.0, depots=()) -> Network:
    """Bidirectional path 0 - 1 - ... - n-1 with equal arc times."""
    coords = {i: (i * 100.0, 0.0) for i in range(n)}
    arcs = {}
    for i in range(n - 1):
        arcs[(i, i + 1)] = arcs[(i + 1, i)] = int(step_s * 1000)
    return Network(coords, arcs, list(depots))


@pytest.fixture
def line():
    return line_network


def small_config(**kw) -> ScenarioConfig:
    params = dict(fleet_size=1, capacity=6, max_trip_size=6, depots_per_order=1, day_end=2000.0,
                  quiet_tail=0.0, epoch_length=100.0, tripgen_timeout=60.0, ilp_budget=60.0)
    params.update(kw)
    return ScenarioConfig(**params)


CRITERIA: list[str] = []


@pytest.fixture(scope="session")
def verdict():
    """Record one PASS/FAIL line per acceptance criterion; printed in the terminal summary."""
    def record(name: str, ok: bool, detail: str = "") -> bool:
        CRITERIA.append(f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else ""))
        print(CRITERIA[-1])
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA:
            terminalreporter.write_line(line)
