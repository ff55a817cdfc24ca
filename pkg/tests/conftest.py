import json
import pathlib

import numpy as np
import pytest

from axygate.designer import build_design
from axygate.physics import TrapConfig, distance_for_gradient

GOLDEN = json.loads((pathlib.Path(__file__).parent / "golden" / "golden.json").read_text())

# decoupling points found by design_gate for the 150 T/m trap (kept fixed so unit tests skip the search)
TAU_150_PI4 = (0.25288430725450955, 0.4754540601852625)


@pytest.fixture(scope="session")
def golden():
    return GOLDEN


@pytest.fixture(scope="session")
def trap150():
    return TrapConfig.from_hz(150e3, 150.0)


@pytest.fixture(scope="session")
def trap300():
    return TrapConfig.from_hz(220e3, 300.0, electrodeDistance=distance_for_gradient(300.0, (150.0, 150e-6)))


@pytest.fixture(scope="session")
def design150(trap150):
    return build_design(trap150, np.pi / 4, *TAU_150_PI4, r=3, k=2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion; lines are printed in the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(number: int, title: str, passed: bool, detail: str) -> None:
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d} {title}: {detail}"
        lines.append((number, line))
        print(line)
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
