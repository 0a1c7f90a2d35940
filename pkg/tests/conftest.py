import numpy as np
import pytest

from hcdiff import Grid, IslandSpec, assemble_system

# name -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def make_system():
    cache = {}

    def make(nx, m, rects=((2, 2, 2, 2),)):
        key = (nx, float(m), tuple(map(tuple, rects)))
        if key not in cache:
            cache[key] = assemble_system(Grid(nx), IslandSpec(tuple(rects), m=m))
        return cache[key]

    return make
