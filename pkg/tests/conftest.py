import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from invstab.casestudy import ieee9, load_case_study
from invstab.grid import Bus, GridNetwork, Line

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def two_bus(a: float = 1.0, m: float = 0.1, d_gen: float = 0.1, d_load: float = 0.1) -> GridNetwork:
    return GridNetwork(
        (Bus(1, "generator", 1.0, d_gen, m), Bus(2, "load", 1.0, d_load)),
        (Line(1, 2, a),),
    )


def path_grid(n: int, a: float = 2.0) -> GridNetwork:
    buses = [Bus(1, "generator", 1.0, 0.2, 0.2)] + [Bus(i, "load", 1.0, 0.3) for i in range(2, n + 1)]
    return GridNetwork(tuple(buses), tuple(Line(i, i + 1, a) for i in range(1, n)))


@pytest.fixture(scope="session")
def grid9():
    return ieee9()


@pytest.fixture(scope="session")
def case():
    return load_case_study()


@pytest.fixture(scope="session")
def desired(case):
    return case.desired


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: dict[int, str] = {}


def record(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
