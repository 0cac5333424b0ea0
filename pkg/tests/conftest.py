import math

import pytest

from heatbv.space import CircleGrid, LineGrid, build_space

SQRT_PI = math.sqrt(math.pi)


@pytest.fixture(scope="session")
def line4096():
    return build_space(LineGrid(-8.0, 8.0, 4096))


@pytest.fixture(scope="session")
def circle256():
    return build_space(CircleGrid(1.0, 256))


@pytest.fixture(scope="session")
def circle2048():
    return build_space(CircleGrid(1.0, 2048))


@pytest.fixture(scope="session")
def circle4096():
    return build_space(CircleGrid(1.0, 4096))


# acceptance verdicts, printed after the run even when output is captured
ACCEPTANCE: dict[str, str] = {}


def record_acceptance(key: str, ok: bool, detail: str) -> None:
    line = f"{key} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE[key] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:])):
        terminalreporter.write_line(ACCEPTANCE[key])
