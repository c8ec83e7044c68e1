import numpy as np
import pytest

# acceptance verdicts, filled by tests/test_acceptance.py and echoed at the end
ACCEPTANCE = {}


def record(criterion: int, ok: bool, detail: str = "") -> None:
    line = f"CRITERION {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
    ACCEPTANCE[criterion] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
