import numpy as np
import pytest

_ACCEPTANCE = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def verdict():
    """Record one acceptance criterion's outcome, then assert it."""

    def record(number, name, passed, detail=""):
        line = f"ACCEPTANCE {number:>2} {'PASS' if passed else 'FAIL'}  {name}: {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        assert passed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[k])
