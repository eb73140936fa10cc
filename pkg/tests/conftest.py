import numpy as np
import pytest

from splitflow.demolibs import default_registry


@pytest.fixture
def demo():
    """Fresh registry plus annotated demo functions."""
    registry, lib = default_registry()
    return registry, lib


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_CRITERIA_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_CRITERIA_KEY] = {}


@pytest.fixture
def criterion(request):
    """Record one pass/fail line per acceptance criterion."""
    lines = request.config.stash[_CRITERIA_KEY]

    def report(number: int, ok, detail: str) -> None:
        status = ok if isinstance(ok, str) else ("PASS" if ok else "FAIL")
        line = f"criterion {number}: {status} {detail}"
        lines[number] = line
        print(line)

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA_KEY, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
