import numpy as np
import pytest

_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


@pytest.fixture
def verdict(request):
    """Record one criterion's outcome, print it, then assert it."""
    table = request.config.stash[_ACCEPTANCE]

    def record(n: int, ok: bool, detail: str) -> None:
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        table[n] = line
        print(line)
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter, config):
    table = config.stash.get(_ACCEPTANCE, {})
    if table:
        terminalreporter.section("acceptance")
        for n in sorted(table):
            terminalreporter.write_line(table[n])
