import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    """Record one PASS/FAIL line per acceptance criterion (printed at the end)."""
    def report(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        _ACCEPTANCE_LINES.append((number, line))
        print(line)
    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
