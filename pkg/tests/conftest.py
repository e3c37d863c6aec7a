import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240617)


_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Print and collect one verdict line per acceptance criterion."""
    def emit(k, ok, detail, failures=None):
        line = f"{'PASS' if ok else 'FAIL'} criterion {k:2d}: {detail}"
        if failures:
            line += f"; failing cases: {failures[:5]}"
        _ACCEPTANCE.append(line)
        print(line)
    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
