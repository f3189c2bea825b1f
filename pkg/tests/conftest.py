import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tsparametrix import holder_coefficients, isotropic_stable

settings.register_profile("pkg", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("pkg")


@pytest.fixture(scope="session")
def holder_model():
    """alpha = 1.2 driver, sigma(x) = 1 + 0.5 (1 ^ |x|^0.5), drift 0.3 sin(x)."""
    return isotropic_stable(1, 1.2), holder_coefficients(1, 1.0, 0.5, 0.5, 0.3)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report_line():
    """Record one acceptance line; printed in the terminal summary."""
    def record(number: int, passed: bool, detail: str) -> None:
        ACCEPTANCE_LINES.append(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
