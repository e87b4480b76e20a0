import numpy as np
import pytest

# Filled by tests/test_acceptance.py: criterion -> (status, detail).
ACCEPTANCE = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        status, detail = ACCEPTANCE[crit]
        terminalreporter.write_line(f"criterion {crit:2d}: {status:4s} {detail}")
