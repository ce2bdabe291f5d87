import numpy as np
import pytest
from hypothesis import settings

from epidtn.config import MeetingRates, NetworkConfig

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def rates():
    """Fixed meeting rates of realistic magnitude (not estimated)."""
    return MeetingRates(lam=0.0228, mu=2.6e-4, gamma=2.586e-4, eta=1.086e-3)


@pytest.fixture(scope="session")
def cfg35():
    return NetworkConfig.reference(3, 5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting -------------------------------------------------------

_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def acceptance_report():
    """Record ``(criterion, passed, detail)``; summarized at session end."""

    def record(k: int, passed: bool, detail: str) -> None:
        _ACCEPTANCE[k] = (passed, detail)
        print(f"criterion {k}: {'PASS' if passed else 'FAIL'} - {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        passed, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if passed else 'FAIL'} - {detail}")
