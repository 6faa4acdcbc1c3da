import functools

import pytest
from hypothesis import HealthCheck, settings

from acsalign.channel import Scheme, draw_channels
from acsalign.pipeline import design_for_draw

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE_LINES: list[str] = []


@functools.lru_cache(maxsize=None)
def cached_design(p: int, seed: int, scheme: str = "acs"):
    return design_for_draw(draw_channels(p, seed), Scheme(scheme))


@pytest.fixture(scope="session")
def design():
    """Factory for memoised :class:`LinkDesign` objects keyed by ``(p, seed, scheme)``."""
    return cached_design


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
