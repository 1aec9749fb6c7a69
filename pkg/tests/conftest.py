import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("repo", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    mods = [m for name, m in list(sys.modules.items()) if name.endswith("test_acceptance")]
    results = getattr(mods[0], "RESULTS", {}) if mods else {}
    if results:
        terminalreporter.section("acceptance criteria")
        for key in sorted(results, key=lambda k: int(k[2:])):
            terminalreporter.write_line(results[key])
