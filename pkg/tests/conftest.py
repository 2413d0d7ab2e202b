import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("suite", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")


@pytest.fixture(scope="session")
def default_run():
    """Converged periodic orbit of the shipped default configuration."""
    from periodic_cns.config import RunConfig
    from periodic_cns.driver import run_single
    return run_single(RunConfig())


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
