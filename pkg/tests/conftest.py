import pytest
from hypothesis import HealthCheck, settings

import xpmsim

settings.register_profile(
    "suite",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

# acceptance tests register (number, name, passed, detail) here; the summary
# hook prints one line per criterion at the end of the run
ACCEPTANCE_RESULTS: list[tuple[int, str, bool, str]] = []


@pytest.fixture(scope="session")
def bundle():
    return xpmsim.default_bundle()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, ok, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {num:2d} {status}  {name}: {detail}")
