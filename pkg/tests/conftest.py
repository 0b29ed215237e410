import numpy as np
import pytest
from hypothesis import settings, HealthCheck

settings.register_profile(
    "ci",
    max_examples=40,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


# Acceptance-criterion bookkeeping: each acceptance test appends a record and
# the summary is printed at the end of the run whether or not -s was given.
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    tw = terminalreporter
    tw.section("acceptance criteria")
    for rec in sorted(ACCEPTANCE_RESULTS, key=lambda r: r["criterion"]):
        status = "PASS" if rec["passed"] else "FAIL"
        tw.write_line(
            f"criterion {rec['criterion']:>2}: {status}  {rec['detail']}  [{rec['seconds']:.1f}s]"
        )
