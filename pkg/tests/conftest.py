import os
from collections import defaultdict

import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=100)
settings.register_profile("ci", deadline=None, max_examples=30)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

_ACCEPTANCE = defaultdict(list)


class _Recorder:
    """Collects acceptance sub-checks for one test; ``verify`` asserts them."""

    def __init__(self):
        self.failures = []

    def __call__(self, criterion: int, label: str, status, detail: str = ""):
        if not isinstance(status, str):
            status = "PASS" if status else "FAIL"
        _ACCEPTANCE[criterion].append((label, status, detail))
        if status == "FAIL":
            self.failures.append(f"criterion {criterion} [{label}]: {detail}")

    def verify(self):
        assert not self.failures, "; ".join(self.failures)


@pytest.fixture
def acceptance():
    """Record PASS/FAIL/SKIP sub-checks; call ``acceptance.verify()`` last."""
    return _Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_ACCEPTANCE):
        checks = _ACCEPTANCE[crit]
        statuses = {s for _, s, _ in checks}
        overall = "FAIL" if "FAIL" in statuses else ("SKIP" if statuses == {"SKIP"} else "PASS")
        failed = [label for label, s, _ in checks if s == "FAIL"]
        suffix = f" (failing: {'; '.join(failed)})" if failed else ""
        terminalreporter.write_line(f"criterion {crit:2d}: {overall}{suffix}")
        for label, status, detail in checks:
            terminalreporter.write_line(f"    {status:4s} {label}: {detail}")
