import pytest

# criterion number -> (passed, one-line detail), filled by test_acceptance.py
CRITERIA: dict = {}


@pytest.fixture
def record_criterion():
    def record(number, title, checks):
        failed = [c for c in checks if not c.passed]
        if failed:
            detail = "; ".join(f"{c.name}: {c.value:.4g} vs {c.threshold:.4g} {c.detail}".strip() for c in failed)
        else:
            detail = f"{len(checks)} checks"
        CRITERIA[number] = (not failed, f"{title}: {detail}")
        return not failed
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        ok, line = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {line}")
