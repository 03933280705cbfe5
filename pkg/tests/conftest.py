import pytest

ACCEPTANCE: dict = {}


@pytest.fixture
def record_criterion():
    """Store and print a PASS/FAIL line for an acceptance criterion."""

    def record(k: int, ok: bool, detail: str):
        line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'} ({detail})"
        ACCEPTANCE[k] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
