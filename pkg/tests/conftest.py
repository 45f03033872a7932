import contextlib

import pytest

# criterion number -> (passed, detail), filled by tests/test_acceptance.py
CRITERIA = {}


@contextlib.contextmanager
def criterion(number, title):
    """Record pass/fail of one acceptance criterion; failures still raise."""
    info = {"detail": ""}
    try:
        yield info
    except BaseException:
        CRITERIA[number] = (False, title, info["detail"])
        raise
    CRITERIA[number] = (True, title, info["detail"])


@pytest.fixture
def record_criterion():
    return criterion


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(CRITERIA):
        ok, title, detail = CRITERIA[num]
        line = f"criterion {num:2d} {'PASS' if ok else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
