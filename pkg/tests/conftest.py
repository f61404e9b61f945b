import pytest

_VERDICTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def verdict():
    """Record one acceptance line: verdict(n, passed, detail)."""

    def record(number: int, passed: bool, detail: str) -> bool:
        _VERDICTS[number] = (bool(passed), detail)
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        ok, detail = _VERDICTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
