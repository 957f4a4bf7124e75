import pytest

# one line per acceptance criterion, printed in the terminal summary
_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def record():
    def _record(criterion: int, ok: bool | None, detail: str) -> bool | None:
        status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        _ACCEPTANCE[criterion] = f"{status}  criterion {criterion:>2}: {detail}"
        print(_ACCEPTANCE[criterion])
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[key])
