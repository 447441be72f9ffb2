import pytest

_CRITERIA: dict[int, str] = {}


def record_criterion(number: int, title: str, passed: bool, detail: str, seconds: float, limit: float):
    """Remember one acceptance line; it is echoed immediately and again in the terminal summary."""
    status = "PASS" if passed and seconds <= limit else "FAIL"
    line = f"criterion {number} [{status}] {title}: {detail} ({seconds:.1f}s, limit {limit:.0f}s)"
    _CRITERIA[number] = line
    print(line)
    return status == "PASS"


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[k])


@pytest.fixture
def criterion():
    return record_criterion
