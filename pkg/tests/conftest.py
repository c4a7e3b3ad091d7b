import pytest

ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line; the terminal summary prints them in order."""
    def record(number, passed, detail):
        ACCEPTANCE[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        print(ACCEPTANCE[number])
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
