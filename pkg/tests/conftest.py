import pytest

# (criterion number, passed, detail) appended by the acceptance suite
ACCEPTANCE_RESULTS: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: (r[0], r[2])):
        status = {True: "PASS", False: "FAIL", None: "SKIP"}[passed]
        terminalreporter.write_line(f"criterion {number}: {status}  {detail}")


@pytest.fixture
def record():
    def _record(number, passed, detail):
        ACCEPTANCE_RESULTS.append((number, passed, detail))
        return passed

    return _record
