import pytest

# one line per acceptance criterion, filled in by test_acceptance.py
CRITERIA_LINES = []


@pytest.fixture
def report_criterion():
    def record(number, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        CRITERIA_LINES.append(line)
        print(line)
        return passed

    def note(text):
        CRITERIA_LINES.append(f"  note: {text}")
        print(text)

    record.note = note
    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA_LINES:
            terminalreporter.write_line(line)
