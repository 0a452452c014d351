import sys
from pathlib import Path

# test helpers (families, oracles) live next to the tests
sys.path.insert(0, str(Path(__file__).parent))

CRITERIA: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[num])
