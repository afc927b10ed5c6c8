import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import helpers  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if not helpers.CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(helpers.CRITERIA):
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {title} - {detail}")
