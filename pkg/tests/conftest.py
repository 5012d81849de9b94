import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import pytest

_criteria = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or not (rep.when == "call" or rep.skipped or rep.failed):
        return
    measured = "; ".join(str(v) for k, v in item.user_properties if k == "measured")
    _criteria.append((marker.args[0], rep.outcome, measured))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, measured in _criteria:
        label = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[outcome]
        terminalreporter.write_line(f"{label}  {name}" + (f"  [{measured}]" if measured else ""))
