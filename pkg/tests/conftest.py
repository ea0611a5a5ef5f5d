import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

# criterion name -> "PASS" / "FAIL", filled by tests marked with @pytest.mark.criterion
_CRITERIA = {}
# free-form lines (per-seed results etc.) echoed in the summary
ACCEPTANCE_NOTES = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion checked by this test")


def pytest_runtest_logreport(report):
    marker = dict(report.user_properties).get("criterion")
    if marker is None:
        return
    failed = report.failed
    if report.when == "call" or failed:
        prev = _CRITERIA.get(marker)
        _CRITERIA[marker] = "FAIL" if failed or prev == "FAIL" else "PASS"


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            item.user_properties.append(("criterion", m.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA and not ACCEPTANCE_NOTES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_NOTES:
        terminalreporter.write_line(line)
    for name, status in _CRITERIA.items():
        terminalreporter.write_line(f"{status}  {name}")
