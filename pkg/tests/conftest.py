import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from report import DETAILS  # noqa: E402

_RESULTS: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = _MARKS.get(report.nodeid)
    if marker is None:
        return
    number, title = marker
    _RESULTS[number] = (title, "PASS" if report.passed else "FAIL")


_MARKS: dict[str, tuple[int, str]] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _MARKS[item.nodeid] = tuple(m.args)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, outcome = _RESULTS[number]
        terminalreporter.write_line(f"criterion {number:>2} {outcome}  {title}")
        if number in DETAILS:
            terminalreporter.write_line(f"              {DETAILS[number]}")
