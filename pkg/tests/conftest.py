"""Per-criterion reporting for the acceptance suite.

Tests marked ``@pytest.mark.criterion(n, "title")`` are collected into one
PASS/FAIL line per criterion at the end of the run, together with any
measured values they attach through ``record_property``.
"""

import pytest

_results = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _results.setdefault(number, {"title": title, "passed": True, "ran": False, "notes": []})
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        entry["ran"] = True
        if report.outcome != "passed":
            entry["passed"] = False
        if report.when == "call":
            entry["notes"].extend(f"{k}={v}" for k, v in report.user_properties)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        entry = _results[number]
        status = "PASS" if entry["passed"] and entry["ran"] else "FAIL"
        line = f"criterion {number}: {status}  {entry['title']}"
        terminalreporter.write_line(line)
        for note in entry["notes"]:
            terminalreporter.write_line(f"    {note}")
