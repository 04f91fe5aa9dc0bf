"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""

from collections import OrderedDict

import pytest

_OUTCOMES = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        cid, title = mark.args
        entry = _OUTCOMES.setdefault(cid, {"title": title, "failed": [], "passed": []})
        (entry["passed"] if rep.passed else entry["failed"]).append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for cid, entry in sorted(_OUTCOMES.items(), key=lambda kv: kv[0]):
        status = "FAIL" if entry["failed"] else "PASS"
        line = f"{status}  criterion {cid}: {entry['title']}"
        if entry["failed"]:
            line += f"  (failing: {', '.join(entry['failed'])})"
        terminalreporter.write_line(line)
