"""Shared pytest wiring. Tests tagged with the `criterion` marker get one
PASS/FAIL line each in the terminal summary, so an acceptance run reports
every checked property on its own line."""

import pytest


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "criterion(label): system-level acceptance property verified by this test",
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        report.user_properties.append(("criterion", marker.args[0]))


def pytest_terminal_summary(terminalreporter):
    rows = []
    for status, word in (("passed", "PASS"), ("failed", "FAIL"), ("error", "FAIL")):
        for report in terminalreporter.stats.get(status, []):
            for key, label in getattr(report, "user_properties", ()):
                if key == "criterion":
                    rows.append((word, label))
    if rows:
        terminalreporter.write_sep("-", "acceptance criteria")
        for word, label in rows:
            terminalreporter.write_line(f"{word}: {label}")
