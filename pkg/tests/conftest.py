"""Shared pytest wiring: prints one verdict line per acceptance check."""
from __future__ import annotations

_acceptance: list[tuple[str, str]] = []


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.rsplit("::", 1)[-1]
    _acceptance.append((name, "PASS" if report.passed else "FAIL"))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance:
        return
    terminalreporter.section("acceptance checks")
    for name, verdict in sorted(_acceptance):
        terminalreporter.write_line(f"[acceptance] {name}: {verdict}")
