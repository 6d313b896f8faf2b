from __future__ import annotations

from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"

_acceptance: dict[str, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion check")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = dict(report.user_properties).get("acceptance")
    if marker is None:
        return
    number, title = marker
    detail = dict(report.user_properties).get("measured", "")
    _acceptance[number] = ("PASS" if report.passed else "FAIL", title, detail)


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_setup(item):
    m = item.get_closest_marker("acceptance")
    if m is not None:
        item.user_properties.append(("acceptance", (str(m.args[0]), m.args[1])))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance, key=lambda n: int(n)):
        status, title, detail = _acceptance[number]
        line = f"[{status}] criterion {number}: {title}"
        if detail:
            line += f" | {detail}"
        terminalreporter.write_line(line)


@pytest.fixture
def history_path() -> Path:
    return DATA / "bug_146309.csv"


@pytest.fixture
def history_text(history_path) -> str:
    return history_path.read_text(encoding="utf-8")
