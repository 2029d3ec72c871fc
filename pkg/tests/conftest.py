from __future__ import annotations

import re

import pytest

from helpers import oracle_window


@pytest.fixture
def small_window():
    return oracle_window(6, seed=3)


# -- acceptance report -----------------------------------------------------------

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.call_report = rep


@pytest.fixture
def criterion(request):
    """Dict a criterion test fills with a one-line ``detail`` for the summary."""
    number = int(re.match(r"test_criterion_(\d+)", request.node.name).group(1))
    record = {"detail": ""}
    yield record
    rep = getattr(request.node, "call_report", None)
    status = "PASS" if rep is not None and rep.passed else "FAIL"
    if number in _ACCEPTANCE:  # parametrized criteria report every case on one line
        prev_status, prev_detail = _ACCEPTANCE[number]
        status = "FAIL" if "FAIL" in (status, prev_status) else "PASS"
        record["detail"] = f"{prev_detail}; {record['detail']}"
    _ACCEPTANCE[number] = (status, record["detail"])


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        status, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {detail}")
