import os
import re
import sys

sys.path.insert(0, os.path.dirname(__file__))

CRITERIA = {
    1: "Rice first moment, gaussian y=0 t=1",
    2: "trig N=1 gives exactly 2 roots",
    3: "trig mean root count at N=100",
    4: "trig limiting variance at N=200",
    5: "second factorial moment, gaussian y=0 t=1",
    6: "Geman classifiers agree on the catalog",
    7: "Hermite/Mehler property suite",
    8: "KSS zero counts on the circle",
    9: "KSS nodal length on the 2-sphere",
    10: "dislocation density of random waves",
    11: "nodal length density of random waves",
    12: "local time estimators, fractional field",
    13: "KSS scaled limits at n=10^4",
}

_PATTERN = re.compile(r"test_criterion_(\d+)")
_outcomes: dict[int, list[bool]] = {}


def pytest_runtest_logreport(report):
    m = _PATTERN.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or report.outcome != "passed":
        _outcomes.setdefault(int(m.group(1)), []).append(report.outcome == "passed")


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for k, name in CRITERIA.items():
        if k not in _outcomes:
            continue
        status = "PASS" if all(_outcomes[k]) else "FAIL"
        terminalreporter.write_line(f"criterion {k:2d}: {status}  {name}")
