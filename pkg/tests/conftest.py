import pytest

CRITERIA = {
    1: "likelihood oracle equivalence",
    2: "log-determinant identities",
    3: "posterior oracle equivalence",
    4: "regular-design posterior independence",
    5: "zero-sum constraint",
    6: "block Cholesky exactness and speed",
    7: "speedup gates",
    8: "credible-band calibration",
    9: "degenerate designs",
    10: "end-to-end determinism",
}

_outcomes = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion checked by this test")


def pytest_runtest_logreport(report):
    number = getattr(report, "criterion", None)
    if number is None:
        return
    if report.when == "call" or report.failed or report.skipped:
        state = _outcomes.setdefault(number, [])
        state.append("skip" if report.skipped else ("pass" if report.passed else "fail"))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = marker.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number, name in CRITERIA.items():
        states = _outcomes.get(number)
        if not states:
            continue
        if "fail" in states:
            verdict = "FAIL"
        elif all(s == "skip" for s in states):
            verdict = "SKIP"
        else:
            verdict = "PASS"
        terminalreporter.write_line(f"criterion {number:2d} [{verdict}] {name} ({len(states)} checks)")
