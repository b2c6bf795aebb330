import pytest

_criteria: dict[int, tuple[str, str, float]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    number, title = mark.args
    prev = _criteria.get(number)
    status = "PASS" if rep.passed else "FAIL"
    if prev is not None:
        status = "FAIL" if "FAIL" in (prev[1], status) else "PASS"
        duration = prev[2] + rep.duration
    else:
        duration = rep.duration
    _criteria[number] = (title, status, duration)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, status, duration = _criteria[number]
        terminalreporter.write_line(f"criterion {number} [{status}] {title} ({duration:.1f} s)")
