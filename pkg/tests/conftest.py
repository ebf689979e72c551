import pytest

_RESULTS: dict[int, tuple[bool, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number reported in the summary")


@pytest.fixture
def report_criterion():
    """Record and print ``CRITERION n: PASS/FAIL detail`` for the summary."""

    def record(number: int, passed: bool, detail: str) -> None:
        _RESULTS[number] = (bool(passed), detail)
        print(f"CRITERION {number}: {'PASS' if passed else 'FAIL'} {detail}")

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    n = marker.args[0]
    if n not in _RESULTS:
        reason = str(call.excinfo.value).splitlines()[0] if call.excinfo else "no result recorded"
        _RESULTS[n] = (False, f"(raised before reporting: {reason})")
    elif report.failed and _RESULTS[n][0]:
        _RESULTS[n] = (False, _RESULTS[n][1] + " (test failed after reporting)")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        passed, detail = _RESULTS[n]
        terminalreporter.write_line(f"CRITERION {n}: {'PASS' if passed else 'FAIL'} {detail}")
