import pytest

_RESULTS: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not rep.failed:
        return
    number, title = mark.args
    entry = _RESULTS.setdefault(number, {"title": title, "passed": True, "detail": ""})
    entry["passed"] = entry["passed"] and rep.passed
    entry["detail"] = getattr(item, "_acceptance_detail", entry["detail"])


@pytest.fixture
def detail(request):
    """Attach a one-line summary of measured values to the criterion report."""

    def record(text: str):
        request.node._acceptance_detail = text

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        r = _RESULTS[number]
        status = "PASS" if r["passed"] else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:2d}. {r['title']}: {r['detail']}")
