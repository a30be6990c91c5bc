import pytest

_OUTCOMES: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, name): acceptance criterion reported in the summary")


def pytest_runtest_logreport(report):
    item_marker = dict(report.user_properties).get("criterion")
    if item_marker is None:
        return
    number, name = item_marker
    detail = dict(report.user_properties).get("detail", "")
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _OUTCOMES[number] = (name, "PASS" if report.passed else "FAIL", detail)


@pytest.fixture(autouse=True)
def _criterion_tag(request, record_property):
    marker = request.node.get_closest_marker("criterion")
    if marker is not None:
        record_property("criterion", tuple(marker.args))


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        name, status, detail = _OUTCOMES[number]
        line = f"{status} [{number:2d}] {name}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))
