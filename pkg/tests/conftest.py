import pytest

_RESULTS: dict[str, dict] = {}


@pytest.fixture
def record(request):
    """Store measured numbers for the acceptance summary."""
    entry = _RESULTS.setdefault(request.node.nodeid, {"title": "", "values": {}})

    def _record(title=None, **values):
        if title is not None:
            entry["title"] = title
        entry["values"].update(values)

    return _record


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid or report.when != "call":
        return
    entry = _RESULTS.setdefault(report.nodeid, {"title": "", "values": {}})
    entry["passed"] = report.passed


def pytest_terminal_summary(terminalreporter):
    rows = [(k, v) for k, v in _RESULTS.items() if "passed" in v]
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, entry in sorted(rows):
        name = nodeid.split("::")[-1]
        status = "PASS" if entry["passed"] else "FAIL"
        values = ", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in entry["values"].items())
        terminalreporter.write_line(f"{status} {name}: {entry['title']} [{values}]")
