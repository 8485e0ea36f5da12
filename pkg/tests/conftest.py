import json

import pytest

_CRITERIA: dict[str, dict] = {}


@pytest.fixture
def record(request):
    """Attach measured values to the running acceptance test for the summary table."""
    def _record(**values):
        for k, v in values.items():
            request.node.user_properties.append((k, v))
    return _record


def pytest_runtest_logreport(report):
    if "acceptance" not in report.keywords:
        return
    entry = _CRITERIA.setdefault(report.nodeid, {"outcome": "passed", "values": {}})
    if report.failed:
        entry["outcome"] = "failed"
    elif report.skipped and report.when in ("setup", "call"):
        entry["outcome"] = "skipped"
    entry["values"].update(dict(report.user_properties))


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return json.dumps(v) if isinstance(v, dict) else str(v)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid in sorted(_CRITERIA):
        entry = _CRITERIA[nodeid]
        name = nodeid.split("::")[-1].removeprefix("test_")
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[entry["outcome"]]
        detail = "; ".join(f"{k}={_fmt(v)}" for k, v in entry["values"].items())
        terminalreporter.write_line(f"{status} {name}: {detail}")
