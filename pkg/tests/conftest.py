import re

_CRITERIA = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)", report.nodeid)
    if not m:
        return
    k = int(m.group(1))
    detail = dict(report.user_properties).get("detail", "")
    failed = report.failed
    if report.when == "call" or failed:
        prev = _CRITERIA.get(k)
        if prev is None or failed:
            _CRITERIA[k] = ("FAIL" if failed else "PASS", detail or (prev[1] if prev else ""))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        status, detail = _CRITERIA[k]
        terminalreporter.write_line(f"CRITERION {k}: {status} {detail}".rstrip())
