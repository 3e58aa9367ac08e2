import re

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    key = (int(m.group(1)), m.group(2))
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        if report.skipped:
            reason = report.longrepr[2] if isinstance(report.longrepr, tuple) else ""
            _ACCEPTANCE[key] = f"SKIP ({reason.removeprefix('Skipped: ')})"
        else:
            status = "PASS" if report.passed else "FAIL"
            # parametrized criteria: any failing case fails the criterion
            if _ACCEPTANCE.get(key) != "FAIL":
                _ACCEPTANCE[key] = status


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for (num, name), status in sorted(_ACCEPTANCE.items()):
        terminalreporter.write_line(f"criterion {num:2d} {name}: {status}")
