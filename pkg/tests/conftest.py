import re

_CRITERIA = {
    1: "threshold fit from simulated gain data",
    2: "squeezing at the operating point",
    3: "power-sweep fit round trip",
    4: "loss budget",
    5: "cavity FSR, finesse and escape efficiency",
    6: "squeezing headroom",
    7: "OADEV white-noise and ramp laws",
    8: "Welch PSD level and Parseval",
    9: "spectrum fit with exclusion bands",
    10: "property suites and golden determinism",
}
_results: dict[int, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_ac(\d+)_", report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        detail = dict(report.user_properties).get("detail", "")
        _results[int(m.group(1))] = ("PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, detail = _results.get(n, ("NOT RUN", ""))
        line = f"AC{n:<2} {status:<7} {_CRITERIA[n]}"
        terminalreporter.write_line(f"{line}: {detail}" if detail else line)
