"""Collects the acceptance verdict lines and prints them after the run."""

_verdicts = []


def pytest_runtest_logreport(report):
    if report.when == "call":
        _verdicts.extend(value for name, value in report.user_properties if name == "acceptance")


def pytest_terminal_summary(terminalreporter):
    if _verdicts:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(_verdicts, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
