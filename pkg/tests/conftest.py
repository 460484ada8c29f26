import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the one-line acceptance results after the test run."""
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "REPORT_LINES", ()) if module else ()
    if lines:
        terminalreporter.write_sep("-", "acceptance results")
        for line in lines:
            terminalreporter.write_line(line)
