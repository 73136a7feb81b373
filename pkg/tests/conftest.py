import sys


def pytest_terminal_summary(terminalreporter):
    # one line per acceptance criterion, whichever way the run went
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
