import acceptance_log


def pytest_terminal_summary(terminalreporter):
    if not acceptance_log.CHECKS:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance_log.report_lines():
        terminalreporter.write_line(line)
