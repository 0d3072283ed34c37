VERDICTS = []


def verdict(criterion, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion:>2}: {detail}"
    VERDICTS.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
