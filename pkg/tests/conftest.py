"""Shared helpers: acceptance-criterion verdict lines that survive capture."""

_CRITERIA = []


def criterion(name: str, passed: bool, detail: str = ""):
    """Record one acceptance verdict, print it, and assert it."""
    line = f"[{'PASS' if passed else 'FAIL'}] {name}" + (f" -- {detail}" if detail else "")
    _CRITERIA.append(line)
    print(line)
    assert passed, line


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
