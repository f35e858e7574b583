import pytest


def pytest_configure(config):
    config._criteria = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(n, ok, detail)`` prints, stores and asserts."""
    lines = request.config._criteria

    def record(n: int, ok: bool, detail: str) -> None:
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({detail})"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_criteria", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
