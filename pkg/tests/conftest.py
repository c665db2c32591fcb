import pytest

_LINES: list[str] = []


class Criterion:
    """Collects named sub-checks for one acceptance criterion."""

    def __init__(self, number):
        self.number = number
        self.checks: list[tuple[str, bool, str]] = []
        self.finished = False

    def check(self, name, ok, detail=""):
        self.checks.append((name, bool(ok), detail))
        return ok

    def line(self):
        if not self.finished:
            return f"criterion {self.number}: ERROR (stopped before all checks ran)"
        failed = [c for c in self.checks if not c[1]]
        status = "FAIL" if failed else "PASS"
        shown = failed or self.checks
        body = "; ".join(f"{n}{' ' + d if d else ''}" for n, _, d in shown)
        return f"criterion {self.number}: {status} ({len(self.checks) - len(failed)}/{len(self.checks)} checks) {body}"

    def finish(self):
        self.finished = True
        failed = [f"{n} {d}".strip() for n, ok, d in self.checks if not ok]
        assert not failed, "; ".join(failed)


@pytest.fixture
def criterion(request):
    number = request.node.name.split("_")[2]
    rec = Criterion(number)
    yield rec
    _LINES.append(rec.line())


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
