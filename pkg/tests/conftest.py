"""Shared fixtures; the acceptance suite reports one line per criterion at the end of the run."""

import time

import pytest

ACCEPTANCE_LINES: dict[int, str] = {}


class Criterion:
    def __init__(self, number: int, title: str, budget_s: float):
        self.number, self.title, self.budget_s = number, title, budget_s
        self.checks: list[tuple[str, bool]] = []
        self.start = time.perf_counter()

    def check(self, label: str, ok) -> bool:
        self.checks.append((label, bool(ok)))
        return bool(ok)

    def finish(self) -> None:
        elapsed = time.perf_counter() - self.start
        self.check(f"runtime {elapsed:.1f}s < {self.budget_s:g}s", elapsed < self.budget_s)
        ok = all(passed for _, passed in self.checks)
        failed = [label for label, passed in self.checks if not passed]
        detail = "; ".join(label for label, _ in self.checks) if ok else "FAILED: " + "; ".join(failed)
        ACCEPTANCE_LINES[self.number] = f"[{'PASS' if ok else 'FAIL'}] {self.number:>2}. {self.title}: {detail}"
        assert ok, ACCEPTANCE_LINES[self.number]


@pytest.fixture
def criterion(request):
    made = []

    def factory(number, title, budget_s):
        c = Criterion(number, title, budget_s)
        made.append(c)
        return c

    return factory


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
