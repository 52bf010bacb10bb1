from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
DATA = Path(__file__).resolve().parent / "data"
SCENARIOS = ROOT / "scenarios"

_CRITERIA: list[str] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(number, title)`` then ``.detail(...)`` as values come in."""

    class Line:
        def __init__(self):
            self.number, self.title, self.details = None, "", []

        def __call__(self, number, title):
            self.number, self.title = number, title
            return self

        def detail(self, text):
            self.details.append(text)

    line = Line()
    yield line
    rep = getattr(request.node, "rep_call", None)
    ok = rep is not None and rep.passed
    text = f"[{'PASS' if ok else 'FAIL'}] criterion {line.number}: {line.title}"
    if line.details:
        text += " | " + "; ".join(line.details)
    _CRITERIA.append(text)
    print(text)


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for text in sorted(_CRITERIA, key=lambda t: int(t.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(text)
