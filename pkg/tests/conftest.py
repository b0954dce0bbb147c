"""Collects one summary line per acceptance criterion and prints them at the end."""

import re

ACCEPTANCE = {}
_selected = set()


def record(num: int, title: str, passed: bool, detail: str) -> str:
    line = f"[{num:2d}] {'PASS' if passed else 'FAIL'} {title}: {detail}"
    ACCEPTANCE[num] = line
    print(line)
    return line


def pytest_collection_finish(session):
    for item in session.items:
        m = re.match(r"test_(\d+)_", item.name)
        if m and item.get_closest_marker("acceptance"):
            _selected.add(int(m.group(1)))


def pytest_terminal_summary(terminalreporter):
    if not _selected:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_selected):
        terminalreporter.write_line(ACCEPTANCE.get(k, f"[{k:2d}] FAIL errored before reporting"))
