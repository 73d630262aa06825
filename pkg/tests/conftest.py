"""Per-criterion pass/fail lines at the end of the run."""
from collections import defaultdict

_OUTCOMES: dict[int, list[tuple[str, bool]]] = defaultdict(list)
_CRITERION = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            _CRITERION[item.nodeid] = int(mark.args[0])


def pytest_runtest_logreport(report):
    n = _CRITERION.get(report.nodeid)
    if n is None:
        return
    if report.when == "call" or report.outcome != "passed":
        _OUTCOMES[n].append((report.nodeid.split("::")[-1], report.outcome == "passed"))


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_OUTCOMES):
        runs = _OUTCOMES[n]
        ok = all(p for _, p in runs)
        failed = [name for name, p in runs if not p]
        tail = "" if ok else "  (failed: " + ", ".join(failed) + ")"
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}{tail}")
