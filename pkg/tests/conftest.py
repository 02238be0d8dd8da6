import pytest

_ACCEPTANCE: list[tuple[str, str, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        detail = getattr(item, "acceptance_detail", "")
        _ACCEPTANCE.append((marker.args[0], "PASS" if rep.passed else "FAIL", detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, verdict, detail in _ACCEPTANCE:
        line = f"[{verdict}] {name}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
