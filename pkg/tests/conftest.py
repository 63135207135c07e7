import pytest

_criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        _criteria[number] = (title, rep.passed, detail, rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_criteria):
        title, passed, detail, seconds = _criteria[number]
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {title} ({seconds:.1f}s)"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)
