import pytest

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (rep.when != "call" and rep.passed):
        return
    cid, title = marker.args
    detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    prev = _CRITERIA.get(cid)
    ok = rep.passed and (prev is None or prev[1])
    _CRITERIA[cid] = (title, ok, detail or (prev[2] if prev else ""))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_CRITERIA, key=lambda c: int(c[1:])):
        title, ok, detail = _CRITERIA[cid]
        terminalreporter.write_line(f"{cid:>3} {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else ""))
