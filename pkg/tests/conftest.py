import pytest

_ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record a one-line pass/fail outcome for an acceptance criterion."""
    name = request.node.name.split("_")[1].upper()
    entry = {"detail": "", "passed": False}
    _ACCEPTANCE[name] = entry

    def note(detail):
        entry["detail"] = detail

    yield note
    rep = getattr(request.node, "rep_call", None)
    entry["passed"] = bool(rep and rep.passed)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE, key=lambda n: int(n[1:])):
        e = _ACCEPTANCE[name]
        terminalreporter.write_line(f"{name} {'PASS' if e['passed'] else 'FAIL'}  {e['detail']}")
