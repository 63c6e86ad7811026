import pytest

_KEY = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record ``(criterion, passed, detail)`` for the end-of-run summary."""
    store = request.config.stash.setdefault(_KEY, {})

    def record(n, passed, detail):
        store[n] = (bool(passed), detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_KEY, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(store):
        passed, detail = store[n]
        terminalreporter.write_line(f"ACCEPTANCE criterion {n}: {'PASS' if passed else 'FAIL'} ({detail})")
