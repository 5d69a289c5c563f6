import pytest

ACCEPTANCE = pytest.StashKey[dict]()
CRITERIA = 10


class AcceptanceRecorder:
    """Collects one pass/fail line per acceptance criterion."""

    def __init__(self, store):
        self.store = store

    def __call__(self, number, title, ok, detail):
        status = "PASS" if ok else "FAIL"
        line = f"criterion {number:2d} {status}: {title} | {detail}"
        self.store[number] = line
        print(line)
        assert ok, line


@pytest.fixture
def acceptance(request):
    return AcceptanceRecorder(request.config.stash.setdefault(ACCEPTANCE, {}))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(ACCEPTANCE, None)
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in range(1, CRITERIA + 1):
        terminalreporter.write_line(store.get(number, f"criterion {number:2d} NOT RUN"))
