import pytest

VERDICTS = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[VERDICTS] = {}
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criterion")


@pytest.fixture
def verdict(request):
    """Record the outcome of one acceptance criterion and fail the test if any check failed.

    ``checks`` is a list of ``(label, ok, detail)`` triples.
    """
    store = request.config.stash[VERDICTS]

    def record(number, title, checks):
        failed = [f"{label}: {detail}" for label, ok, detail in checks if not ok]
        line = f"criterion {number} ({title}): {'PASS' if not failed else 'FAIL'}"
        if failed:
            line += " | " + "; ".join(failed)
        store[number] = line
        print(line)
        for label, ok, detail in checks:
            print(f"    [{'ok' if ok else 'FAIL'}] {label}: {detail}")
        assert not failed, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(VERDICTS, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(store):
        terminalreporter.write_line(store[number])
