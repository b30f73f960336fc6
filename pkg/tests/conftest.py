import socket
import time

import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("default")

_SESSION_START = time.perf_counter()
_CRITERIA: dict[str, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion this test checks")


@pytest.fixture(autouse=True)
def _no_network(monkeypatch):
    """Any attempt to open a real socket fails the test."""

    def refuse(*args, **kwargs):
        raise RuntimeError("network access is disabled in tests")

    monkeypatch.setattr(socket.socket, "connect", refuse)
    monkeypatch.setattr(socket, "create_connection", refuse)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    name = marker.args[0]
    entry = _CRITERIA.setdefault(name, [True, 0.0, []])
    if report.when == "call":
        entry[1] += report.duration
    if report.failed:
        entry[0] = False
        entry[2].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name in sorted(_CRITERIA, key=lambda n: int(n.split()[0][2:])):
        ok, secs, failed = _CRITERIA[name]
        status = "PASS" if ok else "FAIL"
        extra = f"  failing: {', '.join(failed)}" if failed else ""
        tr.write_line(f"{status}  {name}  ({secs:.2f}s){extra}")
    tr.write_line(f"total wall time {time.perf_counter() - _SESSION_START:.1f}s")


@pytest.fixture(scope="session")
def session_start() -> float:
    return _SESSION_START
