import pytest
from hypothesis import HealthCheck, settings

from finitekey.channel import ChannelParams, EbSourceParams
from finitekey.core import ErrorCorrectionModel
from finitekey.optimize import SecurityTargets

settings.register_profile("suite", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("suite")

_CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_CRITERIA] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed):
        return
    number, title = marker.args
    entry = item.config.stash[_CRITERIA].setdefault(number, {"title": title, "ok": True})
    entry["ok"] = entry["ok"] and not rep.failed


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_CRITERIA, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        entry = results[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if entry['ok'] else 'FAIL'}  {entry['title']}")


@pytest.fixture
def targets():
    return SecurityTargets(eps_total=1e-5, eps_EC=1e-10, f_EC=1.05)


@pytest.fixture
def ec():
    return ErrorCorrectionModel(f_EC=1.05, eps_EC=1e-10)


@pytest.fixture
def reference_channel():
    """Hardware profile used throughout: Q = 0.5 %, eta = 0.1, p_d = 1e-5."""
    def make(t=1.0, **kw):
        return ChannelParams(t=t, eta=kw.get("eta", 0.1), p_d=kw.get("p_d", 1e-5), Q=kw.get("Q", 0.005))
    return make


@pytest.fixture
def reference_source():
    def make(t=1.0, y=0.1):
        return EbSourceParams(y, ChannelParams(t=t, eta=0.1, p_d=1e-5, V=0.99))
    return make
