import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=int(os.environ.get("HYPOTHESIS_MAX_EXAMPLES", "60")),
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

_ACCEPTANCE: list[str] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(tag, title): acceptance criterion reported in the summary")


@pytest.fixture
def detail(request):
    """Free-form measurements shown next to an acceptance criterion's verdict."""
    d = {}
    request.node._ac_detail = d
    return d


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    tag, title = marker.args
    d = getattr(item, "_ac_detail", {})
    extra = ", ".join(f"{k}={v}" for k, v in d.items())
    verdict = "PASS" if rep.passed else "FAIL"
    line = f"{tag} {verdict}: {title}" + (f" [{extra}]" if extra else "")
    _ACCEPTANCE.append(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
