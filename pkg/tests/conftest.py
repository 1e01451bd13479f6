import numpy as np
import pytest

from curveflow.geometry import (
    BorderlineElastica,
    Circle,
    Line,
    ReferenceCurveSpec,
    build_reference,
)
from curveflow.scenarios import run_scenario, scenario_config

# criterion number -> (title, outcome, details)
_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is None:
        return
    num, title = m.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        details = "; ".join(v for k, v in item.user_properties if k == "detail")
        _CRITERIA[num] = (title, rep.outcome, details)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        title, outcome, details = _CRITERIA[num]
        tag = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{tag} criterion {num} ({title}): {details}")


class ScenarioCache:
    """Runs each shipped scenario at most once per session."""

    def __init__(self):
        self._runs = {}

    def get(self, name):
        if name not in self._runs:
            self._runs[name] = run_scenario(scenario_config(name), out_dir=None, plots=False)
        return self._runs[name]


@pytest.fixture(scope="session")
def scenarios():
    return ScenarioCache()


@pytest.fixture(scope="session")
def line():
    return build_reference(ReferenceCurveSpec(Line(), S=10, h=0.05))


@pytest.fixture(scope="session")
def elastica():
    return build_reference(ReferenceCurveSpec(BorderlineElastica(), S=20, h=0.01))


@pytest.fixture(scope="session")
def circle():
    return build_reference(ReferenceCurveSpec(Circle(1.0), N=512))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
