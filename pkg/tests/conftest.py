import numpy as np
import pytest

from carbonsched.core import FlexClass, ProblemConfig
from carbonsched.fleets import ci_fleet
from carbonsched.scenarios import generate_load_samples

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion covered by the test")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when != "call":
        return
    n, title = marker.args
    entry = _CRITERIA.setdefault(n, {"title": title, "ok": True, "tests": 0})
    entry["tests"] += 1
    if call.excinfo is not None:
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        e = _CRITERIA[n]
        status = "PASS" if e["ok"] else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d} {status}  {e['title']} ({e['tests']} checks)")


@pytest.fixture(scope="session")
def ci():
    config, spec = ci_fleet()
    return config, spec


@pytest.fixture(scope="session")
def ci_config(ci):
    return ci[0]


@pytest.fixture(scope="session")
def ci_train(ci):
    return generate_load_samples(ci[1], 10)


@pytest.fixture(scope="session")
def ci_validation(ci):
    return generate_load_samples(ci[1], 15, first_id=1001)


def toy_config(beta=0.5, epsilon=0.05, capacity=2.0):
    """K=2, C=1, h=1, D=1: four admissible schedule cells, T=3."""
    return ProblemConfig(
        K=2,
        D=1,
        classes=(FlexClass(1, 1, (1,)),),
        true_capacity=np.full((3, 1), capacity),
        carbon_price=np.array([[1.0], [0.5], [0.8]]),
        infra_price=np.array([1.0]),
        beta=beta,
        epsilon=epsilon,
        name="toy",
    )


@pytest.fixture
def toy():
    return toy_config()


TOY_SAMPLES = np.array([[[1.0], [0.6]], [[0.8], [1.0]]])
