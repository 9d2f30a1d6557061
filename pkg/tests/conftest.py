import numpy as np
import pytest

from qaflora import kernels
from qaflora.adapter import AdapterRegistry
from qaflora.toy import make_toy_adapter, make_toy_model

from helpers import toy_config


@pytest.fixture(scope="session")
def toy_model():
    return make_toy_model(7, toy_config())


@pytest.fixture(scope="session")
def toy_adapters(toy_model):
    return [make_toy_adapter(100 + j, toy_model, rank=4, scale=4.0, magnitude=0.5,
                             adapter_id=f"ad{j}") for j in range(2)]


@pytest.fixture
def registry(toy_adapters):
    return AdapterRegistry(toy_adapters)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    with kernels.backend_scope(request.param):
        yield request.param



_acceptance = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and (report.when == "call" or report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        if report.when == "call" or name not in _acceptance:
            _acceptance[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance):
        mark = "PASS" if _acceptance[name] == "passed" else "FAIL"
        terminalreporter.write_line(f"[{mark}] {name}")
