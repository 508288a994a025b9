import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hkdvb.spectral import Domain, build_basis

settings.register_profile(
    "hkdvb", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("hkdvb")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def domain():
    return Domain(-10.0, 10.0)


@pytest.fixture(scope="session")
def basis16(domain):
    return build_basis(16, domain)


@pytest.fixture(scope="session")
def basis32(domain):
    return build_basis(32, domain)


ACCEPTANCE = {}


@pytest.fixture
def verdict(request):
    """``verdict(n, title, ok, detail)`` records one criterion and asserts it."""
    key = request.node.name

    def record(n, title, ok, detail):
        ACCEPTANCE[key] = (n, f"{'PASS' if ok else 'FAIL'}  criterion {n:>2}  {title}: {detail}")
        print(ACCEPTANCE[key][1])
        assert ok, detail

    yield record
    if key not in ACCEPTANCE:
        ACCEPTANCE[key] = (99, f"FAIL  {key}: did not complete")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE.values()):
        terminalreporter.write_line(line)
