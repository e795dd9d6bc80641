import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mintime import planar
from mintime.catalog import catalog

settings.register_profile(
    "default", max_examples=40, deadline=None, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

LINEAR = ("double-integrator", "triple-integrator", "harmonic", "double-integrator-2input")


@pytest.fixture(scope="session")
def di():
    return catalog("double-integrator")


@pytest.fixture(scope="session")
def ti():
    return catalog("triple-integrator")


@pytest.fixture(scope="session")
def harmonic():
    return catalog("harmonic")


@pytest.fixture(scope="session")
def linear_systems():
    return {name: catalog(name) for name in LINEAR}


@pytest.fixture(scope="session")
def pendulum():
    return planar.pendulum_like()


@pytest.fixture(scope="session")
def planar_di():
    """x1' = x2, x2' = u written as a planar system; T has a closed form."""
    return planar.load_planar({"F": ["x2", 0], "G": [[0, 1]], "box": [[-1, 1], [-1, 1]], "name": "planar-di"})


def unit_vectors(rng, n, dim):
    Z = rng.standard_normal((n, dim))
    return Z / np.linalg.norm(Z, axis=1, keepdims=True)


# --- acceptance summary -----------------------------------------------------------

ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """criterion(k, ok, detail) records one pass/fail line for the acceptance summary."""

    def record(k, ok, detail):
        line = f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE[k] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    reports = [r for key in ("passed", "failed", "error") for r in terminalreporter.stats.get(key, [])]
    ran = {r.nodeid.split("criterion_")[1].split("_")[0] for r in reports if "test_acceptance.py::test_criterion_" in r.nodeid}
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for k in range(1, 11):
        missing = "FAIL  (did not complete)" if str(k) in ran else "not run"
        terminalreporter.write_line(ACCEPTANCE.get(k, f"criterion {k:>2}: {missing}"))
