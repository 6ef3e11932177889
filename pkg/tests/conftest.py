from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sisei.constitutive import MaterialParams, OcvCurve

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running simulation tests")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def params() -> MaterialParams:
    return MaterialParams()


@pytest.fixture(scope="session")
def curve() -> OcvCurve:
    return OcvCurve.silicon()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
