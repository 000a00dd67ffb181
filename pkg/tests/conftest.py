"""Shared test configuration.

Gradient and oracle comparisons need 64-bit arithmetic; the whole suite
runs with the engine's default dtype pinned to float64.
"""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from facemark.autodiff import set_default_dtype

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(scope="session", autouse=True)
def _float64_engine():
    set_default_dtype(np.float64)
    yield
    set_default_dtype(np.float32)
