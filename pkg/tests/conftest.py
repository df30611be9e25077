"""
Shared fixtures of the test suite. The packages under src/mdanet are imported
flat, the same way the mdanet script imports them.

Date: 2024-03-21
Project: MDA-Net: Multi-Dimensional Attention for Slice-wise 3D Segmentation
"""

import os
import sys

import numpy as np
import pytest

SRC_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "src", "mdanet")
sys.path.insert(0, SRC_DIR)

from tensor_engine import settings  # noqa: E402
from volume_data.phantom import PhantomConfig, synth_phantom  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow end-to-end tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end runs taking minutes to hours")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return

    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def f64():
    """Runs the test with the engine in 64-bit precision."""

    with settings.precision("f64"):
        yield


@pytest.fixture(autouse=True)
def engine_defaults():
    """Every test starts with f32 precision and anomaly detection off."""

    settings.set_precision("f32")
    settings.set_anomaly_detection(False)
    yield
    settings.set_precision("f32")
    settings.set_anomaly_detection(False)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_phantoms():
    """Four labeled zero-noise phantoms of 12x16x14 voxels."""

    return {"phantom{:03d}".format(idx): synth_phantom(idx, (12, 16, 14), cfg=PhantomConfig.zero_noise())
        for idx in range(4)}


@pytest.fixture
def script_path():
    return os.path.join(SRC_DIR, "mdanet.py")
