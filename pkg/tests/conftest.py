"""Pytest configuration and fixtures"""

import numpy as np
import pytest
from fastapi.testclient import TestClient

from app.main import app
from app.config import settings
from app.models.network import NetworkConfig


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="Run long statistical tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long statistical reproduction, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def client():
    """Test client fixture"""
    return TestClient(app)


@pytest.fixture
def test_settings():
    """Test settings fixture"""
    return settings


@pytest.fixture
def pops44() -> NetworkConfig:
    """POPS(4,4), 16 processors"""
    return NetworkConfig(4, 4)


@pytest.fixture
def sample_permutation() -> np.ndarray:
    """4-regular routing instance on POPS(4,4)"""
    return np.array([1, 5, 8, 9, 3, 10, 11, 14, 15, 13, 0, 7, 2, 6, 12, 4], dtype=np.int64)
