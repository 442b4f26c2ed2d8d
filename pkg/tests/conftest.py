import pytest
from loguru import logger

from utils.config import SimConfig


@pytest.fixture(autouse=True)
def quiet_logs():
    logger.remove()
    yield


@pytest.fixture
def config():
    """Audited runs: frame conservation is checked after every event."""
    return SimConfig(audit=True)
