import pytest

from qkdsim.config import Config


@pytest.fixture(scope="session")
def preset() -> Config:
    """The default (calibrated 50 km GHz link) configuration bundle."""
    return Config().validated()
