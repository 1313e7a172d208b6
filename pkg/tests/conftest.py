import pytest

from prover.config import ScheduleConfig
from tests.helpers import accept_all, mock_checker, sample_theorem


@pytest.fixture
def theorem():
    return sample_theorem()


@pytest.fixture
def schedule():
    return ScheduleConfig(seed=7)


@pytest.fixture
def permissive_checker():
    """Mock checker that accepts any proof (placeholder and statement gates still apply)."""
    return mock_checker(accept_all())


@pytest.fixture
def rejecting_checker():
    return mock_checker({})
