import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default", deadline=None,
    suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_scenario():
    """Small, fast scenario for loop-heavy tests."""
    from rifrl.env import ScenarioConfig

    return ScenarioConfig(n_v2i=2, n_v2v=3, slots_per_episode=20)
