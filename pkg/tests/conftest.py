"""Shared fixtures; BLAS pools are pinned before numpy is imported."""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

from utils.environment import pin_threads

pin_threads(1)

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from core.models import ArchConfig  # noqa: E402
from utils.config import TrainConfig  # noqa: E402


@pytest.fixture
def rng():
    """Seeded generator so every test draws the same numbers."""
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_arch():
    """Smallest admissible architecture for forward/backward tests."""
    return ArchConfig(base_channels=4, resolution=32, ms_channels=8, disc_channels=8)


@pytest.fixture
def tiny_config():
    """Training config matching tiny_arch with a short step budget."""
    return TrainConfig(steps=4, batch_size=2, base_channels=4, resolution=32, ms_channels=8,
                       disc_channels=8, checkpoint_interval=2, log_every=2)
