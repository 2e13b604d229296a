import numpy as np
import pytest

from phase_ranging.channel import synthesize_iq
from phase_ranging.constants import SPEED_OF_LIGHT
from phase_ranging.models import ChannelRealization, ToneGrid
from phase_ranging.recovery.nn import NNBank, TrainingConfig, train_bank


@pytest.fixture
def grid() -> ToneGrid:
    return ToneGrid()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def los_channel() -> ChannelRealization:
    """Single path at 6 m."""
    return ChannelRealization(amplitudes=[1.0], delays=[6.0 / SPEED_OF_LIGHT])


@pytest.fixture
def two_path_channel() -> ChannelRealization:
    return ChannelRealization(amplitudes=[1.0, 0.5 * np.exp(0.7j)], delays=[20e-9, 35e-9])


@pytest.fixture
def noiseless_capture(los_channel, grid):
    return synthesize_iq(los_channel, grid, float("inf"), 7)


@pytest.fixture(scope="session")
def tiny_training() -> TrainingConfig:
    return TrainingConfig(
        max_width=3,
        hidden=4,
        n_train=300,
        n_validation=100,
        epochs=2,
        batch_size=100,
        chunk_size=100,
    )


@pytest.fixture(scope="session")
def tiny_bank(tiny_training) -> NNBank:
    """Interior and edge models for widths 1..3, trained for a couple of epochs."""
    return train_bank(tiny_training, 0)
