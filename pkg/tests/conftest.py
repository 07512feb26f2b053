"""
Shared fixtures: small binary datasets and fast training configurations
"""

import numpy as np
import pytest

from app.models.data import Dataset, FeatureKind
from app.models.kernel import TrainConfig
from app.services.data import generate_synthetic, make_eval_split, partition_members


@pytest.fixture
def tiny_cfg() -> TrainConfig:
    return TrainConfig(epochs=15, batch_size=16, learning_rate=0.01, hidden_sizes=[16], seed=3)


@pytest.fixture
def pool() -> Dataset:
    return generate_synthetic(n_classes=3, n_features=24, n_per_class=60, flip_noise=0.3, seed=11)


@pytest.fixture
def members_nonmembers(pool):
    return partition_members(pool, 90, seed=5)


@pytest.fixture
def split(members_nonmembers):
    members, nonmembers = members_nonmembers
    return make_eval_split(members, nonmembers, 0.5, seed=9)


@pytest.fixture
def abc_dataset() -> Dataset:
    """Three distinct binary rows"""
    features = np.array([[0, 1, 1, 0], [1, 0, 0, 1], [1, 1, 0, 0]])
    return Dataset.from_arrays(features, np.array([0, 1, 1]), 2, FeatureKind.BINARY)
