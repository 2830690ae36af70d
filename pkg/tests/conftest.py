import numpy as np
import pytest

from dualaffinity.data import DatasetSpec, generate_dataset
from dualaffinity.model import ToyModel


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_dataset():
    return generate_dataset(DatasetSpec(n_samples=6, seed=3))


@pytest.fixture
def small_model():
    """4x4-input model with K = D = 4 and C = 3 (background + 2 classes)."""
    return ToyModel(n_classes=3, backbone_channels=4, head_channels=4, fusion_hidden=4,
                    stride=1, seed=5)
