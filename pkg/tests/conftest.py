import numpy as np
import pytest

from database.registry_crud import Registry
from phantoms import sample_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_pairs():
    # 16x16 pairs, the smoke-test canvas
    return sample_dataset(6, 16, 16, 0.5, seed=3)


@pytest.fixture
def registry(tmp_path):
    return Registry(f"sqlite:///{tmp_path / 'registry.db'}")
