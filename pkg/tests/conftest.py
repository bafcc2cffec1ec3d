import os

import pytest

from attrgraphrec.synthetic import make_dataset

# Real MovieLens-100K directory (u.data / u.user / u.item), if the user
# has one; several dataset-statistics tests only run when it is present.
ML100K_DIR = os.environ.get("ML100K_DIR", "")


@pytest.fixture(scope="session")
def ml_shaped():
    """Synthetic dataset with MovieLens-100K's exact shape statistics."""
    return make_dataset(num_users=943, num_items=1682, num_ratings=100000, seed=7)


@pytest.fixture(scope="session")
def small_synth():
    """Small synthetic dataset for fast split/graph/train tests."""
    return make_dataset(num_users=60, num_items=80, num_ratings=1200, seed=3)
