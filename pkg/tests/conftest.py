import numpy as np
import pytest

from comorec.core import InteractionSet
from comorec.neuralnet import EmbeddingNetwork
from comorec.synthetic import SyntheticConfig


@pytest.fixture
def small_config():
    return SyntheticConfig(n_subjects=120, n_codes=24, n_clusters=3, p_in=0.7, p_out=0.05, seed=3)


def random_positive_set(rng, n_subjects=20, n_codes=30, density=0.2):
    mask = rng.random((n_subjects, n_codes)) < density
    s, c = np.nonzero(mask)
    return InteractionSet(s, c, np.ones(len(s), dtype=int), n_subjects, n_codes)


@pytest.fixture
def positive_set():
    return random_positive_set(np.random.default_rng(0))


def random_batch(net: EmbeddingNetwork, n: int, seed: int):
    rng = np.random.default_rng(seed)
    idx = np.stack([rng.integers(0, t.rows, size=n) for t in net.tables], axis=1)
    y = rng.integers(0, 2, size=n)
    return idx, y
