import numpy as np
import pytest

from riscascade.channel import ArrayGeometry, sample_scene


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def rel_err(a, b):
    return np.linalg.norm(np.asarray(a) - np.asarray(b)) / np.linalg.norm(np.asarray(b))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def desk_geometry():
    return ArrayGeometry(64, 64)


@pytest.fixture
def small_scene():
    return sample_scene(ArrayGeometry(16, 16), 3, 2, 2, seed=5)
