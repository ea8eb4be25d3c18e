import numpy as np
import pytest
import torch

from paradock.geometry import RigidTransform, random_rotation, random_transform


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_points(rng, n, scale=10.0):
    return rng.normal(scale=scale, size=(n, 3))


def assert_transform_close(a: RigidTransform, b: RigidTransform, tol=1e-9):
    ra, ta = a.numpy()
    rb, tb = b.numpy()
    assert np.abs(ra - rb).max() < tol
    assert np.abs(ta - tb).max() < tol
