import numpy as np
import pytest

from addbo.gp import Dataset, NoiseModel, fit
from addbo.kernels import AdditiveKernel, GroupKernel, MaternKernel, SeKernel


def random_partition(rng, D, max_size):
    perm = rng.permutation(D)
    groups, i = [], 0
    while i < D:
        size = int(rng.integers(1, max_size + 1))
        groups.append(tuple(sorted(int(v) for v in perm[i : i + size])))
        i += size
    return groups


def random_additive_kernel(rng, D, max_size=3, matern=True):
    """Mixed SE / Matérn groups with random scales and bandwidths."""
    groups = []
    for idx in random_partition(rng, D, max_size):
        scale = float(rng.uniform(0.3, 2.0))
        h = float(rng.uniform(0.1, 0.8))
        if matern and rng.random() < 0.5:
            base = MaternKernel(smoothness=float(rng.choice([0.5, 1.5, 2.5, 1.7])), bandwidth=h, scale=scale)
        else:
            base = SeKernel(scale=scale, bandwidth=h)
        groups.append(GroupKernel(base, idx))
    return AdditiveKernel(tuple(groups), D)


def random_state(rng, D=None, n=None, eta=None, center=False):
    D = D or int(rng.integers(1, 9))
    n = int(rng.integers(1, 26)) if n is None else n
    k = random_additive_kernel(rng, D)
    X = rng.random((n, D))
    Y = rng.normal(size=n)
    noise = NoiseModel(eta if eta is not None else float(rng.uniform(0.05, 0.5)))
    return fit(Dataset(X, Y), k, noise, center=center)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
