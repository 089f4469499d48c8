"""Shared fixtures for the seqmia test suite."""

import numpy as np
import pytest

from seqmia.config import CovModel, SyntheticSpec
from seqmia.dataset import save_dataset
from seqmia.models import MembershipMask, ScoreTensor
from seqmia.synthetic import generate, synthetic_manifest

CORRELATED_COV = np.array([[1.0, 0.9], [0.9, 1.0]])
CORRELATED_SHIFT = np.array([0.5, -0.5])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_synthetic():
    """8 models, 12 canaries, 4 tokens with a clear IN/OUT shift."""
    spec = SyntheticSpec(m=8, n=12, t=4, cov=CovModel.AR1, rho=0.5, shift=2.0, seed=7)
    tensor, mask, truth = generate(spec)
    return spec, tensor, mask, truth


@pytest.fixture
def dataset_path(tmp_path, small_synthetic):
    spec, tensor, mask, _ = small_synthetic
    path = tmp_path / "fixture.sqmi"
    save_dataset(tensor, mask, synthetic_manifest(spec), path)
    return path


@pytest.fixture
def correlated_pair():
    """Factory for the two-token fixture whose signal lives only in the correlation."""

    def build(m: int, n: int, seed: int):
        rng = np.random.default_rng(seed)
        chol = np.linalg.cholesky(CORRELATED_COV)
        data = rng.standard_normal((m, n, 2)) @ chol.T
        mask = np.zeros((m, n), dtype=bool)
        for canary in range(n):
            mask[rng.permutation(m)[: m // 2], canary] = True
        data[mask] += CORRELATED_SHIFT
        return ScoreTensor(data), MembershipMask(mask)

    return build
