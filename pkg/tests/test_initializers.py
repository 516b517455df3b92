import math
import time

import numpy as np
import pytest

from init_robust.errors import ContractError
from init_robust.initializers import (
    InitKind,
    InitScheme,
    MeanReading,
    expected_norm_bound,
    initialize,
    scheme_from_config,
)
from init_robust.linalg import spectral_norm


class TestInitSchemes:
    """各初期化スキームの分布と決定性"""

    @pytest.mark.parametrize(
        "scheme",
        [
            InitScheme.gaussian(0.0, 1.0),
            InitScheme.uniform(2.0),
            InitScheme.orthogonal(1.0),
            InitScheme.glorot(),
            InitScheme.kaiming(),
            InitScheme.constant(0.5),
        ],
    )
    def test_same_seed_same_matrix(self, scheme):
        np.testing.assert_array_equal(initialize(scheme, 5, 3, seed=9), initialize(scheme, 5, 3, seed=9))

    def test_uniform_range(self):
        w = initialize(InitScheme.uniform(3.0), 40, 40, seed=1)
        assert np.abs(w).max() <= 3.0

    def test_glorot_range(self):
        w = initialize(InitScheme.glorot(), 10, 6, seed=1)
        assert np.abs(w).max() <= math.sqrt(6.0 / 16)

    @pytest.mark.parametrize("shape", [(6, 3), (3, 6), (4, 4)])
    def test_orthogonal_singular_values(self, shape):
        """β·直交行列の特異値はすべて β"""
        w = initialize(InitScheme.orthogonal(2.5), *shape, seed=3)
        np.testing.assert_allclose(np.linalg.svd(w, compute_uv=False), 2.5, atol=1e-10)
        assert spectral_norm(w) == pytest.approx(2.5, abs=1e-8)

    def test_constant(self):
        np.testing.assert_array_equal(initialize(InitScheme.constant(-1.0), 2, 2, seed=0), -np.ones((2, 2)))

    def test_norm_monotone_in_sigma(self):
        """同じシードなら σ に比例してノルムが増える"""
        norms = [spectral_norm(initialize(InitScheme.gaussian(0.0, s), 8, 4, seed=2)) for s in (0.1, 0.5, 1.0, 2.0)]
        assert norms == sorted(norms)
        assert norms[3] == pytest.approx(20 * norms[0])

    def test_norm_monotone_in_beta(self):
        norms = [spectral_norm(initialize(InitScheme.uniform(b), 8, 4, seed=2)) for b in (0.5, 1.0, 2.0)]
        assert norms[0] < norms[1] < norms[2]

    def test_invalid_shape(self):
        with pytest.raises(ContractError):
            initialize(InitScheme.glorot(), 0, 3, seed=0)

    def test_negative_sigma(self):
        with pytest.raises(ContractError):
            InitScheme.gaussian(0.0, -1.0)

    def test_labels(self):
        assert InitScheme.gaussian(0.0, 0.5).label() == "gaussian(mu=0,sigma=0.5)"
        assert InitScheme.uniform(3.0).label() == "uniform(beta=3)"
        assert InitScheme.kaiming().label() == "kaiming"


class TestExpectedNormBound:
    """ガウス初期化の期待ノルム上界"""

    def test_zero_mean(self):
        assert expected_norm_bound(InitScheme.gaussian(0.0, 1.0), 16, 7) == pytest.approx(math.sqrt(112))

    def test_mean_readings(self):
        scheme = InitScheme.gaussian(0.5, 1.0)
        vectorized = expected_norm_bound(scheme, 4, 4, MeanReading.VECTORIZED)
        scalar = expected_norm_bound(scheme, 4, 4, MeanReading.SCALAR)
        assert vectorized == pytest.approx(math.sqrt(16 * 0.25 + 16))
        assert scalar == pytest.approx(math.sqrt(0.25 + 16))

    def test_not_gaussian(self):
        assert expected_norm_bound(InitScheme.glorot(), 3, 3) is None

    def test_monte_carlo_frobenius(self):
        """16×7 のガウス行列 10000 本の平均フロベニウスノルムが sqrt(112)σ 以下"""
        started = time.perf_counter()
        for sigma in (0.5, 1.0, 2.0):
            scheme = InitScheme.gaussian(0.0, sigma)
            mean_norm = np.mean([np.linalg.norm(initialize(scheme, 16, 7, seed=k)) for k in range(10_000)])
            assert mean_norm <= math.sqrt(112) * sigma
            assert mean_norm <= expected_norm_bound(scheme, 16, 7)
        assert time.perf_counter() - started < 10.0


class TestSchemeFromConfig:
    """[init] セクションからの構築"""

    def test_orthogonal(self):
        scheme = scheme_from_config({"scheme": "orthogonal", "beta": 2})
        assert scheme.kind is InitKind.ORTHOGONAL
        assert scheme.beta == 2.0

    def test_unknown_scheme(self):
        with pytest.raises(ContractError):
            scheme_from_config({"scheme": "lecun"})
