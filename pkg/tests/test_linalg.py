import numpy as np
import pytest

from init_robust.errors import ContractError, ConvergenceError, RankDeficientError
from init_robust.linalg import (
    as_matrix,
    frobenius_norm,
    matmul,
    matrix_power_apply,
    orthogonalize,
    spectral_norm,
)


class TestShapeContracts:
    """形状と有限性のチェック"""

    def test_as_matrix_rejects_vector(self):
        with pytest.raises(ContractError):
            as_matrix(np.ones(3))

    def test_as_matrix_rejects_nan(self):
        with pytest.raises(ContractError):
            as_matrix([[1.0, np.nan]])

    def test_matmul_dimension_mismatch(self):
        with pytest.raises(ContractError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_matmul_product(self):
        a = np.arange(6.0).reshape(2, 3)
        b = np.arange(3.0).reshape(3, 1)
        np.testing.assert_allclose(matmul(a, b), a @ b)

    def test_frobenius_norm(self):
        assert frobenius_norm([[3.0, 4.0]]) == pytest.approx(5.0)


class TestSpectralNorm:
    """べき乗法による最大特異値"""

    def test_identity(self):
        assert spectral_norm(np.eye(4)) == pytest.approx(1.0, abs=1e-9)

    def test_rank_one(self):
        # [[1,2],[2,4]] = u u^T with ||u||^2 = 5
        assert spectral_norm([[1.0, 2.0], [2.0, 4.0]]) == pytest.approx(5.0, abs=1e-9)

    def test_zero_matrix(self):
        assert spectral_norm(np.zeros((3, 2))) == 0.0

    def test_empty_matrix(self):
        with pytest.raises(ContractError):
            spectral_norm(np.zeros((0, 3)))

    @pytest.mark.parametrize("shape", [(5, 3), (3, 5), (7, 7)])
    def test_matches_svd(self, shape):
        m = np.random.default_rng(3).standard_normal(shape)
        expected = np.linalg.svd(m, compute_uv=False)[0]
        assert spectral_norm(m) == pytest.approx(expected, rel=1e-9)

    def test_degenerate_ones_start(self):
        """全1ベクトルが行空間と直交する場合もフォールバックで求まる"""
        m = np.array([[1.0, -1.0], [1.0, -1.0]])
        assert spectral_norm(m) == pytest.approx(2.0, rel=1e-9)

    def test_near_degenerate_top_pair(self):
        """上位2つの特異値がほぼ縮退していても tol の精度で求まる"""
        m = np.diag([1.0, 1.0 - 1e-6, 0.5])
        assert spectral_norm(m) == pytest.approx(1.0, rel=1e-9)

    def test_ones_start_orthogonal_to_top_vector(self):
        """全1ベクトルが最大特異ベクトルと直交する固有ベクトルでも最大値を返す"""
        u = np.array([1.0, -1.0, 0.0, 0.0])
        m = np.eye(4) + np.outer(u, u)
        assert spectral_norm(m) == pytest.approx(3.0, rel=1e-9)

    def test_random_matrices_within_tolerance(self):
        rng = np.random.default_rng(11)
        worst = 0.0
        for _ in range(200):
            m = rng.standard_normal((10, 10))
            expected = np.linalg.svd(m, compute_uv=False)[0]
            worst = max(worst, abs(spectral_norm(m) - expected) / expected)
        assert worst <= 1e-9

    def test_nonconvergence_raises(self):
        """反復回数が足りなければ最良推定値付きで失敗"""
        m = np.diag([1.0, 0.999999])
        m[0, 1] = 1e-3
        with pytest.raises(ConvergenceError) as exc_info:
            spectral_norm(m, tol=1e-15, max_iter=1)
        assert exc_info.value.estimate > 0

    def test_deterministic(self):
        m = np.random.default_rng(0).standard_normal((6, 4))
        assert spectral_norm(m) == spectral_norm(m)


class TestOrthogonalize:
    """ハウスホルダーQRによる正規直交化"""

    def test_columns_orthonormal(self):
        q = orthogonalize(np.random.default_rng(1).standard_normal((6, 3)))
        np.testing.assert_allclose(q.T @ q, np.eye(3), atol=1e-12)

    def test_span_preserved(self):
        m = np.random.default_rng(2).standard_normal((5, 2))
        q = orthogonalize(m)
        # m の列は q の列空間に入る
        np.testing.assert_allclose(q @ (q.T @ m), m, atol=1e-10)

    def test_rank_deficient(self):
        m = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
        with pytest.raises(RankDeficientError):
            orthogonalize(m)

    def test_wide_input_rejected(self):
        with pytest.raises(ContractError):
            orthogonalize(np.ones((2, 3)))


class TestMatrixPowerApply:
    """m^k v の適用"""

    def test_zero_power_is_identity(self):
        v = np.array([1.0, 2.0])
        np.testing.assert_array_equal(matrix_power_apply(np.ones((2, 2)), 0, v), v)

    def test_matches_matrix_power(self):
        m = np.random.default_rng(4).standard_normal((4, 4))
        v = np.ones(4)
        np.testing.assert_allclose(
            matrix_power_apply(m, 3, v), np.linalg.matrix_power(m, 3) @ v, rtol=1e-12
        )

    def test_negative_power(self):
        with pytest.raises(ContractError):
            matrix_power_apply(np.eye(2), -1, np.ones(2))

    def test_shape_mismatch(self):
        with pytest.raises(ContractError):
            matrix_power_apply(np.eye(2), 1, np.ones(3))
