#!/usr/bin/env python3
"""
Dense matrix helpers for init-robust

Matrices and vectors are plain float64 numpy arrays. The helpers here add
the shape contracts, the deterministic power iteration used for every
spectral norm in the bounds, and Householder orthogonalization.
"""

import logging

import numpy as np

from .errors import ContractError, ConvergenceError, RankDeficientError


logger = logging.getLogger(__name__)

SPECTRAL_TOL = 1e-9
SPECTRAL_MAX_ITER = 10_000
# relative residual below which a Krylov chain counts as closed
CLOSURE_RTOL = 1e-12
# seed of the fallback chain when the all-ones chain closes early
FALLBACK_SEED = 0x5EED


def as_matrix(data, name: str = "matrix") -> np.ndarray:
    """Validate and convert to a finite 2-D float64 array"""
    m = np.asarray(data, dtype=np.float64)
    if m.ndim != 2:
        raise ContractError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ContractError(f"{name} contains NaN or Inf")
    return m


def as_vector(data, name: str = "vector") -> np.ndarray:
    """Validate and convert to a finite 1-D float64 array"""
    v = np.asarray(data, dtype=np.float64)
    if v.ndim != 1:
        raise ContractError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ContractError(f"{name} contains NaN or Inf")
    return v


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit dimension check"""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ContractError(f"matmul: {a.shape} x {b.shape} dimension mismatch")
    return a @ b


def frobenius_norm(m) -> float:
    return float(np.linalg.norm(as_matrix(m)))


def spectral_norm(
    m, tol: float = SPECTRAL_TOL, max_iter: int = SPECTRAL_MAX_ITER
) -> float:
    """Largest singular value via power iteration on m^T m.

    The power iterates span a Krylov space of m^T m and the estimate is the
    top Ritz value rho on that space. Iteration stops once the eigen-residual
    ||m^T m y - rho y|| of the top Ritz vector y is at most ``tol * rho``, or
    when the space fills the whole domain, where rho is exact.

    The chain starts from the all-ones vector. If it closes on an invariant
    subspace first, that subspace is locked and a seeded random chain
    continues in its orthogonal complement.
    """
    m = as_matrix(m)
    if m.size == 0:
        raise ContractError("spectral_norm of an empty matrix")
    if tol <= 0:
        raise ContractError(f"tol must be positive, got {tol}")
    if not np.any(m):
        return 0.0

    # iterate on the smaller Gram side
    op = m if m.shape[1] <= m.shape[0] else m.T
    scale = float(np.abs(op).max())
    op = op / scale
    n = op.shape[1]

    locked = np.zeros((n, 0))
    locked_rho = 0.0
    basis = np.zeros((n, 0))
    images = np.zeros((n, 0))
    q = np.ones(n)
    seeded = False
    rho = 0.0
    for _ in range(max_iter):
        q = _orthonormalize_against(q, np.column_stack([locked, basis]))
        image = op.T @ (op @ q)
        basis = np.column_stack([basis, q])
        images = np.column_stack([images, image])
        rho, ritz, ritz_image = _top_ritz(basis, images)
        best = max(rho, locked_rho)
        if locked.shape[1] + basis.shape[1] == n:
            return _singular_value(best, scale)

        spanned = np.column_stack([locked, basis])
        following = image - spanned @ (spanned.T @ image)
        if np.linalg.norm(following) <= CLOSURE_RTOL * np.linalg.norm(image):
            if seeded:
                return _singular_value(best, scale)
            logger.debug("all-ones chain closed after %d steps, using seeded fallback", basis.shape[1])
            seeded = True
            locked, locked_rho = basis, rho
            basis = np.zeros((n, 0))
            images = np.zeros((n, 0))
            q = np.random.default_rng(FALLBACK_SEED).standard_normal(n)
            continue

        if np.linalg.norm(ritz_image - rho * ritz) <= tol * rho:
            return _singular_value(best, scale)
        q = following

    raise ConvergenceError(
        f"spectral_norm did not converge in {max_iter} iterations",
        estimate=_singular_value(max(rho, locked_rho), scale),
    )


def _orthonormalize_against(q: np.ndarray, spanned: np.ndarray) -> np.ndarray:
    # second pass restores orthogonality lost to rounding
    for _ in range(2):
        q = q - spanned @ (spanned.T @ q)
    return q / np.linalg.norm(q)


def _top_ritz(basis: np.ndarray, images: np.ndarray):
    projected = basis.T @ images
    values, vectors = np.linalg.eigh((projected + projected.T) / 2)
    y = vectors[:, -1]
    return max(float(values[-1]), 0.0), basis @ y, images @ y


def _singular_value(rho: float, scale: float) -> float:
    return float(np.sqrt(rho)) * scale


def orthogonalize(m, rank_tol: float = 1e-12) -> np.ndarray:
    """Orthonormal basis of the column span (Householder QR).

    Column signs are fixed so that R has a positive diagonal, which makes
    the result unique for full-rank input.
    """
    m = as_matrix(m)
    rows, cols = m.shape
    if rows < cols:
        raise ContractError(f"orthogonalize needs rows >= cols, got {m.shape}")
    q, r = np.linalg.qr(m, mode="reduced")
    diag = np.diag(r)
    largest = float(np.abs(diag).max()) if diag.size else 0.0
    if largest == 0.0 or np.any(np.abs(diag) <= rank_tol * largest):
        raise RankDeficientError("orthogonalize: input is rank deficient")
    return q * np.sign(diag)


def matrix_power_apply(m, k: int, v) -> np.ndarray:
    """Apply m to v k times (m^k v) without forming the power"""
    m = as_matrix(m)
    v = as_vector(v)
    if m.shape[0] != m.shape[1]:
        raise ContractError(f"matrix_power_apply needs a square matrix, got {m.shape}")
    if m.shape[1] != v.shape[0]:
        raise ContractError(
            f"matrix_power_apply: {m.shape} cannot act on length {v.shape[0]}"
        )
    if k < 0:
        raise ContractError(f"k must be non-negative, got {k}")
    out = v.copy()
    for _ in range(k):
        out = m @ out
    return out
