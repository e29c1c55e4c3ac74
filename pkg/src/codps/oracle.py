"""Dense reference computations used to validate the fast paths.

Operators are materialized from their definitions by index arithmetic, not
by calling the FFT or SVD code they are meant to check. Everything here is
O(n^3) and guarded against image-scale inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from codps.exceptions import DimensionError, InvalidRangeError, SizeGuardError
from codps.linops import (
    BlurDecimateOperator,
    BlurOperator,
    DenseOperator,
    InpaintOperator,
    LinearOperatorModel,
    SeparableOperator,
)

__all__ = [
    "DensePosterior",
    "MAX_ENTRIES",
    "assign_cluster",
    "circulant_matrix",
    "decimation_matrix",
    "dense_bccb",
    "dense_kappa",
    "dft_matrix",
    "map_posterior_stats",
    "materialize",
    "materialize_by_probing",
    "sample_covariance",
]

MAX_ENTRIES = 2**20


def _guard(n_out, n_in):
    if n_out * n_in > MAX_ENTRIES:
        raise SizeGuardError(
            f"refusing to materialize a {n_out}x{n_in} matrix (limit {MAX_ENTRIES} entries)"
        )


def circulant_matrix(first_col) -> np.ndarray:
    """C[i, j] = c[(i - j) mod n]."""
    c = np.asarray(first_col)
    n = c.size
    i, j = np.indices((n, n))
    return c[(i - j) % n]


def dense_bccb(kernel, shape) -> np.ndarray:
    """Matrix of cyclic convolution with ``kernel`` centered at (0, 0).

    Entry ((i, j), (k, l)) is the kernel tap that carries pixel (k, l) to
    (i, j): offset ((i - k), (j - l)) mod (H, W) shifted by the kernel center.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    H, W = shape
    kh, kw = kernel.shape
    if kh > H or kw > W:
        raise DimensionError("kernel larger than image")
    _guard(H * W, H * W)
    ch, cw = kh // 2, kw // 2
    out = np.zeros((H * W, H * W))
    for i in range(H):
        for j in range(W):
            for p in range(kh):
                for q in range(kw):
                    k = (i - (p - ch)) % H
                    l = (j - (q - cw)) % W
                    out[i * W + j, k * W + l] += kernel[p, q]
    return out


def decimation_matrix(shape, d: int) -> np.ndarray:
    """0/1 matrix keeping pixel (a*d, b*d) for each block (a, b)."""
    H, W = shape
    if H % d or W % d:
        raise DimensionError("shape not divisible by factor")
    m1, m2 = H // d, W // d
    S = np.zeros((m1 * m2, H * W))
    for a in range(m1):
        for b in range(m2):
            S[a * m2 + b, (a * d) * W + b * d] = 1.0
    return S


def dft_matrix(n: int, unitary: bool = True) -> np.ndarray:
    j, k = np.indices((n, n))
    F = np.exp(-2j * np.pi * j * k / n)
    return F / np.sqrt(n) if unitary else F


def materialize(op: LinearOperatorModel) -> np.ndarray:
    """Explicit matrix of ``op``, built from its definition."""
    _guard(op.n_out, op.n_in)
    if isinstance(op, DenseOperator):
        return op.matrix.copy()
    if isinstance(op, InpaintOperator):
        return np.diag(op.mask.ravel())
    if isinstance(op, BlurDecimateOperator):
        return decimation_matrix(op.shape_in, op.factor) @ dense_bccb(op.kernel, op.shape_in)
    if isinstance(op, BlurOperator):
        return dense_bccb(op.kernel, op.shape_in)
    if isinstance(op, SeparableOperator):
        # row-major vec(A_l X A_r^T) = (A_l kron A_r) vec(X)
        return np.kron(op.payload.A_l, op.payload.A_r)
    return materialize_by_probing(op)


def materialize_by_probing(op: LinearOperatorModel) -> np.ndarray:
    """Columns are ``op.apply`` of the standard basis."""
    _guard(op.n_out, op.n_in)
    return op.apply(np.eye(op.n_in)).T


def dense_kappa(A, x0_hat, y, sigma_n, var, gamma):
    """Reference kappa via an explicit inverse of the likelihood covariance."""
    A = np.asarray(A, dtype=np.float64)
    cov = sigma_n**2 * np.eye(A.shape[0]) + var * A @ A.T
    resid = np.asarray(y, dtype=np.float64) - np.asarray(x0_hat, dtype=np.float64) @ A.T
    return gamma * (resid @ np.linalg.inv(cov).T) @ A


@dataclass(frozen=True)
class DensePosterior:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        cov = np.asarray(self.covariance, dtype=np.float64)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise DimensionError("posterior covariance must be square")
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-12 * max(1.0, np.abs(cov).max()):
            raise InvalidRangeError("posterior covariance is not symmetric")
        np.linalg.cholesky(cov)


def _spd_inverse(M, what):
    M = np.asarray(M, dtype=np.float64)
    if not np.allclose(M, M.T, rtol=0, atol=1e-12 * max(1.0, np.abs(M).max())):
        raise InvalidRangeError(f"{what} must be symmetric")
    try:
        L = np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise InvalidRangeError(f"{what} must be positive definite") from exc
    Linv = np.linalg.inv(L)
    return Linv.T @ Linv


def map_posterior_stats(Sigma_k, mu_k, A, sigma_n, y) -> DensePosterior:
    """Posterior of x ~ N(mu_k, Sigma_k) given y = A x + N(0, sigma_n^2 I).

    Covariance ``(Sigma_k^-1 + A^T A / sigma_n^2)^-1``, mean
    ``cov (Sigma_k^-1 mu_k + A^T y / sigma_n^2)``.
    """
    if not sigma_n > 0:
        raise InvalidRangeError("sigma_n must be positive")
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    prec_prior = _spd_inverse(Sigma_k, "Sigma_k")
    prec = prec_prior + A.T @ A / sigma_n**2
    cov = _spd_inverse(0.5 * (prec + prec.T), "posterior precision")
    cov = 0.5 * (cov + cov.T)
    mean = cov @ (prec_prior @ np.asarray(mu_k, dtype=np.float64) + A.T @ np.asarray(y) / sigma_n**2)
    return DensePosterior(mean=mean, covariance=cov)


def sample_covariance(samples) -> np.ndarray:
    """Unbiased covariance of the rows of ``samples``."""
    X = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if X.shape[0] < 2:
        raise InvalidRangeError("sample covariance needs at least 2 samples")
    D = X - X.mean(axis=0)
    return D.T @ D / (X.shape[0] - 1)


def assign_cluster(x, prior):
    """Index of the component maximizing pi_k N(x; mu_k, Sigma_k).

    Accepts one vector or a batch; ``argmax`` breaks ties toward index 0.
    """
    x = np.asarray(x, dtype=np.float64)
    _, logdens, _ = prior._components(x, 1.0)
    return np.argmax(prior._log_weights + logdens, axis=-1)
