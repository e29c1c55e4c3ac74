"""Analytic priors with exact diffused-marginal scores.

Under the forward kernel ``x_t = sqrt(ab) x_0 + sqrt(1 - ab) eps`` a
Gaussian (or Gaussian-mixture) prior stays Gaussian (or a mixture), so the
score of ``p(x_t)``, the Tweedie mean and its Jacobian are all closed form.
These stand in for a trained score network.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from codps.exceptions import DimensionError, InvalidRangeError

__all__ = [
    "CirculantGaussianPrior",
    "GammaMode",
    "GaussianPrior",
    "GmmPrior",
    "ScoreEvaluation",
    "gamma_coefficient",
    "gaussian_posterior_x0",
    "gmm_jvp",
    "marginal_score",
    "posterior_variance",
    "random_gmm",
    "sample_prior",
    "tweedie_mean",
]

_LOG_2PI = np.log(2.0 * np.pi)


class GammaMode(str, enum.Enum):
    """How the scalar stand-in for d x0_hat / d x_t is computed."""

    CORRECTED = "corrected"
    PAPER_LITERAL = "paper_literal"
    INFINITE_VARIANCE = "infinite_variance"


def tweedie_mean(x_t, score, alpha_bar):
    return (x_t + (1.0 - alpha_bar) * score) / np.sqrt(alpha_bar)


@dataclass(frozen=True)
class ScoreEvaluation:
    """Score of p(x_t) at ``x_t`` plus the Tweedie mean built from it.

    ``jvp`` maps a direction v to (d x0_hat / d x_t) v. The Jacobian is
    symmetric for these priors, so the same closure serves as the
    vector-Jacobian product.
    """

    x_t: np.ndarray
    alpha_bar: float
    score: np.ndarray
    x0_hat: np.ndarray
    jvp: Optional[Callable[[np.ndarray], np.ndarray]] = None

    @property
    def jvp_available(self) -> bool:
        return self.jvp is not None


def _check_alpha_bar(alpha_bar):
    if not (0.0 < alpha_bar <= 1.0):
        raise InvalidRangeError(f"alpha_bar must lie in (0, 1], got {alpha_bar}")


class GaussianPrior:
    """Isotropic zero-mean prior N(0, sigma0_sq I)."""

    def __init__(self, sigma0_sq: float, dim: int):
        if not (np.isfinite(sigma0_sq) and sigma0_sq > 0):
            raise InvalidRangeError(f"sigma0_sq must be positive and finite, got {sigma0_sq}")
        if dim < 1:
            raise InvalidRangeError("dim must be >= 1")
        self.sigma0_sq = float(sigma0_sq)
        self.dim = int(dim)

    def __repr__(self):
        return f"GaussianPrior(sigma0_sq={self.sigma0_sq}, dim={self.dim})"

    def marginal_variance(self, alpha_bar):
        return 1.0 - alpha_bar + self.sigma0_sq * alpha_bar

    def sample(self, n_samples: int, rng) -> np.ndarray:
        rng = np.random.default_rng(rng)
        return np.sqrt(self.sigma0_sq) * rng.standard_normal((n_samples, self.dim))

    def log_marginal(self, x_t, alpha_bar):
        v = self.marginal_variance(alpha_bar)
        x_t = np.asarray(x_t, dtype=np.float64)
        return -0.5 * (np.sum(x_t**2, axis=-1) / v + self.dim * (np.log(v) + _LOG_2PI))

    def marginal_score(self, x_t, alpha_bar) -> ScoreEvaluation:
        _check_alpha_bar(alpha_bar)
        x_t = np.asarray(x_t, dtype=np.float64)
        if x_t.shape[-1] != self.dim:
            raise DimensionError(f"expected last axis {self.dim}, got {x_t.shape}")
        score = -x_t / self.marginal_variance(alpha_bar)
        g = gamma_coefficient(self.sigma0_sq, alpha_bar, GammaMode.CORRECTED)
        return ScoreEvaluation(
            x_t=x_t,
            alpha_bar=alpha_bar,
            score=score,
            x0_hat=tweedie_mean(x_t, score, alpha_bar),
            jvp=lambda v: g * np.asarray(v, dtype=np.float64),
        )


class GmmPrior:
    """Finite Gaussian mixture with full covariances.

    Each covariance is eigendecomposed once; the diffused component
    covariance ``ab * Sigma_k + (1 - ab) I`` then shares its eigenvectors,
    so every step costs only rotations and diagonal scalings.
    """

    def __init__(self, weights, means, covariances):
        weights = np.asarray(weights, dtype=np.float64)
        means = np.atleast_2d(np.asarray(means, dtype=np.float64))
        covs = np.asarray(covariances, dtype=np.float64)
        if covs.ndim == 2:
            covs = covs[None]
        K, n = means.shape
        if weights.shape != (K,) or covs.shape != (K, n, n):
            raise DimensionError(
                f"inconsistent GMM shapes: weights {weights.shape}, means {means.shape}, "
                f"covariances {covs.shape}"
            )
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise InvalidRangeError("mixture weights must be nonnegative and sum to 1")
        if not np.allclose(covs, np.swapaxes(covs, 1, 2), rtol=0, atol=1e-12):
            raise InvalidRangeError("component covariances must be symmetric")
        covs = 0.5 * (covs + np.swapaxes(covs, 1, 2))
        try:
            self._chol = np.linalg.cholesky(covs)
        except np.linalg.LinAlgError as exc:
            raise InvalidRangeError("component covariances must be positive definite") from exc
        self.weights = weights
        self.means = means
        self.covariances = covs
        self.K = K
        self.dim = n
        self._eigval, self._eigvec = np.linalg.eigh(covs)
        with np.errstate(divide="ignore"):
            self._log_weights = np.log(weights)

    def __repr__(self):
        return f"GmmPrior(K={self.K}, dim={self.dim})"

    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    def covariance(self) -> np.ndarray:
        """Covariance of the whole mixture."""
        mu = self.mean()
        d = self.means - mu
        return np.einsum("k,kij->ij", self.weights, self.covariances) + np.einsum(
            "k,ki,kj->ij", self.weights, d, d
        )

    def sample(self, n_samples: int, rng, return_labels: bool = False):
        rng = np.random.default_rng(rng)
        labels = rng.choice(self.K, size=n_samples, p=self.weights)
        eps = rng.standard_normal((n_samples, self.dim))
        x = self.means[labels] + np.einsum("bij,bj->bi", self._chol[labels], eps)
        return (x, labels) if return_labels else x

    def _components(self, x_t, alpha_bar):
        """Per-component log densities and gradients at ``x_t`` (batch, K, ...)."""
        lam = alpha_bar * self._eigval + (1.0 - alpha_bar)  # (K, n)
        diff = x_t[..., None, :] - np.sqrt(alpha_bar) * self.means  # (..., K, n)
        z = np.einsum("...kn,knm->...km", diff, self._eigvec)
        logdens = -0.5 * (
            np.sum(z * z / lam, axis=-1) + np.sum(np.log(lam), axis=-1) + self.dim * _LOG_2PI
        )
        grads = -np.einsum("...km,knm->...kn", z / lam, self._eigvec)
        return lam, logdens, grads

    def log_marginal(self, x_t, alpha_bar):
        x_t = np.asarray(x_t, dtype=np.float64)
        _, logdens, _ = self._components(x_t, alpha_bar)
        return logsumexp(self._log_weights + logdens, axis=-1)

    def responsibilities(self, x_t, alpha_bar=1.0):
        x_t = np.asarray(x_t, dtype=np.float64)
        _, logdens, _ = self._components(x_t, alpha_bar)
        logw = self._log_weights + logdens
        return np.exp(logw - logsumexp(logw, axis=-1, keepdims=True))

    def marginal_score(self, x_t, alpha_bar) -> ScoreEvaluation:
        _check_alpha_bar(alpha_bar)
        x_t = np.asarray(x_t, dtype=np.float64)
        if x_t.shape[-1] != self.dim:
            raise DimensionError(f"expected last axis {self.dim}, got {x_t.shape}")
        lam, logdens, grads = self._components(x_t, alpha_bar)
        logw = self._log_weights + logdens
        resp = np.exp(logw - logsumexp(logw, axis=-1, keepdims=True))  # (..., K)
        score = np.einsum("...k,...kn->...n", resp, grads)
        eigvec = self._eigvec
        sqrt_ab = np.sqrt(alpha_bar)

        def jvp(v):
            # Hessian of log p: sum_k r_k (g_k g_k^T - C_k^-1) - s s^T
            v = np.asarray(v, dtype=np.float64)
            w = np.einsum("...n,knm->...km", v, eigvec) / lam
            cinv_v = np.einsum("...km,knm->...kn", w, eigvec)
            gv = np.einsum("...kn,...n->...k", grads, v)
            sv = np.einsum("...n,...n->...", score, v)
            hv = (
                np.einsum("...k,...kn->...n", resp, grads * gv[..., None] - cinv_v)
                - score * sv[..., None]
            )
            return (v + (1.0 - alpha_bar) * hv) / sqrt_ab

        return ScoreEvaluation(
            x_t=x_t,
            alpha_bar=alpha_bar,
            score=score,
            x0_hat=tweedie_mean(x_t, score, alpha_bar),
            jvp=jvp,
        )


class CirculantGaussianPrior:
    """Stationary Gaussian image prior with covariance ``F^H diag(c) F``.

    ``spectrum`` holds the nonnegative covariance eigenvalues c on the
    (H, W) frequency grid (real and symmetric, so the covariance is real).
    The diffused covariance ``ab C + (1 - ab) I`` is diagonal in the same
    basis, so the score, Tweedie mean and Jacobian all cost two FFTs.
    """

    def __init__(self, mean, spectrum):
        spectrum = np.asarray(spectrum, dtype=np.float64)
        if spectrum.ndim != 2:
            raise DimensionError("spectrum must be a 2-D frequency grid")
        if np.any(spectrum < 0) or not np.all(np.isfinite(spectrum)):
            raise InvalidRangeError("covariance spectrum must be finite and nonnegative")
        self.shape = spectrum.shape
        self.dim = int(spectrum.size)
        mean = np.broadcast_to(np.asarray(mean, dtype=np.float64), (self.dim,)).copy()
        self.mean_vector = mean
        self.spectrum = spectrum

    @classmethod
    def smooth(cls, shape, mean=0.5, variance=0.05, length_scale=4.0, nugget=1e-4):
        """Squared-exponential covariance with circular distance, plus a nugget."""
        H, W = shape
        dy = np.minimum(np.arange(H), H - np.arange(H))[:, None]
        dx = np.minimum(np.arange(W), W - np.arange(W))[None, :]
        row = variance * np.exp(-0.5 * (dy**2 + dx**2) / length_scale**2)
        spectrum = np.fft.fft2(row).real
        return cls(mean, np.maximum(spectrum, 0.0) + nugget)

    def __repr__(self):
        return f"CirculantGaussianPrior(shape={self.shape})"

    def _filter(self, x, weights):
        img = x.reshape(x.shape[:-1] + self.shape)
        out = np.fft.ifft2(np.fft.fft2(img) * weights).real
        return out.reshape(x.shape[:-1] + (-1,))

    def sample(self, n_samples: int, rng) -> np.ndarray:
        rng = np.random.default_rng(rng)
        eps = rng.standard_normal((n_samples, self.dim))
        return self.mean_vector + self._filter(eps, np.sqrt(self.spectrum))

    def marginal_score(self, x_t, alpha_bar) -> ScoreEvaluation:
        _check_alpha_bar(alpha_bar)
        x_t = np.asarray(x_t, dtype=np.float64)
        if x_t.shape[-1] != self.dim:
            raise DimensionError(f"expected last axis {self.dim}, got {x_t.shape}")
        lam = alpha_bar * self.spectrum + (1.0 - alpha_bar)
        score = -self._filter(x_t - np.sqrt(alpha_bar) * self.mean_vector, 1.0 / lam)
        jac = np.sqrt(alpha_bar) * self.spectrum / lam

        return ScoreEvaluation(
            x_t=x_t,
            alpha_bar=alpha_bar,
            score=score,
            x0_hat=tweedie_mean(x_t, score, alpha_bar),
            jvp=lambda v: self._filter(np.asarray(v, dtype=np.float64), jac),
        )


def random_gmm(n: int, K: int = 3, rng=None, mean_range: float = 3.0, jitter: float = 0.1):
    """Random mixture: uniform means in [-r, r], covariances B^T B + jitter I.

    B has entries uniform on [0, 1]; the jitter keeps every covariance
    positive definite. Weights are equal.
    """
    rng = np.random.default_rng(rng)
    means = rng.uniform(-mean_range, mean_range, size=(K, n))
    B = rng.uniform(0.0, 1.0, size=(K, n, n))
    covs = np.einsum("kji,kjl->kil", B, B) + jitter * np.eye(n)
    return GmmPrior(np.full(K, 1.0 / K), means, covs)


def sample_prior(prior, rng_seed, n_samples: int = 1):
    return prior.sample(n_samples, rng_seed)


def marginal_score(prior, x_t, alpha_bar) -> ScoreEvaluation:
    return prior.marginal_score(x_t, alpha_bar)


def posterior_variance(sigma0_sq: float, alpha_bar):
    """Variance of p(x_0 | x_t) under the N(0, sigma0_sq I) prior.

    ``sigma0_sq = inf`` gives the flat-prior limit (1 - ab) / ab.
    """
    if np.isinf(sigma0_sq):
        return (1.0 - alpha_bar) / alpha_bar
    return sigma0_sq * (1.0 - alpha_bar) / ((1.0 - alpha_bar) + sigma0_sq * alpha_bar)


def gaussian_posterior_x0(sigma0_sq: float, x_t, alpha_bar):
    """Mean and variance of p(x_0 | x_t) for the isotropic Gaussian prior.

    The mean is written as ``sigma0_sq sqrt(ab) x_t / (1 - ab + sigma0_sq ab)``
    which stays finite at ab = 1 (mean x_t, variance 0).
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    var = posterior_variance(sigma0_sq, alpha_bar)
    if np.isinf(sigma0_sq):
        return x_t / np.sqrt(alpha_bar), var
    mean = sigma0_sq * np.sqrt(alpha_bar) * x_t / ((1.0 - alpha_bar) + sigma0_sq * alpha_bar)
    return mean, var


def gamma_coefficient(sigma0_sq: float, alpha_bar, mode=GammaMode.CORRECTED):
    """Scalar Jacobian d x0_hat / d x_t under the Gaussian closure.

    ``CORRECTED`` is the exact derivative of the Gaussian posterior mean,
    ``PAPER_LITERAL`` is ``1/sqrt(ab) - (1 - ab)/(1 - ab + sigma0_sq ab)``
    and ``INFINITE_VARIANCE`` is its sigma0_sq -> inf limit ``1/sqrt(ab)``.
    """
    mode = GammaMode(mode)
    sqrt_ab = np.sqrt(alpha_bar)
    if mode is GammaMode.INFINITE_VARIANCE or np.isinf(sigma0_sq):
        return 1.0 / sqrt_ab
    denom = (1.0 - alpha_bar) + sigma0_sq * alpha_bar
    if mode is GammaMode.CORRECTED:
        return sigma0_sq * sqrt_ab / denom
    return 1.0 / sqrt_ab - (1.0 - alpha_bar) / denom


def gmm_jvp(prior: GmmPrior, x_t, alpha_bar, v):
    return prior.marginal_score(x_t, alpha_bar).jvp(v)
