"""Conditional-likelihood scores kappa_t for posterior sampling.

Sign convention: every kappa_t here approximates the gradient of
``log p(y | x_t)``, so it points toward data consistency and samplers add
``zeta_t * kappa_t`` to the proposal.

The covariance-corrected score is

    kappa_t = gamma * A^T (sigma_n^2 I + var * A A^T)^{-1} (y - A x0_hat)

with ``var`` the posterior variance of x_0 given x_t under the Gaussian
closure. Each operator family has a closed-form inverse of the bracket.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from codps.exceptions import IllPosedGuidanceError, InvalidRangeError
from codps.linops import (
    BlurDecimateOperator,
    BlurOperator,
    DenseOperator,
    InpaintOperator,
    LinearOperatorModel,
    SeparableOperator,
    SeparablePayload,
)
from codps.priors import GammaMode, ScoreEvaluation, gamma_coefficient, posterior_variance

__all__ = [
    "GuidanceConfig",
    "Method",
    "ZetaSchedule",
    "codps_score",
    "codps_score_deblur",
    "codps_score_dense",
    "codps_score_inpaint",
    "codps_score_separable",
    "codps_score_simplified",
    "codps_score_sr",
    "compute_kappa",
    "dps_score",
    "pigdm_score",
]


class Method(str, enum.Enum):
    CODPS = "codps"
    CODPS_SIMPLIFIED = "codps_simplified"
    DPS = "dps"
    PIGDM = "pigdm"


@dataclass(frozen=True)
class ZetaSchedule:
    """Step sizes for the data-consistency update.

    ``rule="piecewise"``: ``hi`` while the 1-based grid position exceeds
    ``switch_t``, ``lo`` afterwards. ``rule="matched"``: ``scale`` times the
    coefficient that turns the update into the sampler step driven by
    ``score + kappa``.
    """

    rule: str = "piecewise"
    hi: float = 5e-2
    lo: float = 1e-2
    switch_t: int = 15
    scale: float = 1.0

    def __post_init__(self):
        if self.rule not in ("piecewise", "matched"):
            raise InvalidRangeError(f"unknown zeta rule {self.rule!r}")
        if self.hi < 0 or self.lo < 0 or self.scale < 0:
            raise InvalidRangeError("zeta values must be nonnegative")

    @classmethod
    def off(cls) -> "ZetaSchedule":
        return cls(rule="piecewise", hi=0.0, lo=0.0)

    def values(self, n_steps: int, matched=None) -> np.ndarray:
        """Per-grid-position step sizes, index 0 being the final step."""
        if self.rule == "matched":
            if matched is None:
                raise InvalidRangeError("matched rule needs the sampler's coefficients")
            return self.scale * np.asarray(matched, dtype=np.float64)
        position = np.arange(1, n_steps + 1)
        return np.where(position > self.switch_t, self.hi, self.lo).astype(np.float64)


@dataclass(frozen=True)
class GuidanceConfig:
    method: Method = Method.CODPS
    sigma0_sq: float = 1.0
    sigma_n: float = 0.05
    zeta: ZetaSchedule = field(default_factory=ZetaSchedule)
    gamma_mode: GammaMode = GammaMode.CORRECTED
    r_t_rule: str = "one_minus_alpha_bar"
    step_rule: str = "plain"
    variance_index: str = "t"

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "gamma_mode", GammaMode(self.gamma_mode))
        if self.sigma_n < 0:
            raise InvalidRangeError("sigma_n must be nonnegative")
        if not self.sigma0_sq > 0:
            raise InvalidRangeError("sigma0_sq must be positive (inf allowed)")
        if self.step_rule not in ("plain", "normalized"):
            raise InvalidRangeError(f"unknown step rule {self.step_rule!r}")
        if self.variance_index not in ("t", "prev"):
            raise InvalidRangeError("variance_index must be 't' or 'prev'")
        self.r_sq(0.5)

    def r_sq(self, alpha_bar: float) -> float:
        """PiGDM's r_t^2 for the configured rule."""
        rule = self.r_t_rule
        if rule == "one_minus_alpha_bar":
            return 1.0 - alpha_bar
        if rule == "zero":
            return 0.0
        try:
            value = float(rule)
        except (TypeError, ValueError):
            raise InvalidRangeError(f"unknown r_t rule {rule!r}") from None
        if value < 0:
            raise InvalidRangeError("constant r_t^2 must be nonnegative")
        return value


def _safe_divide(num, denom, active=None):
    if active is None:
        active = np.ones(np.shape(denom), dtype=bool)
    if np.any(denom[active] == 0):
        raise IllPosedGuidanceError(
            "likelihood covariance vanishes at an observed coordinate "
            "(sigma_n = 0 and zero signal variance)"
        )
    out = np.zeros(
        np.broadcast_shapes(np.shape(num), np.shape(denom)), dtype=np.result_type(num, denom)
    )
    np.divide(num, denom, out=out, where=np.broadcast_to(active, out.shape))
    return out


def codps_score_dense(A, x0_hat, y, sigma_n, var, gamma):
    """Dense Cholesky solve of the likelihood covariance."""
    A = A.matrix if isinstance(A, DenseOperator) else np.asarray(A, dtype=np.float64)
    x0_hat = np.asarray(x0_hat, dtype=np.float64)
    resid = np.asarray(y, dtype=np.float64) - x0_hat @ A.T
    cov = sigma_n**2 * np.eye(A.shape[0]) + var * (A @ A.T)
    try:
        factor = cho_factor(cov, lower=True)
    except np.linalg.LinAlgError as exc:
        raise IllPosedGuidanceError("likelihood covariance is singular") from exc
    flat = resid.reshape(-1, A.shape[0])
    sol = cho_solve(factor, flat.T).T
    return gamma * (sol @ A).reshape(resid.shape[:-1] + (A.shape[1],))


def codps_score_inpaint(mask, x0_hat, y, sigma_n, var, gamma):
    """Element-wise form: ``gamma M (y - M x0) / (sigma_n^2 + var M)``."""
    m = np.asarray(mask, dtype=np.float64).ravel()
    resid = np.asarray(y, dtype=np.float64) - m * np.asarray(x0_hat, dtype=np.float64)
    denom = sigma_n**2 + var * m
    return gamma * m * _safe_divide(resid, denom, active=m > 0)


def _blur(x, spectrum):
    return np.fft.ifft2(np.fft.fft2(x) * spectrum).real


def codps_score_deblur(lam, x0_hat, y, sigma_n, var, gamma):
    """Frequency-domain solve; ``lam`` are the BCCB eigenvalues (H, W)."""
    shape = lam.shape
    x0 = np.asarray(x0_hat, dtype=np.float64)
    X = x0.reshape(x0.shape[:-1] + shape)
    Y = np.asarray(y, dtype=np.float64).reshape(np.shape(y)[:-1] + shape)
    resid_f = np.fft.fft2(Y) - lam * np.fft.fft2(X)
    denom = sigma_n**2 + var * np.abs(lam) ** 2
    weighted = _safe_divide(resid_f, denom)
    out = np.fft.ifft2(np.conj(lam) * weighted).real
    return gamma * out.reshape(out.shape[:-2] + (-1,))


def codps_score_sr(lam, gamma_fold, d, x0_hat, y, sigma_n, var, gamma):
    """Blur + decimation: solve on the small grid with the folded spectrum.

    ``S H H^T S^T`` is circulant on the decimated grid with eigenvalues
    ``gamma_fold``, so its regularized inverse is a small FFT filter.
    """
    H, W = lam.shape
    x0 = np.asarray(x0_hat, dtype=np.float64)
    X = x0.reshape(x0.shape[:-1] + (H, W))
    small = (H // d, W // d)
    Y = np.asarray(y, dtype=np.float64).reshape(np.shape(y)[:-1] + small)
    resid = Y - _blur(X, lam)[..., ::d, ::d]
    denom = sigma_n**2 + var * gamma_fold
    w = np.fft.ifft2(_safe_divide(np.fft.fft2(resid), denom)).real
    filled = np.zeros(w.shape[:-2] + (H, W))
    filled[..., ::d, ::d] = w
    out = _blur(filled, np.conj(lam))
    return gamma * out.reshape(out.shape[:-2] + (-1,))


def codps_score_separable(payload: SeparablePayload, X0_hat, Y, sigma_n, var, gamma):
    """Matrix form on the reshaped image; inputs and output are matrices."""
    p = payload
    X0 = np.asarray(X0_hat, dtype=np.float64)
    resid = np.asarray(Y, dtype=np.float64) - p.A_l @ X0 @ p.A_r.T
    core = p.U_l.T @ resid @ p.U_r
    denom = sigma_n**2 + var * np.outer(p.s_l, p.s_r) ** 2
    core = _safe_divide(core, denom)
    return gamma * (p.Vt_l.T @ (p.s_l[:, None] * core * p.s_r[None, :]) @ p.Vt_r)


def codps_score(op: LinearOperatorModel, x0_hat, y, sigma_n, var, gamma):
    """Dispatch to the closed-form inverse for ``op``'s family."""
    if isinstance(op, InpaintOperator):
        return codps_score_inpaint(op.mask, x0_hat, y, sigma_n, var, gamma)
    if isinstance(op, BlurDecimateOperator):
        return codps_score_sr(op.lam, op.gamma, op.factor, x0_hat, y, sigma_n, var, gamma)
    if isinstance(op, BlurOperator):
        return codps_score_deblur(op.lam, x0_hat, y, sigma_n, var, gamma)
    if isinstance(op, SeparableOperator):
        x0 = np.asarray(x0_hat, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        X0 = x0.reshape(x0.shape[:-1] + op.shape_in)
        Y = y.reshape(y.shape[:-1] + op.shape_out)
        K = codps_score_separable(op.payload, X0, Y, sigma_n, var, gamma)
        return K.reshape(K.shape[:-2] + (-1,))
    if isinstance(op, DenseOperator):
        return codps_score_dense(op.matrix, x0_hat, y, sigma_n, var, gamma)
    raise TypeError(f"no covariance inversion for {type(op).__name__}")


def codps_score_simplified(op: LinearOperatorModel, x0_hat, y, sigma_n, var, gamma):
    """Same score with ``A A^T`` replaced by the identity."""
    denom = sigma_n**2 + var
    if denom == 0:
        raise IllPosedGuidanceError("sigma_n^2 + var vanishes")
    resid = np.asarray(y, dtype=np.float64) - op.apply(x0_hat)
    return gamma * op.adjoint(resid) / denom


def dps_score(op: LinearOperatorModel, score_eval: ScoreEvaluation, y, sigma_n, step_rule="plain"):
    """Gradient of ``log N(y; A x0_hat(x_t), sigma_n^2 I)`` through the Jacobian.

    ``step_rule="normalized"`` divides by ``||y - A x0_hat||`` per chain
    instead of ``sigma_n^2``; zero residuals give a zero score.
    """
    if not score_eval.jvp_available:
        raise ValueError("DPS needs a Jacobian-vector product from the prior")
    resid = np.asarray(y, dtype=np.float64) - op.apply(score_eval.x0_hat)
    direction = score_eval.jvp(op.adjoint(resid))
    if step_rule == "normalized":
        norm = np.linalg.norm(resid, axis=-1, keepdims=True)
        return np.where(norm > 0, direction / np.where(norm > 0, norm, 1.0), 0.0)
    if sigma_n == 0:
        raise IllPosedGuidanceError("plain DPS step needs sigma_n > 0")
    return direction / sigma_n**2


def pigdm_score(op: LinearOperatorModel, score_eval: ScoreEvaluation, y, sigma_n, r_sq):
    """``J^T A^T (r^2 A A^T + sigma_n^2 I)^{-1} (y - A x0_hat)``.

    The bracket has the same structure as the corrected covariance, so the
    family-specific inverse is reused with ``var = r^2``.
    """
    if not score_eval.jvp_available:
        raise ValueError("PiGDM needs a Jacobian-vector product from the prior")
    inner = codps_score(op, score_eval.x0_hat, y, sigma_n, r_sq, 1.0)
    return score_eval.jvp(inner)


def compute_kappa(
    config: GuidanceConfig,
    op: LinearOperatorModel,
    score_eval: ScoreEvaluation,
    y,
    alpha_bar: float,
    alpha_bar_prev: float | None = None,
):
    """kappa_t for the configured method at the current step."""
    method = config.method
    if method is Method.DPS:
        return dps_score(op, score_eval, y, config.sigma_n, config.step_rule)
    if method is Method.PIGDM:
        return pigdm_score(op, score_eval, y, config.sigma_n, config.r_sq(alpha_bar))
    ab_var = alpha_bar
    if config.variance_index == "prev" and alpha_bar_prev is not None:
        ab_var = alpha_bar_prev
    var = posterior_variance(config.sigma0_sq, ab_var)
    gamma = gamma_coefficient(config.sigma0_sq, alpha_bar, config.gamma_mode)
    if method is Method.CODPS:
        return codps_score(op, score_eval.x0_hat, y, config.sigma_n, var, gamma)
    return codps_score_simplified(op, score_eval.x0_hat, y, config.sigma_n, var, gamma)
