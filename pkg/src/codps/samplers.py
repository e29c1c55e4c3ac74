"""Reverse-diffusion loops with optional data-consistency guidance.

All loops run a batch of independent chains (leading axis) that share one
``numpy.random.Generator`` seeded from ``SamplerConfig.seed``. They return
the Tweedie estimate x0_hat of the last iteration, not the chain state.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from codps.exceptions import InvalidRangeError, SamplingDivergenceError
from codps.guidance import (
    GuidanceConfig,
    Method,
    codps_score,
    codps_score_simplified,
    compute_kappa,
)
from codps.priors import posterior_variance
from codps.schedule import DiffusionSchedule, SigmaTildeKind, StepGrid

__all__ = [
    "RunResult",
    "SamplerConfig",
    "TrajectoryStep",
    "ddim_coefficients",
    "ddpm_coefficients",
    "matched_zeta",
    "run_baseline",
    "run_codps_ddim",
    "run_codps_ddpm",
    "run_posterior_sampling",
    "sample_unconditional",
]


@dataclass(frozen=True)
class SamplerConfig:
    kind: str = "ddim"
    eta: float = 1.0
    nfe: Optional[int] = None
    seed: int = 0
    chains: int = 1
    record_trajectory: bool = False

    def __post_init__(self):
        if self.kind not in ("ddim", "ddpm"):
            raise InvalidRangeError(f"sampler kind must be 'ddim' or 'ddpm', got {self.kind!r}")
        if not (0.0 <= self.eta <= 1.0):
            raise InvalidRangeError("eta must lie in [0, 1]")
        if self.nfe is not None and self.nfe < 1:
            raise InvalidRangeError("nfe must be >= 1")
        if self.chains < 1:
            raise InvalidRangeError("chains must be >= 1")


@dataclass(frozen=True)
class TrajectoryStep:
    t: int
    residual_norm: float
    kappa_norm: float


@dataclass
class RunResult:
    x0_final: np.ndarray
    seed: int
    wall_time: float
    trajectory: List[TrajectoryStep] = field(default_factory=list)


def ddim_coefficients(alpha_bar, alpha_bar_prev, eta):
    """Noise and score weights (c1, c2) of one DDIM step.

    The step is ``sqrt(ab_prev) x0_hat + c1 z + c2 s`` with the score s, so
    c2 carries the usual ``eps = -sqrt(1 - ab) s`` conversion.
    """
    if not (0.0 < alpha_bar <= alpha_bar_prev <= 1.0):
        raise InvalidRangeError("need 0 < alpha_bar <= alpha_bar_prev <= 1")
    if alpha_bar == 1.0:
        return 0.0, 0.0
    c1 = (
        eta
        * np.sqrt((1.0 - alpha_bar_prev) / (1.0 - alpha_bar))
        * np.sqrt((alpha_bar_prev - alpha_bar) / alpha_bar_prev)
    )
    rest = 1.0 - alpha_bar_prev - c1**2
    if rest < 0:
        if rest < -1e-15:
            raise InvalidRangeError(f"DDIM coefficient domain error ({rest})")
        rest = 0.0
    c2 = -np.sqrt(rest) * np.sqrt(1.0 - alpha_bar)
    return float(c1), float(c2)


def ddpm_coefficients(alpha_bar, alpha_bar_prev, beta, sigma_tilde_kind):
    """(coef on x_t, coef on x0_hat, sigma_tilde) of the ancestral step."""
    alpha = 1.0 - beta
    c_x = np.sqrt(alpha) * (1.0 - alpha_bar_prev) / (1.0 - alpha_bar)
    c_0 = np.sqrt(alpha_bar_prev) * beta / (1.0 - alpha_bar)
    if SigmaTildeKind(sigma_tilde_kind) is SigmaTildeKind.BETA:
        var = beta
    else:
        var = (1.0 - alpha_bar_prev) / (1.0 - alpha_bar) * beta
    return c_x, c_0, np.sqrt(var)


def matched_zeta(grid: StepGrid, kind: str, eta: float = 1.0):
    """Step sizes under which ``x_bar + zeta * kappa`` equals the sampler
    step driven by ``score + kappa``.

    DDIM: ``sqrt(ab_prev)(1 - ab)/sqrt(ab) + c2``. DDPM: ``beta/sqrt(alpha)``.
    The blended DDPM update evaluates its residual after the proposal, so
    the same value only matches it in the posterior mean; its spread comes
    out narrower than the true posterior.
    """
    out = np.empty(len(grid))
    for i in range(len(grid)):
        ab, abp, beta = grid.alpha_bar[i], grid.alpha_bar_prev[i], grid.beta[i]
        if kind == "ddim":
            _, c2 = ddim_coefficients(ab, abp, eta)
            out[i] = np.sqrt(abp) * (1.0 - ab) / np.sqrt(ab) + c2
        else:
            out[i] = beta / np.sqrt(1.0 - beta)
    return out


def _check_finite(x, i, t):
    if not np.all(np.isfinite(x)):
        raise SamplingDivergenceError(i, f"non-finite state at step index {i} (t={t})")


def _record(traj, op, y, x0_hat, kappa, t):
    resid = np.asarray(y) - op.apply(x0_hat)
    kn = 0.0 if kappa is None else float(np.mean(np.linalg.norm(kappa, axis=-1)))
    traj.append(TrajectoryStep(int(t), float(np.mean(np.linalg.norm(resid, axis=-1))), kn))


def _zetas(guidance, grid, sampler):
    matched = None
    if guidance.zeta.rule == "matched":
        matched = matched_zeta(grid, sampler.kind, sampler.eta)
    return guidance.zeta.values(len(grid), matched)


def _ddim_loop(schedule, prior, op, y, guidance, sampler):
    grid = schedule.grid(sampler.nfe)
    rng = np.random.default_rng(sampler.seed)
    x = rng.standard_normal((sampler.chains, prior.dim))
    zetas = None if guidance is None else _zetas(guidance, grid, sampler)
    traj = []
    x0_hat = None
    start = time.perf_counter()
    for i in reversed(range(len(grid))):
        t, ab, abp = int(grid.t[i]), float(grid.alpha_bar[i]), float(grid.alpha_bar_prev[i])
        ev = prior.marginal_score(x, ab)
        x0_hat = ev.x0_hat
        z = rng.standard_normal(x.shape)
        c1, c2 = ddim_coefficients(ab, abp, sampler.eta)
        x_bar = np.sqrt(abp) * x0_hat + c1 * z + c2 * ev.score
        kappa = None
        if guidance is not None and (zetas[i] != 0 or sampler.record_trajectory):
            kappa = compute_kappa(guidance, op, ev, y, ab, abp)
        x = x_bar if kappa is None or zetas[i] == 0 else x_bar + zetas[i] * kappa
        if sampler.record_trajectory and op is not None:
            _record(traj, op, y, x0_hat, kappa, t)
        _check_finite(x, i, t)
    return RunResult(x0_hat, sampler.seed, time.perf_counter() - start, traj)


def _ddpm_loop(schedule, prior, op, y, guidance, sampler):
    grid = schedule.grid(sampler.nfe)
    rng = np.random.default_rng(sampler.seed)
    x = rng.standard_normal((sampler.chains, prior.dim))
    blended = guidance is not None and guidance.method in (Method.CODPS, Method.CODPS_SIMPLIFIED)
    zetas = None if guidance is None else _zetas(guidance, grid, sampler)
    traj = []
    x0_hat = None
    start = time.perf_counter()
    for i in reversed(range(len(grid))):
        t, ab, abp = int(grid.t[i]), float(grid.alpha_bar[i]), float(grid.alpha_bar_prev[i])
        ev = prior.marginal_score(x, ab)
        x0_hat = ev.x0_hat
        z = rng.standard_normal(x.shape)
        c_x, c_0, sig = ddpm_coefficients(ab, abp, grid.beta[i], schedule.sigma_tilde_kind)
        x_bar = c_x * x + c_0 * x0_hat + sig * z
        kappa = None
        active = guidance is not None and (zetas[i] != 0 or sampler.record_trajectory)
        if active and blended:
            kappa = _blended_gradient(guidance, op, y, x_bar, x0_hat, ab, abp)
        elif active:
            kappa = compute_kappa(guidance, op, ev, y, ab, abp)
        x = x_bar if kappa is None or zetas[i] == 0 else x_bar + zetas[i] * kappa
        if sampler.record_trajectory and op is not None:
            _record(traj, op, y, x0_hat, kappa, t)
        _check_finite(x, i, t)
    return RunResult(x0_hat, sampler.seed, time.perf_counter() - start, traj)


def blend_weights(sigma0_sq, alpha_bar):
    """Weights (on x_bar, on x0_hat) of the blended evaluation point."""
    if np.isinf(sigma0_sq):
        return 1.0 / np.sqrt(alpha_bar), 0.0
    denom = (1.0 - alpha_bar) + sigma0_sq * alpha_bar
    return sigma0_sq * np.sqrt(alpha_bar) / denom, (1.0 - alpha_bar) / denom


def _blended_gradient(guidance, op, y, x_bar, x0_hat, ab, abp):
    """Negative gradient in x_bar of ``dy^T (sigma_n^2 I + var A A^T)^{-1} dy``.

    The evaluation point is linear in x_bar with weight w, so the gradient is
    ``-2 w A^T C^{-1} dy``; no autodiff is involved.
    """
    w, w0 = blend_weights(guidance.sigma0_sq, ab)
    point = w * x_bar + w0 * x0_hat
    ab_var = abp if guidance.variance_index == "prev" else ab
    var = posterior_variance(guidance.sigma0_sq, ab_var)
    solve = codps_score if guidance.method is Method.CODPS else codps_score_simplified
    return 2.0 * w * solve(op, point, y, guidance.sigma_n, var, 1.0)


def run_codps_ddim(schedule: DiffusionSchedule, prior, op, y, guidance: GuidanceConfig,
                   sampler: SamplerConfig = SamplerConfig()) -> RunResult:
    """Guided DDIM: proposal from the unconditional score, then
    ``x_{t-1} = x_bar + zeta_t kappa_t``."""
    return _ddim_loop(schedule, prior, op, y, guidance, sampler)


def run_codps_ddpm(schedule: DiffusionSchedule, prior, op, y, guidance: GuidanceConfig,
                   sampler: SamplerConfig = SamplerConfig(kind="ddpm")) -> RunResult:
    """Guided ancestral sampling with the residual taken at the blended point."""
    return _ddpm_loop(schedule, prior, op, y, guidance, sampler)


def run_baseline(schedule: DiffusionSchedule, prior, op, y, guidance: GuidanceConfig,
                 sampler: SamplerConfig = SamplerConfig()) -> RunResult:
    if guidance.method not in (Method.DPS, Method.PIGDM):
        raise InvalidRangeError("run_baseline expects method 'dps' or 'pigdm'")
    loop = _ddim_loop if sampler.kind == "ddim" else _ddpm_loop
    return loop(schedule, prior, op, y, guidance, sampler)


def run_posterior_sampling(schedule, prior, op, y, guidance, sampler) -> RunResult:
    """Pick the loop from ``sampler.kind`` for any guidance method."""
    loop = _ddim_loop if sampler.kind == "ddim" else _ddpm_loop
    return loop(schedule, prior, op, y, guidance, sampler)


def sample_unconditional(schedule, prior, sampler: SamplerConfig) -> RunResult:
    loop = _ddim_loop if sampler.kind == "ddim" else _ddpm_loop
    return loop(schedule, prior, None, None, None, sampler)
