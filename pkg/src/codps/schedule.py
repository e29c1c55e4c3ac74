"""Discrete variance-preserving noise schedules.

Arrays are stored 0-based: ``beta[k]`` is beta_t for t = k + 1. The
convention alpha_bar_0 = 1 makes the first diffusion step well defined.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from codps.exceptions import InvalidRangeError

__all__ = [
    "DiffusionSchedule",
    "SigmaTildeKind",
    "StepGrid",
    "extract_step",
    "make_linear_schedule",
]


class SigmaTildeKind(str, enum.Enum):
    """Variance of the injected noise in ancestral sampling."""

    BETA = "beta"
    POSTERIOR_BETA = "posterior_beta"


@dataclass(frozen=True)
class DiffusionSchedule:
    """A T-step schedule with its cumulative products."""

    beta: np.ndarray
    sigma_tilde_kind: SigmaTildeKind = SigmaTildeKind.POSTERIOR_BETA

    def __post_init__(self):
        beta = np.array(self.beta, dtype=np.float64)
        if beta.ndim != 1 or beta.size < 1:
            raise InvalidRangeError("beta must be a nonempty 1-D sequence")
        if np.any(beta <= 0.0) or np.any(beta >= 1.0):
            raise InvalidRangeError("every beta_t must lie in (0, 1)")
        beta.setflags(write=False)
        alpha = 1.0 - beta
        alpha.setflags(write=False)
        alpha_bar = np.cumprod(alpha)
        alpha_bar.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "alpha_bar", alpha_bar)
        object.__setattr__(self, "sigma_tilde_kind", SigmaTildeKind(self.sigma_tilde_kind))

    @property
    def T(self) -> int:
        return int(self.beta.size)

    def alpha_bar_at(self, t):
        """alpha_bar for 1-based step ``t``; ``t = 0`` returns exactly 1."""
        t = np.asarray(t)
        padded = np.concatenate([[1.0], self.alpha_bar])
        return padded[t]

    def sigma_tilde_sq(self) -> np.ndarray:
        """Per-step injected-noise variance for the configured kind."""
        if self.sigma_tilde_kind is SigmaTildeKind.BETA:
            return self.beta.copy()
        prev = np.concatenate([[1.0], self.alpha_bar[:-1]])
        return (1.0 - prev) / (1.0 - self.alpha_bar) * self.beta

    def grid(self, nfe: int | None = None) -> "StepGrid":
        return StepGrid.build(self, nfe)


def make_linear_schedule(
    T: int,
    beta_start: float = 1e-4,
    beta_end: float = 0.02,
    sigma_tilde: SigmaTildeKind | str = SigmaTildeKind.POSTERIOR_BETA,
) -> DiffusionSchedule:
    """Arithmetic beta sequence from ``beta_start`` to ``beta_end``.

    Raises:
        InvalidRangeError: if ``T < 1`` or not ``0 < beta_start <= beta_end < 1``.
    """
    if int(T) != T or T < 1:
        raise InvalidRangeError(f"T must be a positive integer, got {T!r}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise InvalidRangeError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    beta = np.linspace(beta_start, beta_end, int(T)) if T > 1 else np.array([beta_start])
    return DiffusionSchedule(beta=beta, sigma_tilde_kind=sigma_tilde)


def subgrid_timesteps(T: int, nfe: int) -> np.ndarray:
    """Uniform-stride 1-based timesteps over {1..T}, always ending at T."""
    if not (1 <= nfe <= T):
        raise InvalidRangeError(f"nfe must be in [1, {T}], got {nfe}")
    k = np.arange(1, nfe + 1)
    # integer ceil(k*T/nfe) avoids float rounding of the stride
    return -((-k * T) // nfe)


@dataclass(frozen=True)
class StepGrid:
    """The timesteps a sampler actually visits, in increasing order.

    ``alpha_bar_prev[i]`` refers to the previous grid point, not to t - 1,
    so a subsampled grid behaves like a coarser schedule.
    """

    t: np.ndarray
    alpha_bar: np.ndarray
    alpha_bar_prev: np.ndarray
    beta: np.ndarray

    @classmethod
    def build(cls, schedule: DiffusionSchedule, nfe: int | None = None) -> "StepGrid":
        T = schedule.T
        nfe = T if nfe is None else int(nfe)
        t = subgrid_timesteps(T, nfe)
        ab = schedule.alpha_bar[t - 1]
        ab_prev = np.concatenate([[1.0], ab[:-1]])
        if nfe == T:
            beta = schedule.beta.copy()
        else:
            beta = 1.0 - ab / ab_prev
        return cls(t=t, alpha_bar=ab, alpha_bar_prev=ab_prev, beta=beta)

    def __len__(self) -> int:
        return int(self.t.size)


def extract_step(schedule: DiffusionSchedule, i: int, nfe: int | None = None):
    """Return ``(t, alpha_bar_t, alpha_bar_prev)`` for grid index ``i``.

    Raises:
        IndexError: if ``i`` is outside ``[0, nfe)``.
    """
    grid = schedule.grid(nfe)
    if not (0 <= i < len(grid)):
        raise IndexError(f"step index {i} out of range for a {len(grid)}-step grid")
    return int(grid.t[i]), float(grid.alpha_bar[i]), float(grid.alpha_bar_prev[i])
