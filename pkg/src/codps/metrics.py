"""Evaluation metrics: covariance error against the exact posterior, PSNR."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from codps.exceptions import DimensionError, InvalidRangeError
from codps.oracle import map_posterior_stats, sample_covariance

__all__ = ["ClusterError", "CovErrorCurve", "covariance_error", "psnr", "residual_norm"]


@dataclass(frozen=True)
class ClusterError:
    cluster: int
    n_samples: int
    frob_error: float
    rel_frob_error: float


def covariance_error(samples_by_cluster, prior, A, sigma_n) -> Dict[int, ClusterError]:
    """Frobenius distance between each cluster's sample covariance and the
    exact posterior covariance of that mixture component.

    The posterior covariance does not depend on y, so no measurement is
    needed. Each cluster must hold at least ``n + 1`` samples.
    """
    n = prior.dim
    out = {}
    for k in sorted(samples_by_cluster):
        X = np.atleast_2d(np.asarray(samples_by_cluster[k], dtype=np.float64))
        if X.shape[0] < n + 1:
            raise InvalidRangeError(
                f"cluster {k} has {X.shape[0]} samples; need at least {n + 1}"
            )
        target = map_posterior_stats(
            prior.covariances[k], prior.means[k], A, sigma_n, np.zeros(np.shape(A)[0])
        ).covariance
        err = float(np.linalg.norm(sample_covariance(X) - target))
        out[int(k)] = ClusterError(int(k), X.shape[0], err, err / float(np.linalg.norm(target)))
    return out


def psnr(x, ref, peak=None) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` when the images coincide.

    ``peak`` defaults to the dynamic range of ``ref`` (1 if ``ref`` is flat).
    """
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise DimensionError(f"shape mismatch {x.shape} vs {ref.shape}")
    if peak is None:
        peak = float(ref.max() - ref.min()) or 1.0
    if not peak > 0:
        raise InvalidRangeError("peak must be positive")
    mse = float(np.mean((x - ref) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(peak**2 / mse)


def residual_norm(op, x, y) -> float:
    return float(np.linalg.norm(np.asarray(y) - op.apply(x)))


@dataclass
class CovErrorCurve:
    """Mean covariance error per (method, m), averaged over clusters and seeds."""

    m_values: List[int]
    errors: Dict[str, List[float]] = field(default_factory=dict)
    rel_errors: Dict[str, List[float]] = field(default_factory=dict)
    seeds: List[int] = field(default_factory=list)

    def add(self, method: str, m: int, frob: float, rel: float):
        idx = self.m_values.index(m)
        for table, value in ((self.errors, frob), (self.rel_errors, rel)):
            row = table.setdefault(method, [float("nan")] * len(self.m_values))
            row[idx] = value

    def __post_init__(self):
        for table in (self.errors, self.rel_errors):
            for row in table.values():
                if any(v < 0 for v in row if np.isfinite(v)):
                    raise InvalidRangeError("errors must be nonnegative")
