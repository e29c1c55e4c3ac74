"""Covariance-corrected diffusion posterior sampling for linear inverse problems."""

from codps.estimator import PosteriorSampler
from codps.guidance import GuidanceConfig, ZetaSchedule
from codps.linops import (
    BlurDecimateOperator,
    BlurOperator,
    DenseOperator,
    InpaintOperator,
    SeparableOperator,
)
from codps.priors import GaussianPrior, GmmPrior
from codps.samplers import SamplerConfig, run_baseline, run_codps_ddim, run_codps_ddpm
from codps.schedule import DiffusionSchedule, make_linear_schedule

__version__ = "0.1.0"

__all__ = [
    "BlurDecimateOperator",
    "BlurOperator",
    "DenseOperator",
    "DiffusionSchedule",
    "GaussianPrior",
    "GmmPrior",
    "GuidanceConfig",
    "InpaintOperator",
    "PosteriorSampler",
    "SamplerConfig",
    "SeparableOperator",
    "ZetaSchedule",
    "make_linear_schedule",
    "run_baseline",
    "run_codps_ddim",
    "run_codps_ddpm",
    "__version__",
]
