import json

import numpy as np
import pytest

from codps.exceptions import ConfigError
from codps.experiments import (
    GMM_STEP_DEFAULTS,
    build_guidance,
    build_sampler,
    build_schedule,
    random_instance,
    resolve_config,
    run_gaussian_posterior,
    run_restore_toy,
    synthetic_gradient,
)
from codps.guidance import Method
from codps.io import read_pgm, write_pgm
from codps.linops import InpaintOperator
from codps.priors import CirculantGaussianPrior
from codps.samplers import run_posterior_sampling


def test_resolve_defaults_and_coercion():
    cfg = resolve_config("op-check", {"instances": "7", "tol": "1e-6"})
    assert cfg["instances"] == 7 and cfg["tol"] == 1e-6
    assert cfg["T"] == 100 and cfg["beta_end"] == 0.2
    with pytest.raises(ConfigError):
        resolve_config("op-check", {"record_trajectory": "maybe"})
    with pytest.raises(ConfigError):
        resolve_config("nope", {})


def test_gmm_scoped_defaults_and_overrides():
    cfg = resolve_config("gmm-cov", {"dps.zeta_hi": "0.1"})
    assert cfg["dps.zeta_hi"] == "0.1"
    assert cfg["codps.zeta_scale"] == GMM_STEP_DEFAULTS["codps"]["zeta_scale"]
    g = build_guidance(cfg, "dps", 1.0)
    assert g.method is Method.DPS
    assert g.zeta.hi == 0.1 and g.step_rule == "normalized"
    assert build_guidance(cfg, "codps", 1.0).zeta.scale == 4.0
    with pytest.raises(ConfigError):
        resolve_config("gmm-cov", {"dps.bogus": "1"})


def test_builders():
    cfg = resolve_config("gaussian-posterior", {"nfe": "10", "chains": "3"})
    s = build_schedule(cfg)
    assert s.T == 100
    sc = build_sampler(cfg, 5)
    assert sc.nfe == 10 and sc.chains == 3 and sc.seed == 5


@pytest.mark.parametrize("kind", ["inpaint", "deblur", "sr", "separable", "dense"])
def test_random_instance_shapes(kind):
    op, x0, y, sn, var, g = random_instance(kind, np.random.default_rng(0))
    assert x0.shape == (3, op.n_in) and y.shape == (op.n_out,)
    assert sn > 0 and var > 0 and g > 0


def test_gaussian_posterior_zeta_off_returns_prior(tmp_path):
    cfg = resolve_config("gaussian-posterior", {"zeta_off": "true", "chains": "400"})
    rep = run_gaussian_posterior(cfg, tmp_path)
    assert rep["rel_mean_error"] is None
    assert rep["fraction_within_3se"] >= 0.9
    assert json.loads((tmp_path / "report.json").read_text())["chains"] == 400


@pytest.mark.parametrize("operator", ["deblur", "inpaint", "dense"])
def test_gaussian_posterior_other_operators(tmp_path, operator):
    cfg = resolve_config("gaussian-posterior", {"operator": operator, "chains": "400"})
    assert run_gaussian_posterior(cfg, tmp_path)["passed"]


def test_identity_restore_tracks_exact_posterior_mean():
    sn = 0.05
    cfg = resolve_config("restore", {"operator": "identity", "chains": "64", "sigma_n": sn})
    truth = synthetic_gradient(16)
    prior = CirculantGaussianPrior.smooth(truth.shape, 0.5, 0.05, 4.0)
    y = truth.ravel() + sn * np.random.default_rng(0).standard_normal(256)
    op = InpaintOperator(np.ones(truth.shape))
    X = run_posterior_sampling(build_schedule(cfg), prior, op, y,
                               build_guidance(cfg, sigma0_sq=0.05), build_sampler(cfg, 0)).x0_final
    c = prior.spectrum
    exact = prior.mean_vector + prior._filter(y - prior.mean_vector, c / (c + sn**2))
    assert np.sqrt(np.mean((X.mean(0) - exact) ** 2)) < 0.01


def test_sr_of_constant_image_stays_constant(tmp_path):
    write_pgm(tmp_path / "c.pgm", np.full((16, 16), 0.5))
    cfg = resolve_config("restore", {"operator": "sr", "image": str(tmp_path / "c.pgm"),
                                     "chains": "16"})
    rows = run_restore_toy(cfg, tmp_path / "out")
    rec = read_pgm(tmp_path / "out" / "reconstruction.pgm")
    assert rows[0]["finite"]
    assert abs(rec.mean() - 0.5) < 0.02
    assert rec.std() < 0.05


def test_restore_rejects_large_images(tmp_path):
    write_pgm(tmp_path / "big.pgm", np.zeros((80, 80)))
    cfg = resolve_config("restore", {"image": str(tmp_path / "big.pgm")})
    with pytest.raises(ConfigError):
        run_restore_toy(cfg, tmp_path / "o")


def test_synthetic_gradient_range():
    img = synthetic_gradient(32)
    assert img.shape == (32, 32)
    assert 0.0 <= img.min() and img.max() <= 1.0


def test_gmm_benchmark_settings():
    cfg = resolve_config("gmm-cov", {})
    assert (cfg["T"], cfg["sigma_n"], cfg["K"], cfg["n"]) == (100, 0.05, 3, 8)
    assert cfg["samples"] == 2000
