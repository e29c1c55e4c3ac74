import numpy as np
import pytest

from codps.exceptions import IllPosedGuidanceError, InvalidRangeError
from codps.experiments import random_instance
from codps.guidance import (
    GuidanceConfig,
    ZetaSchedule,
    codps_score,
    codps_score_inpaint,
    codps_score_simplified,
    compute_kappa,
    dps_score,
    pigdm_score,
)
from codps.linops import DenseOperator, InpaintOperator, SeparableOperator
from codps.oracle import dense_kappa, materialize
from codps.priors import GaussianPrior, posterior_variance, random_gmm

rng = np.random.default_rng(11)


@pytest.mark.parametrize("kind", ["inpaint", "deblur", "sr", "separable", "dense"])
def test_fast_matches_dense(kind):
    for _ in range(10):
        op, x0, y, sn, var, g = random_instance(kind, rng)
        fast = codps_score(op, x0, y, sn, var, g)
        ref = dense_kappa(materialize(op), x0, y, sn, var, g)
        assert np.linalg.norm(fast - ref) <= 1e-9 * np.linalg.norm(ref)


def test_zero_variance_is_plain_residual_gradient():
    op, x0, y, sn, _, _ = random_instance("deblur", rng)
    A = materialize(op)
    np.testing.assert_allclose(
        codps_score(op, x0, y, sn, 0.0, 1.0), (y - x0 @ A.T) @ A / sn**2, rtol=1e-9
    )


def test_zero_residual_gives_zero_score():
    op, x0, _, sn, var, g = random_instance("sr", rng)
    np.testing.assert_allclose(codps_score(op, x0, op.apply(x0), sn, var, g), 0.0, atol=1e-12)


def test_linear_in_residual():
    op, x0, y, sn, var, g = random_instance("separable", rng)
    k1 = codps_score(op, x0[0], y, sn, var, g)
    k2 = codps_score(op, x0[0], 2 * y - op.apply(x0[0]), sn, var, g)
    np.testing.assert_allclose(k2, 2 * k1, rtol=1e-10, atol=1e-12)


def test_inpaint_unobserved_pixels_get_nothing():
    mask = np.array([[1.0, 0.0], [0.0, 1.0]])
    k = codps_score_inpaint(mask, np.zeros(4), np.ones(4), 0.1, 0.5, 1.0)
    np.testing.assert_allclose(k, [1 / 0.51, 0, 0, 1 / 0.51])


def test_noiseless_zero_variance_is_ill_posed():
    op = InpaintOperator(np.ones((2, 2)))
    with pytest.raises(IllPosedGuidanceError):
        codps_score(op, np.zeros(4), np.ones(4), 0.0, 0.0, 1.0)
    with pytest.raises(IllPosedGuidanceError):
        codps_score(DenseOperator(np.zeros((2, 3))), np.zeros(3), np.ones(2), 0.0, 1.0, 1.0)


def test_simplified_equals_full_for_orthonormal_rows():
    Q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    op = DenseOperator(Q[:3])
    x0, y = rng.standard_normal(6), rng.standard_normal(3)
    np.testing.assert_allclose(
        codps_score_simplified(op, x0, y, 0.1, 0.7, 0.9), codps_score(op, x0, y, 0.1, 0.7, 0.9),
        rtol=1e-12,
    )


def test_separable_orthogonal_factors_reduce_to_scalar():
    Q1, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    Q2, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    op = SeparableOperator(Q1, Q2)
    x0, y = rng.standard_normal(12), rng.standard_normal(12)
    expected = op.adjoint(y - op.apply(x0)) / (0.04 + 0.5)
    np.testing.assert_allclose(codps_score(op, x0, y, 0.2, 0.5, 1.0), expected, rtol=1e-12)


def test_dps_is_gradient_of_gaussian_log_likelihood():
    prior = random_gmm(4, 2, np.random.default_rng(1))
    op = DenseOperator(rng.standard_normal((3, 4)))
    y, x, ab, sn = rng.standard_normal(3), rng.standard_normal(4), 0.4, 0.3

    def loglik(z):
        r = y - op.apply(prior.marginal_score(z, ab).x0_hat)
        return -0.5 * r @ r / sn**2

    h = 1e-6
    fd = np.array([(loglik(x + h * e) - loglik(x - h * e)) / (2 * h) for e in np.eye(4)])
    got = dps_score(op, prior.marginal_score(x, ab), y, sn)
    np.testing.assert_allclose(got, fd, rtol=1e-5, atol=1e-7)


def test_dps_normalized_rule():
    prior = GaussianPrior(1.0, 3)
    op = DenseOperator(np.eye(3))
    ev = prior.marginal_score(np.zeros(3), 0.5)
    k = dps_score(op, ev, np.ones(3), 0.1, "normalized")
    np.testing.assert_allclose(np.linalg.norm(k), np.sqrt(0.5))
    np.testing.assert_array_equal(dps_score(op, ev, np.zeros(3), 0.1, "normalized"), 0.0)
    with pytest.raises(IllPosedGuidanceError):
        dps_score(op, ev, np.ones(3), 0.0)


def test_codps_is_exact_likelihood_score_for_gaussian_prior():
    # for a Gaussian prior, p(y | x_t) is Gaussian and kappa is its exact gradient
    s0, ab, sn = 1.3, 0.45, 0.2
    prior = GaussianPrior(s0, 5)
    A = rng.standard_normal((3, 5))
    x, y = rng.standard_normal(5), rng.standard_normal(3)
    ev = prior.marginal_score(x, ab)
    cfg = GuidanceConfig("codps", sigma0_sq=s0, sigma_n=sn)
    var = posterior_variance(s0, ab)
    C = sn**2 * np.eye(3) + var * A @ A.T

    def loglik(z):
        r = y - A @ prior.marginal_score(z, ab).x0_hat
        return -0.5 * r @ np.linalg.solve(C, r)

    h = 1e-6
    fd = np.array([(loglik(x + h * e) - loglik(x - h * e)) / (2 * h) for e in np.eye(5)])
    np.testing.assert_allclose(compute_kappa(cfg, DenseOperator(A), ev, y, ab), fd, rtol=1e-6)


def test_pigdm_with_gaussian_prior_equals_codps():
    # with r^2 equal to the posterior variance and the exact Jacobian the two coincide
    s0, ab, sn = 2.0, 0.3, 0.1
    prior = GaussianPrior(s0, 4)
    op = DenseOperator(rng.standard_normal((2, 4)))
    ev = prior.marginal_score(rng.standard_normal(4), ab)
    y = rng.standard_normal(2)
    var = posterior_variance(s0, ab)
    cfg = GuidanceConfig("codps", sigma0_sq=s0, sigma_n=sn)
    np.testing.assert_allclose(
        pigdm_score(op, ev, y, sn, var), compute_kappa(cfg, op, ev, y, ab), rtol=1e-12
    )


def test_pigdm_r_sq_rule():
    cfg = GuidanceConfig("pigdm")
    assert cfg.r_sq(0.3) == pytest.approx(0.7)


def test_zeta_schedule():
    z = ZetaSchedule("piecewise", hi=0.5, lo=0.1, switch_t=2)
    np.testing.assert_array_equal(z.values(4), [0.1, 0.1, 0.5, 0.5])
    np.testing.assert_array_equal(ZetaSchedule.off().values(3), 0.0)
    np.testing.assert_array_equal(ZetaSchedule("matched", scale=2).values(2, [1.0, 3.0]), [2, 6])
    with pytest.raises(InvalidRangeError):
        ZetaSchedule("matched").values(2)
    with pytest.raises(InvalidRangeError):
        ZetaSchedule("bogus")


def test_config_validation():
    with pytest.raises(InvalidRangeError):
        GuidanceConfig(sigma_n=-1.0)
    with pytest.raises(InvalidRangeError):
        GuidanceConfig(sigma0_sq=0.0)
    with pytest.raises(ValueError):
        GuidanceConfig(method="nope")
    assert GuidanceConfig(sigma0_sq=np.inf).sigma0_sq == np.inf
