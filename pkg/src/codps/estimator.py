"""scikit-learn style wrapper around the guided samplers."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from codps.exceptions import DimensionError
from codps.guidance import GuidanceConfig, ZetaSchedule
from codps.linops import DenseOperator, LinearOperatorModel
from codps.priors import GaussianPrior
from codps.samplers import SamplerConfig, run_posterior_sampling
from codps.schedule import make_linear_schedule

__all__ = ["PosteriorSampler"]


class PosteriorSampler(BaseEstimator):
    """Posterior sampling for ``y = A x + noise`` under a diffusion prior.

    Parameters
    ----------
    operator : LinearOperatorModel or array of shape (m, n)
        Forward operator; a plain matrix is wrapped in ``DenseOperator``.
    prior : prior object or None
        Any prior with ``marginal_score``. If None, ``fit(X)`` estimates an
        isotropic zero-mean Gaussian prior from training signals.
    method : {"codps", "codps_simplified", "dps", "pigdm"}
    sigma0_sq : float or "auto"
        Variance of the Gaussian closure; "auto" uses the mean per-coordinate
        variance of the training signals (or 1.0 without them).
    n_samples : int
        Chains averaged by ``predict``.

    Attributes
    ----------
    schedule_, guidance_, prior_, operator_, n_features_in_
    """

    def __init__(
        self,
        operator=None,
        prior=None,
        method="codps",
        sigma0_sq="auto",
        sigma_n=0.05,
        zeta_rule="matched",
        zeta_scale=1.0,
        zeta_hi=5e-2,
        zeta_lo=1e-2,
        zeta_switch_t=15,
        gamma_mode="corrected",
        sampler="ddim",
        eta=1.0,
        T=100,
        beta_start=1e-3,
        beta_end=0.2,
        nfe=None,
        n_samples=1,
        random_state=0,
    ):
        self.operator = operator
        self.prior = prior
        self.method = method
        self.sigma0_sq = sigma0_sq
        self.sigma_n = sigma_n
        self.zeta_rule = zeta_rule
        self.zeta_scale = zeta_scale
        self.zeta_hi = zeta_hi
        self.zeta_lo = zeta_lo
        self.zeta_switch_t = zeta_switch_t
        self.gamma_mode = gamma_mode
        self.sampler = sampler
        self.eta = eta
        self.T = T
        self.beta_start = beta_start
        self.beta_end = beta_end
        self.nfe = nfe
        self.n_samples = n_samples
        self.random_state = random_state

    def fit(self, X=None, y=None):
        """Validate hyperparameters and precompute the schedule.

        ``X`` (n_signals, n_features) is optional training data used only
        when ``prior`` is None or ``sigma0_sq == "auto"``.
        """
        op = self.operator
        if op is None:
            raise ValueError("operator is required")
        if not isinstance(op, LinearOperatorModel):
            op = DenseOperator(check_array(op))
        self.operator_ = op
        if X is not None:
            X = check_array(X)
            if X.shape[1] != op.n_in:
                raise DimensionError(f"X has {X.shape[1]} features, operator expects {op.n_in}")
        if self.sigma0_sq == "auto":
            s0 = float(np.mean(X**2)) if X is not None else 1.0
        else:
            s0 = float(self.sigma0_sq)
        if self.prior is None:
            if X is None:
                raise ValueError("fit needs X when no prior is given")
            self.prior_ = GaussianPrior(s0, op.n_in)
        else:
            self.prior_ = self.prior
        if self.prior_.dim != op.n_in:
            raise DimensionError(f"prior dim {self.prior_.dim} != operator input {op.n_in}")
        self.schedule_ = make_linear_schedule(self.T, self.beta_start, self.beta_end)
        self.guidance_ = GuidanceConfig(
            method=self.method,
            sigma0_sq=s0,
            sigma_n=self.sigma_n,
            zeta=ZetaSchedule(self.zeta_rule, self.zeta_hi, self.zeta_lo, self.zeta_switch_t,
                              self.zeta_scale),
            gamma_mode=self.gamma_mode,
        )
        # validates the sampler fields once
        self._sampler_config(0, 1)
        self.n_features_in_ = op.n_out
        return self

    def _sampler_config(self, seed, chains):
        return SamplerConfig(kind=self.sampler, eta=self.eta, nfe=self.nfe, seed=seed, chains=chains)

    def _seed(self, offset):
        base = 0 if self.random_state is None else int(self.random_state)
        return int(np.random.SeedSequence([base, offset]).generate_state(1)[0])

    def sample(self, y, n_samples=None, seed_offset=0):
        """Posterior draws for one measurement vector, shape (n_samples, n)."""
        check_is_fitted(self, "schedule_")
        y = check_array(np.atleast_2d(y)).ravel()
        if y.size != self.operator_.n_out:
            raise DimensionError(f"y has {y.size} entries, operator produces {self.operator_.n_out}")
        chains = int(n_samples or self.n_samples)
        res = run_posterior_sampling(
            self.schedule_, self.prior_, self.operator_, y, self.guidance_,
            self._sampler_config(self._seed(seed_offset), chains),
        )
        return res.x0_final

    def predict(self, Y):
        """Posterior-mean estimates (average of ``n_samples`` draws) per row of Y."""
        check_is_fitted(self, "schedule_")
        Y = check_array(Y)
        if Y.shape[1] != self.operator_.n_out:
            raise DimensionError(f"Y has {Y.shape[1]} columns, operator produces {self.operator_.n_out}")
        return np.stack([self.sample(row, seed_offset=i).mean(axis=0) for i, row in enumerate(Y)])
