"""Scikit-learn style wrappers so the samplers compose with the ecosystem.

GibbsNetClassifier.fit draws one hypothesis from the Gibbs posterior shaped
by the configured complexity measure; GapRegressor.fit trains the learned
gap predictor on (weights, gap) pairs.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .bounds import Certificate, CertificateInput, bound_cor4
from .data import Dataset
from .measures import GibbsObjective, MuFamily, MuSpec, NormKind
from .model import (
    Architecture,
    LossKind,
    ParamVector,
    empirical_risk,
    init_params,
    predict_proba,
)
from .sampler import SgldConfig, sgld_run


class GibbsNetClassifier(BaseEstimator, ClassifierMixin):
    """Feed-forward classifier sampled from a Gibbs posterior via SGLD.

    Parameters mirror the sampler configuration: alpha concentrates the
    posterior around low values of the chosen measure, mu_family/norm/beta
    pick the measure itself.
    """

    def __init__(self, hidden_dims=(), mu_family="emp_risk", norm=None,
                 alpha=100.0, beta=1.0, epochs=10, batch_size=64, lr_init=0.1,
                 leaky_slope=0.01, random_state=0):
        self.hidden_dims = hidden_dims
        self.mu_family = mu_family
        self.norm = norm
        self.alpha = alpha
        self.beta = beta
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr_init = lr_init
        self.leaky_slope = leaky_slope
        self.random_state = random_state

    def _sampler_cfg(self) -> SgldConfig:
        return SgldConfig(
            alpha=self.alpha,
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr_init=self.lr_init,
            seed=self.random_state,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        dims = (X.shape[1],) + tuple(self.hidden_dims) + (len(self.classes_),)
        self.arch_ = Architecture(dims, leaky_slope=self.leaky_slope)
        init = init_params(self.arch_, np.random.default_rng(self.random_state))
        self.init_params_ = init

        family = MuFamily(self.mu_family)
        norm = NormKind(self.norm) if self.norm else None
        if family is MuFamily.EMP_RISK:
            spec = MuSpec(family, alpha=self.alpha)
        elif family is MuFamily.REGULARIZED:
            spec = MuSpec(family, alpha=self.alpha, norm=norm, beta=self.beta,
                          init_ref=init)
        else:
            raise ValueError(
                "fit supports the emp_risk and regularized families; distance and "
                "neural measures need references built by the experiment runner"
            )

        sample = Dataset(X, encoded, len(self.classes_))
        values = sgld_run(
            GibbsObjective(spec, self.arch_, sample),
            init.values,
            self._sampler_cfg(),
            reinit=lambda rng: init_params(self.arch_, rng).values,
        )
        self.params_ = ParamVector(self.arch_, values)
        self.mu_spec_ = spec
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X)
        return predict_proba(self.params_, X)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def empirical_risk(self, X, y, kind: LossKind = LossKind.ZERO_ONE) -> float:
        check_is_fitted(self, "params_")
        X, y = check_X_y(X, y)
        encoded = np.searchsorted(self.classes_, y)
        return empirical_risk(self.params_, X, encoded, kind)

    def certificate(self, X, y, delta=0.05, prior_params=None) -> Certificate:
        """Uniform-prior certificate for the fitted hypothesis on (X, y).

        X, y must be the learning sample used in fit; the prior hypothesis
        defaults to a fresh seeded initialization.
        """
        check_is_fitted(self, "params_")
        X, y = check_X_y(X, y)
        encoded = np.searchsorted(self.classes_, y)
        sample = Dataset(X, encoded, len(self.classes_))
        if prior_params is None:
            prior_params = init_params(
                self.arch_, np.random.default_rng(self.random_state + 1)
            )
        from .measures import mu_value

        inp = CertificateInput(
            m=len(sample),
            delta=delta,
            emp_risk=empirical_risk(self.params_, sample.X, sample.y, LossKind.ZERO_ONE),
            mu_post=mu_value(self.mu_spec_, self.params_, sample=sample),
            mu_prior=mu_value(self.mu_spec_, prior_params, sample=sample),
            alpha=self.alpha,
        )
        return bound_cor4(inp)


class GapRegressor(BaseEstimator, RegressorMixin):
    """Learned complexity measure: weights in, nonnegative gap estimate out."""

    def __init__(self, hidden_layers=3, width=64, batch_size=64,
                 learning_rate=1e-3, val_ratio=0.3, epochs=100, bins=50,
                 min_bin_frac=0.01, random_state=0):
        self.hidden_layers = hidden_layers
        self.width = width
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.val_ratio = val_ratio
        self.epochs = epochs
        self.bins = bins
        self.min_bin_frac = min_bin_frac
        self.random_state = random_state

    def fit(self, X, y):
        from .neural import GapDatasetEntry, PredictorConfig, train_predictor

        X, y = check_X_y(X, y)
        entries = [GapDatasetEntry(np.asarray(row, dtype=float), float(gap), 0.0)
                   for row, gap in zip(X, y)]
        cfg = PredictorConfig(
            hidden_layers=self.hidden_layers,
            width=self.width,
            batch_size=self.batch_size,
            adam_lr=self.learning_rate,
            val_ratio=self.val_ratio,
            epochs=self.epochs,
            bins=self.bins,
            min_bin_frac=self.min_bin_frac,
            seed=self.random_state,
        )
        self.model_ = train_predictor(entries, cfg)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        return self.model_.predict_batch(X)
