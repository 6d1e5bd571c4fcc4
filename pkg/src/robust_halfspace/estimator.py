"""scikit-learn style wrappers."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .config import ExperimentConfig
from .dist import ArraySource
from .learn import robust_learn
from .partition import HypothesisData, evaluate_detail
from .poly import make_basis
from .verify import accepted_mask, verify_points


class MonomialFeatures(TransformerMixin, BaseEstimator):
    """All monomials of degree <= ``degree`` in graded-lex order, constant first."""

    def __init__(self, degree=3):
        self.degree = degree

    def fit(self, X, y=None):
        X = check_array(X)
        self.basis_ = make_basis(X.shape[1], self.degree)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "basis_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return self.basis_.features(X)


class RobustHalfspaceClassifier(ClassifierMixin, BaseEstimator):
    """Robust agnostic halfspace learner over labels in {-1, +1}.

    ``fit`` runs the full pipeline on the given sample; every later call is
    deterministic given ``random_state``.  The fitted package is ``model_``.
    """

    def __init__(self, degree=3, r=0.05, eps=0.1, delta=0.1, m=256, n_samples=None,
                 phi_m=4096, verify_margin=0.02, random_state=0):
        self.degree = degree
        self.r = r
        self.eps = eps
        self.delta = delta
        self.m = m
        self.n_samples = n_samples
        self.phi_m = phi_m
        self.verify_margin = verify_margin
        self.random_state = random_state

    def _config(self, n, d) -> ExperimentConfig:
        n_samples = self.n_samples or n
        return ExperimentConfig(
            seed=int(self.random_state), r=self.r, eps=self.eps, delta=self.delta,
            d=d, degree=self.degree, n_samples=n_samples, m=self.m,
            n_rounding=min(2000, n), n_test=min(4000, n), n_mean=min(10 * d**3, n),
            phi_m=self.phi_m, verify_margin=self.verify_margin,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        labels = np.unique(y)
        if not set(labels.tolist()) <= {-1, 1}:
            raise ValueError(f"labels must be -1 or +1, got {labels}")
        self.classes_ = np.array([-1, 1])
        cfg = self._config(*X.shape)
        source = ArraySource(X, y, seed=cfg.seed)
        self.model_ = robust_learn(cfg, source)
        self.n_features_in_ = X.shape[1]
        return self

    def _check(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X

    def predict(self, X):
        X = self._check(X)
        return evaluate_detail(self.model_, X).labels.astype(int)

    def decision_function(self, X):
        """``p(x) - t_i`` for the active threshold, sign-flipped where the corrector flips."""
        X = self._check(X)
        ev = evaluate_detail(self.model_, X)
        t = np.asarray(self.model_.thresholds)[ev.interval]
        raw = ev.values - t
        return np.where(ev.phi > 0.8, -raw, raw)

    def certify(self, X):
        """Boolean mask of points the verifier accepts at radius ``r``."""
        X = self._check(X)
        return accepted_mask(verify_points(self.model_, self.model_, X, self.verify_margin))

    @classmethod
    def from_model(cls, model: HypothesisData, **params):
        est = cls(r=model.r, degree=model.k, phi_m=model.phi_m, **params)
        est.model_ = model
        est.classes_ = np.array([-1, 1])
        est.n_features_in_ = model.d
        return est
