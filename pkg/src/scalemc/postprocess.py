"""scikit-learn style wrappers around Stein thinning and Stein weights.

Both reduce a sample set to a (weighted) subset, so they behave as
transformers: ``fit`` selects, ``transform`` returns the selected rows.
Gradients of log pi come either from ``target`` or from ``fit(..., grads=)``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import stein
from .errors import ConfigError


def _gradients(target, X, grads):
    if grads is not None:
        G = check_array(grads, ensure_2d=True)
        if G.shape != X.shape:
            raise ConfigError(f"gradients {G.shape} do not match samples {X.shape}", ["grads"])
        return G
    if target is None:
        raise ConfigError("pass grads to fit or set target", ["grads", "target"])
    return np.asarray(target.grad_log_pdf_batch(X), dtype=float).reshape(X.shape)


class _SteinBase(BaseEstimator, TransformerMixin):
    def _config(self):
        return stein.SteinKernelConfig(self.family, self.scale, self.beta, self.tilt, self.standardize)

    def transform(self, X):
        check_is_fitted(self, "selected_")
        X = check_array(X, ensure_2d=True)
        if X.shape[0] != self.n_samples_:
            raise ConfigError("transform expects the sample set passed to fit", ["X"])
        return X[self.selected_]

    def score(self, X, y=None, grads=None):
        """Negative KSD of the fitted selection (higher is better)."""
        check_is_fitted(self, "selected_")
        X = check_array(X, ensure_2d=True)
        G = _gradients(self.target, X, grads)
        return -stein.ksd(X, G, self.full_weights_, self._config())


class SteinThinning(_SteinBase):
    """Greedy Stein thinning to ``m`` points (repeats allowed)."""

    def __init__(self, m=100, target=None, family="imq", scale=None, beta=0.5, tilt=None, standardize=True):
        self.m = m
        self.target = target
        self.family = family
        self.scale = scale
        self.beta = beta
        self.tilt = tilt
        self.standardize = standardize

    def fit(self, X, y=None, grads=None):
        X = check_array(X, ensure_2d=True)
        G = _gradients(self.target, X, grads)
        self.n_samples_ = X.shape[0]
        self.selected_ = stein.greedy_thin(X, G, int(self.m), self._config())
        self.full_weights_ = stein.thinned_weights(self.selected_, X.shape[0])
        self.ksd_ = stein.ksd(X, G, self.full_weights_, self._config())
        return self


class SteinWeights(_SteinBase):
    """Stein-optimal weights, signed or on the simplex.

    After ``fit``, ``weights_`` holds the weight of each selected row and
    ``full_weights_`` the weight of every input row.
    """

    def __init__(self, mode="simplex", target=None, family="imq", scale=None, beta=0.5, tilt=None,
                 standardize=True, tol=1e-8, max_iter=20000):
        self.mode = mode
        self.target = target
        self.family = family
        self.scale = scale
        self.beta = beta
        self.tilt = tilt
        self.standardize = standardize
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None, grads=None):
        if self.mode not in ("signed", "simplex"):
            raise ConfigError("mode must be 'signed' or 'simplex'", ["mode"])
        X = check_array(X, ensure_2d=True)
        G = _gradients(self.target, X, grads)
        K = stein.stein_matrix(X, G, self._config())
        if self.mode == "signed":
            w = stein.optimal_weights_signed(K)
            self.converged_ = True
            self.selected_ = np.arange(X.shape[0])
        else:
            res = stein.optimal_weights_simplex(K, self.tol, self.max_iter)
            w = res.weights
            self.converged_ = res.converged
            self.selected_ = np.flatnonzero(w > 0)
        self.n_samples_ = X.shape[0]
        self.full_weights_ = w
        self.weights_ = w[self.selected_]
        self.ksd_ = float(np.sqrt(max(w @ K @ w, 0.0)))
        return self
