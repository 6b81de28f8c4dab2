"""Unbiased subsampled estimators of the log-posterior gradient."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .models import TargetModel

KINDS = ("Full", "Simple", "ControlVariate", "Preferential")


@dataclass(frozen=True)
class GradEstimate:
    value: np.ndarray
    indices: np.ndarray
    kind: str


@dataclass(frozen=True)
class ControlVariateAnchor:
    """Anchor point with its full gradient and (optionally) stored per-term gradients."""

    theta_hat: np.ndarray
    anchor_full_grad: np.ndarray
    per_term_anchor_grads: np.ndarray | None = None


def find_mode(target: TargetModel, theta0=None, step: float | None = None, max_iter: int = 20000,
              tol: float = 1e-10) -> np.ndarray:
    """Deterministic gradient ascent with a fixed step and iteration cap.

    Uses the closed-form mode when the model has one. The default step is
    ``1 / ||J||`` for models with a Hessian bound J, else 1e-3.
    """
    m = target.mode()
    if m is not None:
        return m
    theta = np.zeros(target.dim) if theta0 is None else np.array(theta0, dtype=float)
    if step is None:
        J = target.hessian_bound()
        step = 1.0 / np.linalg.norm(J, 2) if J is not None else 1e-3
    for _ in range(max_iter):
        g = target.grad_log_pdf(theta)
        if np.linalg.norm(g) < tol:
            break
        theta = theta + step * g
    return theta


def build_anchor(target: TargetModel, theta_hat=None, store_terms: bool = True) -> ControlVariateAnchor:
    theta_hat = find_mode(target) if theta_hat is None else np.asarray(theta_hat, dtype=float)
    terms = target.grad_log_pdf_terms(theta_hat) if store_terms and target.n_data else None
    return ControlVariateAnchor(theta_hat, target.grad_log_pdf(theta_hat), terms)


def _check_m(target, m):
    n = target.n_data
    if n == 0:
        raise ConfigError(f"{target.kind} has no data to subsample", ["batch"])
    if not 1 <= m <= n:
        raise ConfigError(f"batch size m={m} must lie in [1, N={n}]", ["batch"])
    return n


def simple_grad(target: TargetModel, theta, m: int, rng: np.random.Generator) -> GradEstimate:
    """``(N/m) sum_{j in S} grad_j(theta)``, S drawn without replacement.

    With ``m == N`` the exact full gradient is returned.
    """
    n = _check_m(target, m)
    if m == n:
        return GradEstimate(target.grad_log_pdf(theta), np.arange(n), "Full")
    idx = rng.choice(n, m, replace=False)
    val = (n / m) * target.grad_log_pdf_terms(theta, idx).sum(axis=0)
    return GradEstimate(val, idx, "Simple")


def cv_grad(target: TargetModel, theta, anchor: ControlVariateAnchor, m: int,
            rng: np.random.Generator) -> GradEstimate:
    """``grad(theta_hat) + (N/m) sum_{j in S} [grad_j(theta) - grad_j(theta_hat)]``."""
    n = _check_m(target, m)
    theta = np.asarray(theta, dtype=float)
    if anchor.theta_hat.shape != theta.shape:
        raise ConfigError("anchor dimension does not match theta", ["anchor"])
    idx = rng.choice(n, m, replace=False) if m < n else np.arange(n)
    if np.array_equal(theta, anchor.theta_hat):
        return GradEstimate(anchor.anchor_full_grad.copy(), idx, "ControlVariate")
    if target.affine_terms or anchor.per_term_anchor_grads is None:
        corr = target.cv_correction(theta, anchor.theta_hat, idx)
    else:
        diff = target.grad_log_pdf_terms(theta, idx) - anchor.per_term_anchor_grads[idx]
        corr = (n / m) * diff.sum(axis=0)
    return GradEstimate(anchor.anchor_full_grad + corr, idx, "ControlVariate")


def preferential_weights(target: TargetModel, theta_ref) -> np.ndarray:
    """Weights proportional to per-term gradient norms at ``theta_ref``.

    Zero-norm terms get a floor of 1e-12/N before renormalising; if every
    norm is zero the weights are uniform.
    """
    norms = np.linalg.norm(target.grad_log_pdf_terms(theta_ref), axis=1)
    n = norms.shape[0]
    tot = norms.sum()
    if tot == 0:
        return np.full(n, 1.0 / n)
    p = norms / tot
    p[p == 0] = 1e-12 / n
    return p / p.sum()


def preferential_grad(target: TargetModel, theta, weights, m: int, rng: np.random.Generator) -> GradEstimate:
    """``(1/m) sum_{j in S} grad_j(theta) / p_j`` with S drawn with replacement from p."""
    n = target.n_data
    p = np.asarray(weights, dtype=float)
    if p.shape != (n,) or np.any(p <= 0) or not math.isclose(p.sum(), 1.0, rel_tol=0, abs_tol=1e-9):
        raise ConfigError("preferential weights must be positive, length N, and sum to 1", ["weights"])
    if m < 1:
        raise ConfigError("batch size must be >= 1", ["batch"])
    idx = rng.choice(n, m, replace=True, p=p)
    val = (target.grad_log_pdf_terms(theta, idx) / p[idx, None]).sum(axis=0) / m
    return GradEstimate(val, idx, "Preferential")


def adaptive_batch_bound(theta, theta_hat, v_target: float, weights, lipschitz) -> float:
    """``|theta - theta_hat|^2 sum_j L_j^2 / p_j / V``."""
    if not v_target > 0:
        raise ConfigError("target variance must be positive", ["v_target"])
    r2 = float(np.sum((np.asarray(theta, float) - np.asarray(theta_hat, float)) ** 2))
    L = np.asarray(lipschitz, dtype=float)
    return r2 * float(np.sum(L**2 / np.asarray(weights, dtype=float))) / v_target


def adaptive_batch_size(theta, theta_hat, v_target: float, weights, lipschitz) -> int:
    """Smallest integer m exceeding :func:`adaptive_batch_bound`, clamped to [1, N]."""
    n = len(weights)
    b = adaptive_batch_bound(theta, theta_hat, v_target, weights, lipschitz)
    if not math.isfinite(b) or b >= n:
        return n
    return int(min(max(math.floor(b) + 1, 1), n))


def simple_variance_constant(target: TargetModel, theta) -> float:
    """C1 proxy: the largest squared per-term gradient norm at theta."""
    return float(np.max(np.sum(target.grad_log_pdf_terms(theta) ** 2, axis=1)))


def cv_variance_constant(target: TargetModel) -> float:
    """C2 = mean of squared per-term Lipschitz constants."""
    return float(np.mean(np.asarray(target.term_lipschitz()) ** 2))


def pseudo_variance(estimator, truth, n_rep: int, rng: np.random.Generator) -> float:
    """Monte Carlo ``E |estimate - truth|^2`` over ``n_rep`` calls of ``estimator(rng)``."""
    errs = np.array([estimator(rng).value - truth for _ in range(n_rep)])
    return float(np.mean(np.sum(errs**2, axis=1)))


class SagaEstimator:
    """Control-variate estimator whose stored per-term gradients are refreshed
    at every visited index (single chain only; it mutates its table)."""

    def __init__(self, target: TargetModel, theta0):
        self.target = target
        self.table = target.grad_log_pdf_terms(theta0).copy()
        self.total = self.table.sum(axis=0)

    def __call__(self, theta, m: int, rng: np.random.Generator) -> GradEstimate:
        n = _check_m(self.target, m)
        idx = rng.choice(n, m, replace=False)
        new = self.target.grad_log_pdf_terms(theta, idx)
        delta = new - self.table[idx]
        val = self.total + (n / m) * delta.sum(axis=0)
        self.table[idx] = new
        self.total = self.total + delta.sum(axis=0)
        return GradEstimate(val, idx, "ControlVariate")
