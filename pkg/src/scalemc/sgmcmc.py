"""Discretised diffusions: ULA, SGLD variants, SGHMC and the general
drift/diffusion recipe.

Runners keep two independent random streams, one for the injected Gaussian
noise and one for subsampling, so the noise sequence is the same whichever
gradient estimator is used.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import grad_estimators as ge
from .classic_mcmc import ChainOutput
from .errors import ConfigError, DivergenceError, NumericalFault
from .models import TargetModel

DIVERGENCE_NORM = 1e8
ESTIMATORS = ("full", "simple", "cv", "preferential", "saga")


def psd_factor(A) -> np.ndarray:
    """A matrix R with R R' = A for symmetric PSD A (Cholesky when possible)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(0.5 * (A + A.T))
        if w.min() < -1e-10 * max(1.0, abs(w).max()):
            raise ConfigError("noise covariance is not positive semi-definite", ["noise"]) from None
        return V * np.sqrt(np.clip(w, 0.0, None))


@dataclass
class SgmcmcConfig:
    """Step size, batch and estimator settings shared by the SG samplers."""

    step: float
    batch: int | None = None
    estimator: str = "full"
    friction: np.ndarray | float | None = None
    mass: np.ndarray | float | None = None
    noise_correction: np.ndarray | float | None = None
    anchor: ge.ControlVariateAnchor | None = None
    weights: np.ndarray | None = None
    saga: ge.SagaEstimator | None = field(default=None, repr=False)

    def validate(self, target: TargetModel | None = None, momentum: bool = False) -> "SgmcmcConfig":
        bad = []
        msgs = []
        if not (self.step > 0 and math.isfinite(self.step)):
            bad.append("step")
            msgs.append("step must be positive")
        if self.estimator not in ESTIMATORS:
            bad.append("estimator")
            msgs.append(f"estimator must be one of {ESTIMATORS}")
        elif self.estimator != "full":
            n = target.n_data if target is not None else None
            if self.batch is None or self.batch < 1 or (n is not None and self.batch > n):
                bad.append("batch")
                msgs.append("batch must lie in [1, N]")
            if self.estimator == "cv" and self.anchor is None and target is None:
                bad.append("anchor")
                msgs.append("cv estimator needs an anchor")
        if momentum:
            d = target.dim if target is not None else None
            try:
                self.noise_cov(d)
            except ConfigError as e:
                bad += e.fields
                msgs.append(str(e))
        if bad:
            raise ConfigError("; ".join(msgs), bad)
        return self

    def _matrix(self, value, d, default):
        if value is None:
            return default * np.eye(d)
        a = np.asarray(value, dtype=float)
        return a * np.eye(d) if a.ndim == 0 else a

    def friction_matrix(self, d):
        return self._matrix(self.friction, d, 1.0)

    def mass_inverse(self, d):
        return np.linalg.inv(self._matrix(self.mass, d, 1.0))

    def noise_cov(self, d) -> np.ndarray:
        """``C - step * B_hat``, checked to be PSD."""
        C = self.friction_matrix(d or 1)
        B = self._matrix(self.noise_correction, C.shape[0], 0.0)
        S = C - self.step * B
        w = np.linalg.eigvalsh(0.5 * (S + S.T))
        if w.min() < -1e-12 * max(1.0, abs(w).max()):
            raise ConfigError("C - step * B_hat is not positive semi-definite", ["friction", "noise_correction"])
        return S


def auto_step(target: TargetModel) -> float:
    """The 1/N heuristic step size."""
    if target.n_data < 1:
        raise ConfigError("auto step needs data", ["step"])
    return 1.0 / target.n_data


def estimate_gradient(target: TargetModel, theta, config: SgmcmcConfig, rng: np.random.Generator) -> np.ndarray:
    kind = config.estimator
    if kind == "full":
        return target.grad_log_pdf(theta)
    if kind == "simple":
        return ge.simple_grad(target, theta, config.batch, rng).value
    if kind == "cv":
        if config.anchor is None:
            config.anchor = ge.build_anchor(target)
        return ge.cv_grad(target, theta, config.anchor, config.batch, rng).value
    if kind == "preferential":
        if config.weights is None:
            ref = config.anchor.theta_hat if config.anchor is not None else ge.find_mode(target)
            config.weights = ge.preferential_weights(target, ref)
        return ge.preferential_grad(target, theta, config.weights, config.batch, rng).value
    if kind == "saga":
        if config.saga is None:
            config.saga = ge.SagaEstimator(target, theta)
        return config.saga(theta, config.batch, rng).value
    raise ConfigError(f"unknown estimator {kind!r}", ["estimator"])


def _finite(g):
    if not np.all(np.isfinite(g)):
        raise NumericalFault("non-finite gradient")
    return g


def ula_step(theta, delta: float, target: TargetModel, rng: np.random.Generator) -> np.ndarray:
    """``theta + (delta/2) grad log pi(theta) + sqrt(delta) Z``."""
    if not delta > 0:
        raise ConfigError("step must be positive", ["step"])
    theta = np.asarray(theta, dtype=float)
    g = _finite(target.grad_log_pdf(theta))
    z = rng.standard_normal(theta.shape[0])
    return theta + (0.5 * delta) * g + math.sqrt(delta) * z


def sgld_step(theta, config: SgmcmcConfig, target: TargetModel, rng: np.random.Generator,
              sub_rng: np.random.Generator | None = None) -> np.ndarray:
    """ULA step with the gradient replaced by the configured estimator.

    Noise comes from ``rng`` and subsampling from ``sub_rng`` (defaults to ``rng``).
    """
    theta = np.asarray(theta, dtype=float)
    g = _finite(estimate_gradient(target, theta, config, rng if sub_rng is None else sub_rng))
    z = rng.standard_normal(theta.shape[0])
    delta = config.step
    return theta + (0.5 * delta) * g + math.sqrt(delta) * z


def sghmc_step(state, config: SgmcmcConfig, target: TargetModel, rng: np.random.Generator,
               sub_rng: np.random.Generator | None = None):
    """One SGHMC step:

    ``theta' = theta + (delta/2) M^-1 p``,
    ``p' = p + (delta/2)(g_hat - C M^-1 p) + sqrt(delta) N(0, C - delta B_hat)``.
    """
    theta, p = (np.asarray(a, dtype=float) for a in state)
    d = theta.shape[0]
    delta = config.step
    minv = config.mass_inverse(d)
    C = config.friction_matrix(d)
    root = psd_factor(config.noise_cov(d))
    g = _finite(estimate_gradient(target, theta, config, rng if sub_rng is None else sub_rng))
    v = minv @ p
    z = rng.standard_normal(d)
    theta_new = theta + (0.5 * delta) * v
    p_new = p + (0.5 * delta) * (g - C @ v) + math.sqrt(delta) * (root @ z)
    return theta_new, p_new


def _as_fn(x):
    if callable(x):
        return x
    a = None if x is None else np.asarray(x, dtype=float)
    return lambda _z: a


def general_sgmcmc_step(state, D, Q, Gamma, grad_H: Callable, delta: float,
                        rng: np.random.Generator, tol: float = 1e-12) -> np.ndarray:
    """``z' = z - (delta/2)[(D + Q) grad H + Gamma] + sqrt(delta) N(0, D)``.

    ``D``, ``Q`` and ``Gamma`` may be constants or functions of the state;
    ``Gamma=None`` means zero. ``D`` must be symmetric PSD and ``Q``
    skew-symmetric at the current state. Noise is drawn only for the
    coordinates where ``D`` is non-zero.
    """
    z = np.asarray(state, dtype=float)
    Dz = np.asarray(_as_fn(D)(z), dtype=float)
    Qz = np.asarray(_as_fn(Q)(z), dtype=float)
    if not np.allclose(Dz, Dz.T, rtol=0, atol=tol):
        raise ConfigError("D is not symmetric", ["D"])
    if not np.allclose(Qz, -Qz.T, rtol=0, atol=tol):
        raise ConfigError("Q is not skew-symmetric", ["Q"])
    gH = _finite(np.asarray(grad_H(z), dtype=float))
    drift = (Dz + Qz) @ gH
    gam = _as_fn(Gamma)(z)
    if gam is not None:
        drift = drift + gam
    out = z - (0.5 * delta) * drift
    active = np.nonzero(np.any(Dz != 0, axis=1))[0]
    if active.size:
        root = psd_factor(Dz[np.ix_(active, active)])
        noise = root @ rng.standard_normal(active.size)
        out[active] = out[active] + math.sqrt(delta) * noise
    return out


def sgld_as_general(target: TargetModel):
    """(D, Q, Gamma, grad_H) recovering ULA/SGLD: D = I, Q = 0, H = -log pi."""
    d = target.dim
    return np.eye(d), np.zeros((d, d)), None, lambda z: -target.grad_log_pdf(z)


def sghmc_as_general(target: TargetModel, friction, mass=None):
    """(D, Q, Gamma, grad_H) recovering SGHMC with exact gradients on (theta, p)."""
    d = target.dim
    C = np.asarray(friction, dtype=float) * (np.eye(d) if np.ndim(friction) == 0 else 1.0)
    minv = np.eye(d) if mass is None else np.linalg.inv(np.asarray(mass, dtype=float) * (np.eye(d) if np.ndim(mass) == 0 else 1.0))
    D = np.zeros((2 * d, 2 * d))
    D[d:, d:] = C
    Q = np.block([[np.zeros((d, d)), -np.eye(d)], [np.eye(d), np.zeros((d, d))]])

    def grad_H(z):
        return np.concatenate([-target.grad_log_pdf(z[:d]), minv @ z[d:]])

    return D, Q, None, grad_H


def _streams(seed):
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    noise_ss, sub_ss = ss.spawn(2)
    return np.random.default_rng(noise_ss), np.random.default_rng(sub_ss)


def run_sgld(target: TargetModel, config: SgmcmcConfig, theta0, n_iter: int, seed: int | None = None,
             thin: int = 1, block: int = 8192) -> ChainOutput:
    """Run ULA (``estimator="full"``) or an SGLD variant for ``n_iter`` steps.

    The noise stream depends only on ``seed``, so runs with different
    estimators share their Gaussian increments.
    """
    config.validate(target)
    noise_rng, sub_rng = _streams(seed)
    theta = np.array(theta0, dtype=float).reshape(-1)
    d = theta.shape[0]
    half = 0.5 * config.step
    sq = math.sqrt(config.step)
    states = np.empty((n_iter // thin, d))
    for start in range(0, n_iter, block):
        stop = min(start + block, n_iter)
        Z = noise_rng.standard_normal((stop - start, d))
        for k in range(start, stop):
            g = estimate_gradient(target, theta, config, sub_rng)
            theta = theta + half * g + sq * Z[k - start]
            if not np.all(np.abs(theta) < DIVERGENCE_NORM):
                raise DivergenceError(f"chain diverged at iteration {k + 1} (|theta| > {DIVERGENCE_NORM:g})")
            if (k + 1) % thin == 0:
                states[(k + 1) // thin - 1] = theta
    kind = "ula" if config.estimator == "full" else f"sgld-{config.estimator}"
    return ChainOutput(states, 0, kind, seed)


def run_ula(target: TargetModel, delta: float, theta0, n_iter: int, seed: int | None = None,
            thin: int = 1) -> ChainOutput:
    return run_sgld(target, SgmcmcConfig(delta), theta0, n_iter, seed, thin)


def run_ula_linear(target, delta: float, theta0, n_iter: int, seed: int | None = None) -> ChainOutput:
    """ULA on a Gaussian target via its exact linear recursion
    ``theta' = theta - (delta/2) P (theta - mu) + sqrt(delta) Z``.

    Uses the same noise stream as :func:`run_ula` and agrees with it up to
    floating-point rounding, but is compiled and much faster.
    """
    from ._kernels import ula_linear

    noise_rng, _ = _streams(seed)
    theta = np.array(theta0, dtype=float).reshape(-1)
    d = theta.shape[0]
    out = np.empty((n_iter, d))
    block = 8192
    for start in range(0, n_iter, block):
        stop = min(start + block, n_iter)
        Z = noise_rng.standard_normal((stop - start, d))
        theta = ula_linear(theta, target.precision, target.mean, delta, Z, out[start:stop])
        if not np.all(np.abs(theta) < DIVERGENCE_NORM):
            raise DivergenceError("chain diverged (|theta| > 1e8)")
    return ChainOutput(out, 0, "ula", seed)


def run_sghmc(target: TargetModel, config: SgmcmcConfig, theta0, n_iter: int, seed: int | None = None,
              p0=None) -> ChainOutput:
    config.validate(target, momentum=True)
    noise_rng, sub_rng = _streams(seed)
    theta = np.array(theta0, dtype=float).reshape(-1)
    d = theta.shape[0]
    p = np.zeros(d) if p0 is None else np.asarray(p0, dtype=float)
    states = np.empty((n_iter, d))
    moms = np.empty((n_iter, d))
    for k in range(n_iter):
        theta, p = sghmc_step((theta, p), config, target, noise_rng, sub_rng)
        if not np.all(np.abs(theta) < DIVERGENCE_NORM):
            raise DivergenceError(f"chain diverged at iteration {k + 1}")
        states[k] = theta
        moms[k] = p
    return ChainOutput(states, 0, "sghmc", seed, momenta=moms)


def ula_stationary_variance(sigma2: float, delta: float) -> float:
    """Stationary variance of ULA on N(0, sigma2): sigma2 / (1 - delta / (4 sigma2))."""
    if delta >= 4 * sigma2:
        return float("inf")
    return sigma2 / (1.0 - delta / (4.0 * sigma2))
