"""Kernel Stein discrepancies and Stein-based post-processing of samples.

Kernels take gradients of log pi as inputs rather than a target, so
stochastic gradients can be used in place of exact ones.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ._kernels import imq_stein_block, imq_stein_rowsums
from .errors import ConfigError, NumericalFault
from .grad_estimators import simple_grad
from .models import check_spd

FAMILIES = ("imq", "tilted-imq")


@dataclass(frozen=True)
class SteinKernelConfig:
    """IMQ base kernel ``(1 + (x-y)' S^-1 (x-y))^-beta`` with optional tilt.

    ``tilt = (x0, q)`` selects the moment-controlling kernel
    ``w_q(x) w_q(y) k_IMQ(x, y) + w_{q-1}(x) w_{q-1}(y) (1 + <x-x0, y-x0>)``,
    ``w_r(x) = (1 + |x-x0|^2)^((r-1)/2)``.
    """

    family: str = "imq"
    scale: np.ndarray | None = None
    beta: float = 0.5
    tilt: tuple | None = None
    standardize: bool = True

    def __post_init__(self):
        bad = []
        if self.family not in FAMILIES:
            bad.append("family")
        if not 0 < self.beta < 1:
            bad.append("beta")
        if self.family == "tilted-imq" and (self.tilt is None or int(self.tilt[1]) < 1):
            bad.append("tilt")
        if bad:
            raise ConfigError("invalid Stein kernel settings: " + ", ".join(bad), bad)
        if self.scale is not None:
            check_spd(np.atleast_2d(self.scale), "scale")

    def precision(self, d: int) -> np.ndarray:
        if self.scale is None:
            return np.eye(d)
        return np.linalg.inv(np.atleast_2d(np.asarray(self.scale, dtype=float)))


def _as2d(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


# ---------------------------------------------------------------- kernels


def _imq_parts(X, Y, A, beta):
    """IMQ value, x-gradient, and trace of the mixed Hessian for all pairs."""
    r = X[:, None, :] - Y[None, :, :]
    Ar = r @ A.T
    q = 1.0 + np.einsum("ijk,ijk->ij", r, Ar)
    phi = q**-beta
    gx = (-2.0 * beta * q ** (-beta - 1.0))[..., None] * Ar
    tr = 2.0 * beta * np.trace(A) * q ** (-beta - 1.0) - 4.0 * beta * (beta + 1.0) * np.einsum(
        "ijk,ijk->ij", Ar, Ar
    ) * q ** (-beta - 2.0)
    return phi, gx, -gx, tr


def _weight(X, x0, r):
    u = X - x0
    s = 1.0 + np.sum(u * u, axis=1)
    w = s ** ((r - 1) / 2.0)
    dw = ((r - 1) * s ** ((r - 3) / 2.0))[:, None] * u
    return w, dw


def _stein_image(a_x, da_x, a_y, da_y, psi, psi_x, psi_y, psi_xy, SX, SY):
    """Langevin Stein image of ``a(x) a(y) psi(x, y)``."""
    k = a_x[:, None] * a_y[None, :] * psi
    kx = a_y[None, :, None] * (da_x[:, None, :] * psi[..., None] + a_x[:, None, None] * psi_x)
    ky = a_x[:, None, None] * (da_y[None, :, :] * psi[..., None] + a_y[None, :, None] * psi_y)
    kxy = (
        (da_x @ da_y.T) * psi
        + a_y[None, :] * np.einsum("ik,ijk->ij", da_x, psi_y)
        + a_x[:, None] * np.einsum("jk,ijk->ij", da_y, psi_x)
        + a_x[:, None] * a_y[None, :] * psi_xy
    )
    return kxy + np.einsum("ijk,jk->ij", kx, SY) + np.einsum("ijk,ik->ij", ky, SX) + k * (SX @ SY.T)


def _pairs(X, Y, SX, SY, config: SteinKernelConfig) -> np.ndarray:
    d = X.shape[1]
    A = config.precision(d)
    if config.family == "imq":
        return imq_stein_block(np.ascontiguousarray(X), np.ascontiguousarray(Y), np.ascontiguousarray(SX),
                               np.ascontiguousarray(SY), A, float(config.beta))
    x0 = np.broadcast_to(np.asarray(config.tilt[0], dtype=float), (d,))
    q = int(config.tilt[1])
    phi, px, py, pxy = _imq_parts(X, Y, A, config.beta)
    wx, dwx = _weight(X, x0, q)
    wy, dwy = _weight(Y, x0, q)
    out = _stein_image(wx, dwx, wy, dwy, phi, px, py, pxy, SX, SY)
    vx, dvx = _weight(X, x0, q - 1)
    vy, dvy = _weight(Y, x0, q - 1)
    L = 1.0 + (X - x0) @ (Y - x0).T
    Lx = np.broadcast_to((Y - x0)[None, :, :], X.shape[:1] + Y.shape)
    Ly = np.broadcast_to((X - x0)[:, None, :], X.shape[:1] + Y.shape)
    Lxy = np.full(L.shape, float(d))
    return out + _stein_image(vx, dvx, vy, dvy, L, Lx, Ly, Lxy, SX, SY)


def stein_kernel(x, y, grad_x, grad_y, config: SteinKernelConfig | None = None) -> float:
    """``k_pi(x, y)`` for single points (no standardisation)."""
    config = config or SteinKernelConfig()
    X, Y = np.atleast_2d(np.asarray(x, float)), np.atleast_2d(np.asarray(y, float))
    GX, GY = np.atleast_2d(np.asarray(grad_x, float)), np.atleast_2d(np.asarray(grad_y, float))
    return float(_pairs(X, Y, GX, GY, config)[0, 0])


def tilted_stein_kernel(x, y, grad_x, grad_y, config: SteinKernelConfig) -> float:
    if config.family != "tilted-imq":
        raise ConfigError("config must use the tilted-imq family", ["family"])
    return stein_kernel(x, y, grad_x, grad_y, config)


# ---------------------------------------------------------------- standardisation


def standardize(points, grads):
    """``(x / g, grad * g, g)`` with g the coordinate-wise mean absolute deviation.

    Coordinates with zero deviation keep scale 1 (with a warning).
    """
    X, G = _as2d(points), _as2d(grads)
    if X.shape != G.shape:
        raise ConfigError("points and gradients must have the same shape", ["grads"])
    mad = np.mean(np.abs(X - X.mean(axis=0)), axis=0)
    zero = mad == 0
    if np.any(zero):
        warnings.warn(f"zero deviation in coordinates {np.flatnonzero(zero).tolist()}; using scale 1",
                      RuntimeWarning, stacklevel=2)
        mad = np.where(zero, 1.0, mad)
    return X / mad, G * mad, mad


def _prepare(points, grads, config):
    X, G = _as2d(points), _as2d(grads)
    if X.shape != G.shape:
        raise ConfigError(f"points {X.shape} and gradients {G.shape} do not match", ["grads"])
    if config.standardize and X.shape[0] > 1:
        X, G, mad = standardize(X, G)
        if config.tilt is not None:
            x0 = np.asarray(config.tilt[0], dtype=float) / mad
            config = SteinKernelConfig(config.family, config.scale, config.beta, (x0, config.tilt[1]), False)
    return X, G, config


def stein_matrix(points, grads, config: SteinKernelConfig | None = None) -> np.ndarray:
    """The n x n matrix ``K_ij = k_pi(x_i, x_j)``."""
    config = config or SteinKernelConfig()
    X, G, config = _prepare(points, grads, config)
    K = _pairs(X, X, G, G, config)
    return 0.5 * (K + K.T)


def ksd(points, grads, weights=None, config: SteinKernelConfig | None = None) -> float:
    """``sqrt(sum_ij w_i w_j k_pi(x_i, x_j))``; uniform weights by default."""
    config = config or SteinKernelConfig()
    X, G, config = _prepare(points, grads, config)
    n = X.shape[0]
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ConfigError(f"need {n} weights, got {w.shape}", ["weights"])
    if config.family == "imq":
        A = config.precision(X.shape[1])
        val = float(np.sum(imq_stein_rowsums(np.ascontiguousarray(X), np.ascontiguousarray(G), A,
                                             float(config.beta), np.ascontiguousarray(w))))
    else:
        val = float(w @ _pairs(X, X, G, G, config) @ w)
    return math.sqrt(max(val, 0.0))


def stochastic_ksd(points, target, m: int, config: SteinKernelConfig | None = None, rng=None) -> float:
    """KSD with each point's gradient replaced by an independent subsampled
    estimate ``(N/m) sum_{j in S} grad log pi_j(x)``; ``m = N`` is exact."""
    rng = np.random.default_rng(rng)
    X = _as2d(points)
    G = np.array([simple_grad(target, x, m, rng).value for x in X])
    return ksd(X, G, None, config)


def bias_diagnostic(grads) -> float:
    """``|mean of grad log pi over the samples|``."""
    return float(np.linalg.norm(np.mean(_as2d(grads), axis=0)))


# ---------------------------------------------------------------- weights


def optimal_weights_signed(K, jitter0: float = 1e-10, jitter_max: float = 1e-4) -> np.ndarray:
    """``K^-1 1 / (1' K^-1 1)``, adding jitter relative to the mean diagonal
    and raising it tenfold until the Cholesky factorisation succeeds."""
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    base = float(np.mean(np.diag(K)))
    jit = jitter0
    while jit <= jitter_max * (1 + 1e-12):
        try:
            c = scipy.linalg.cho_factor(K + jit * base * np.eye(n))
            v = scipy.linalg.cho_solve(c, np.ones(n))
            if np.all(np.isfinite(v)) and v.sum() != 0:
                return v / v.sum()
        except np.linalg.LinAlgError:
            pass
        jit *= 10
    raise NumericalFault(f"Stein matrix singular even with jitter {jitter_max} x mean diagonal")


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.shape[0] + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


@dataclass
class SimplexResult:
    weights: np.ndarray
    objective: float
    kkt: float
    converged: bool
    iterations: int


def _kkt(K, w):
    g = 2.0 * K @ w
    # multiplier of the sum constraint from the support
    supp = w > 0
    mu = float(np.mean(g[supp])) if np.any(supp) else float(np.min(g))
    stat = np.abs(g[supp] - mu).max(initial=0.0)
    dual = np.maximum(mu - g[~supp], 0.0).max(initial=0.0)
    return max(stat, dual) / max(1.0, abs(mu))


def _polish(K, w):
    """Solve the equality-constrained problem on the (numerical) support of
    w, trying several support thresholds; None if every result leaves the
    simplex or fails the KKT conditions."""
    for thr in (1e-12, 1e-9, 1e-6, 1e-4):
        v = _polish_on(K, np.flatnonzero(w > thr * w.max()), w)
        if v is not None:
            return v
    return None


def _polish_on(K, supp, w):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            v = scipy.linalg.solve(K[np.ix_(supp, supp)], np.ones(supp.shape[0]), assume_a="sym")
    except (np.linalg.LinAlgError, ValueError):
        return None
    if not np.all(np.isfinite(v)) or v.sum() <= 0:
        return None
    v = v / v.sum()
    if np.any(v < 0):
        return None
    out = np.zeros_like(w)
    out[supp] = v
    return out if _kkt(K, out) <= 1e-8 else None


def optimal_weights_simplex(K, tol: float = 1e-8, max_iter: int = 20000, restarts: int = 3) -> SimplexResult:
    """Minimise ``w'Kw`` over the simplex by accelerated projected gradient.

    The momentum is reset whenever the objective rises and the run is
    restarted ``restarts`` times from the best iterate. Every 50 iterations
    the current support is polished by an exact solve. Convergence is judged
    by a relative KKT residual; the best iterate is returned either way.
    """
    K = np.asarray(K, dtype=float)
    K = 0.5 * (K + K.T)
    n = K.shape[0]
    L = 2.0 * max(float(np.linalg.eigvalsh(K)[-1]), 1e-300)
    w = np.full(n, 1.0 / n)
    best, best_f = w, float(w @ K @ w)
    it = 0
    per = max(max_iter // (restarts + 1), 1)

    def done(v):
        return _kkt(K, v) <= tol

    for _ in range(restarts + 1):
        x, y, tk = best.copy(), best.copy(), 1.0
        f_prev = best_f
        for _ in range(per):
            it += 1
            if it % 50 == 0:
                v = _polish(K, best)
                if v is not None and float(v @ K @ v) <= best_f + 1e-12 * abs(best_f) and done(v):
                    return SimplexResult(v, float(v @ K @ v), _kkt(K, v), True, it)
                if done(best):
                    break
            x_new = project_simplex(y - 2.0 * (K @ y) / L)
            f = float(x_new @ K @ x_new)
            if f > f_prev:
                y, tk = x.copy(), 1.0
                continue
            t_new = 0.5 * (1 + math.sqrt(1 + 4 * tk * tk))
            y = x_new + ((tk - 1) / t_new) * (x_new - x)
            x, tk, f_prev = x_new, t_new, f
            if f < best_f:
                best, best_f = x_new, f
        if done(best):
            return SimplexResult(best, best_f, _kkt(K, best), True, it)
    res = _kkt(K, best)
    return SimplexResult(best, best_f, res, res <= tol, it)


# ---------------------------------------------------------------- thinning


def greedy_thin(points, grads, m: int, config: SteinKernelConfig | None = None) -> np.ndarray:
    """Greedy Stein thinning: indices ``s_1..s_m`` with
    ``s_j = argmin_k k(x_k, x_k)/2 + sum_{i<j} k(x_k, x_{s_i})``.

    Ties go to the lowest index; a point may be selected more than once.
    """
    config = config or SteinKernelConfig()
    X, G, config = _prepare(points, grads, config)
    n = X.shape[0]
    if not 1 <= m:
        raise ConfigError("m must be >= 1", ["m"])
    if config.family == "imq":
        A = config.precision(X.shape[1])
        diag = np.array([imq_stein_block(X[i : i + 1], X[i : i + 1], G[i : i + 1], G[i : i + 1], A,
                                         float(config.beta))[0, 0] for i in range(n)])
    else:
        diag = np.array([_pairs(X[i : i + 1], X[i : i + 1], G[i : i + 1], G[i : i + 1], config)[0, 0]
                         for i in range(n)])
    obj = 0.5 * diag
    out = np.empty(m, dtype=int)
    for j in range(m):
        k = int(np.argmin(obj))
        out[j] = k
        obj = obj + _pairs(X, X[k : k + 1], G, G[k : k + 1], config)[:, 0]
    return out


def thinned_weights(indices, n: int) -> np.ndarray:
    """Empirical weights of the selected indices (repeats counted)."""
    return np.bincount(np.asarray(indices), minlength=n) / len(indices)


def kernel_best_approx(f, K) -> float:
    """``sqrt(f' K^-1 f)`` for an SPD Gram matrix K."""
    f = np.asarray(f, dtype=float).reshape(-1)
    c = scipy.linalg.cho_factor(np.atleast_2d(np.asarray(K, dtype=float)))
    return math.sqrt(max(float(f @ scipy.linalg.cho_solve(c, f)), 0.0))
