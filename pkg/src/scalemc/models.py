"""Target distributions.

Every model exposes ``log_pdf`` (up to an additive constant), ``grad_log_pdf``
and, where the posterior factorises over data, per-datum gradient terms
``grad_log_pdf_terms``. The prior is split into equal ``1/N`` shares across
the terms so that summing all terms gives the full gradient.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit, logsumexp

from .errors import ConfigError

MODEL_KINDS = (
    "GaussianConjugate",
    "Logistic",
    "MatrixFactorisation",
    "Mixture1D",
    "Rosenbrock",
    "CustomGaussian",
)


def check_spd(matrix, name: str) -> np.ndarray:
    """Return ``matrix`` as a float array, raising if it is not SPD."""
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConfigError(f"{name} must be a square matrix, got shape {a.shape}", [name])
    if not np.all(np.isfinite(a)):
        raise ConfigError(f"{name} has non-finite entries", [name])
    if not np.allclose(a, a.T, rtol=1e-10, atol=1e-12):
        raise ConfigError(f"{name} is not symmetric", [name])
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise ConfigError(f"{name} is not positive definite", [name]) from None
    return a


@dataclass(frozen=True)
class Dataset:
    """Responses plus optional covariate matrix (one row per datum)."""

    responses: np.ndarray
    covariates: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.responses, dtype=float)
        object.__setattr__(self, "responses", y)
        if self.covariates is not None:
            x = np.atleast_2d(np.asarray(self.covariates, dtype=float))
            if len(y) == 0 and x.size == 0:
                x = x.reshape(0, x.shape[-1] if x.ndim == 2 else 0)
            if x.shape[0] != y.shape[0]:
                raise ConfigError(
                    f"covariates have {x.shape[0]} rows but there are {y.shape[0]} responses",
                    ["covariates"],
                )
            object.__setattr__(self, "covariates", x)

    @property
    def n(self) -> int:
        return int(self.responses.shape[0])

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        """Read a CSV with a header row.

        The response is column ``y`` (or ``y1..yk`` for vector responses) and
        covariates are ``x1..xd``.
        """
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader)]
            rows = [r for r in reader if r and not r[0].startswith("#")]
        table = np.array(rows, dtype=float).reshape(len(rows), len(header))
        cols = {h: i for i, h in enumerate(header)}

        def numbered(prefix):
            out = []
            k = 1
            while f"{prefix}{k}" in cols:
                out.append(cols[f"{prefix}{k}"])
                k += 1
            return out

        if "y" in cols:
            y = table[:, cols["y"]]
        else:
            yc = numbered("y")
            if not yc:
                raise ConfigError(f"{path}: no response column 'y'", ["y"])
            y = table[:, yc]
        xc = numbered("x")
        x = table[:, xc] if xc else None
        return cls(y, x)

    def to_csv(self, path) -> None:
        y = np.atleast_2d(self.responses.T).T if self.responses.ndim == 1 else self.responses
        header = ["y"] if y.shape[1] == 1 else [f"y{k + 1}" for k in range(y.shape[1])]
        cols = [y]
        if self.covariates is not None:
            header += [f"x{k + 1}" for k in range(self.covariates.shape[1])]
            cols.append(self.covariates)
        table = np.hstack(cols) if self.n else np.zeros((0, len(header)))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in table:
                w.writerow([repr(float(v)) for v in row])


@dataclass(frozen=True)
class GaussianPosterior:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.atleast_1d(np.asarray(self.mean, dtype=float)))
        object.__setattr__(self, "covariance", check_spd(self.covariance, "covariance"))


class TargetModel:
    """Base class. Subclasses fill in the density and gradient."""

    kind: str = ""
    dim: int = 0
    data: Dataset | None = None
    #: True when every per-term gradient is affine in theta with the same
    #: Jacobian, so term differences have a closed form.
    affine_terms: bool = False

    @property
    def n_data(self) -> int:
        return 0 if self.data is None else self.data.n

    def log_pdf(self, theta) -> float:
        raise NotImplementedError

    def grad_log_pdf(self, theta) -> np.ndarray:
        raise NotImplementedError

    def grad_log_pdf_batch(self, thetas) -> np.ndarray:
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        return np.array([self.grad_log_pdf(t) for t in thetas]).reshape(thetas.shape)

    def log_pdf_batch(self, thetas) -> np.ndarray:
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        return np.array([self.log_pdf(t) for t in thetas])

    def grad_log_pdf_terms(self, theta, idx=None) -> np.ndarray:
        """Per-datum gradients, shape ``(len(idx), d)``; all terms if ``idx`` is None."""
        raise NotImplementedError(f"{self.kind} has no per-datum decomposition")

    def grad_log_pdf_term(self, j: int, theta) -> np.ndarray:
        return self.grad_log_pdf_terms(theta, np.array([j]))[0]

    def cv_correction(self, theta, theta_hat, idx) -> np.ndarray:
        """``(N/m) sum_{j in idx} [grad_j(theta) - grad_j(theta_hat)]`` with m = len(idx)."""
        idx = np.asarray(idx)
        diff = self.grad_log_pdf_terms(theta, idx) - self.grad_log_pdf_terms(theta_hat, idx)
        return (self.n_data / len(idx)) * diff.sum(axis=0)

    def hessian_bound(self) -> np.ndarray | None:
        """Matrix J with w'Hw <= w'Jw for the Hessian H of -log pi, if known."""
        return None

    def posterior(self) -> GaussianPosterior | None:
        return None

    def mode(self) -> np.ndarray | None:
        """Closed-form mode, when there is one."""
        return None

    def rate_polynomial(self, theta, p, i: int) -> np.ndarray:
        """Coefficients (c0..c3) of ``-p_i d/dtheta_i log pi(theta + t p)``."""
        raise NotImplementedError(f"{self.kind} has no polynomial rate")

    def _vec(self, theta) -> np.ndarray:
        t = np.asarray(theta, dtype=float).reshape(-1)
        if t.shape[0] != self.dim:
            raise ConfigError(f"expected a length-{self.dim} vector, got length {t.shape[0]}", ["theta"])
        return t


class CustomGaussian(TargetModel):
    """N(mean, cov) with gradient ``-P (theta - mean)``."""

    kind = "CustomGaussian"

    def __init__(self, mean, cov=None, *, precision=None):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=float))
        self.dim = self.mean.shape[0]
        if precision is not None:
            self.precision = check_spd(precision, "precision")
            self.cov = np.linalg.inv(self.precision)
        else:
            cov = np.eye(self.dim) if cov is None else cov
            self.cov = check_spd(cov, "cov")
            self.precision = np.linalg.inv(self.cov)
        if self.cov.shape != (self.dim, self.dim):
            raise ConfigError("covariance shape does not match mean", ["cov"])

    def log_pdf(self, theta) -> float:
        r = self._vec(theta) - self.mean
        return float(-0.5 * r @ (self.precision @ r))

    def grad_log_pdf(self, theta) -> np.ndarray:
        r = self._vec(theta) - self.mean
        return -(self.precision @ r)

    def grad_log_pdf_batch(self, thetas) -> np.ndarray:
        r = np.atleast_2d(np.asarray(thetas, dtype=float)) - self.mean
        return -(r @ self.precision)

    def log_pdf_batch(self, thetas) -> np.ndarray:
        r = np.atleast_2d(np.asarray(thetas, dtype=float)) - self.mean
        return -0.5 * np.einsum("ij,jk,ik->i", r, self.precision, r)

    def hessian_bound(self):
        return self.precision

    def posterior(self):
        return GaussianPosterior(self.mean, self.cov)

    def mode(self):
        return self.mean.copy()

    def rate_polynomial(self, theta, p, i):
        theta = self._vec(theta)
        p = self._vec(p)
        a = p[i] * (self.precision[i] @ (theta - self.mean))
        b = p[i] * (self.precision[i] @ p)
        return np.array([a, b, 0.0, 0.0])


def gaussian_conjugate_posterior(prior_cov, obs_cov, data) -> GaussianPosterior:
    """Posterior of theta for y_j ~ N(theta, V) iid with prior N(0, prior_cov).

    ``Sigma_N = (N V^-1 + prior_cov^-1)^-1``, ``mu_N = Sigma_N V^-1 sum_j y_j``.
    """
    prior_cov = check_spd(prior_cov, "prior_cov")
    obs_cov = check_spd(obs_cov, "obs_cov")
    d = prior_cov.shape[0]
    if obs_cov.shape != (d, d):
        raise ConfigError("obs_cov and prior_cov have different shapes", ["obs_cov"])
    y = np.asarray(data, dtype=float).reshape(-1, d) if np.size(data) else np.zeros((0, d))
    n = y.shape[0]
    v_inv = np.linalg.inv(obs_cov)
    prec = n * v_inv + np.linalg.inv(prior_cov)
    cov = np.linalg.inv(prec)
    cov = 0.5 * (cov + cov.T)
    mean = cov @ (v_inv @ y.sum(axis=0))
    return GaussianPosterior(mean, cov)


class GaussianConjugate(CustomGaussian):
    """y_j ~ N(theta, V) with a N(0, prior_cov) prior on theta.

    The posterior is Gaussian with precision ``P = N V^-1 + prior_cov^-1``; the
    full gradient is ``-P (theta - mu_N)``. Per-term gradients are
    ``V^-1 (y_j - theta) - prior_cov^-1 theta / N``, all sharing the same
    Jacobian, which makes control-variate corrections exact.
    """

    kind = "GaussianConjugate"
    affine_terms = True

    def __init__(self, data, obs_cov, prior_cov=None):
        y = np.atleast_2d(np.asarray(data, dtype=float))
        obs_cov = check_spd(obs_cov, "obs_cov")
        d = obs_cov.shape[0]
        if y.size == 0:
            y = np.zeros((0, d))
        if y.shape[1] != d:
            y = y.T if y.shape[0] == d else y
        prior_cov = np.eye(d) if prior_cov is None else prior_cov
        post = gaussian_conjugate_posterior(prior_cov, obs_cov, y)
        self.data = Dataset(y)
        self.obs_cov = obs_cov
        self.obs_prec = np.linalg.inv(obs_cov)
        self.prior_cov = check_spd(prior_cov, "prior_cov")
        self.prior_prec = np.linalg.inv(self.prior_cov)
        super().__init__(post.mean, precision=self.n_data * self.obs_prec + self.prior_prec)
        self.cov = post.covariance

    def grad_log_pdf_terms(self, theta, idx=None):
        theta = self._vec(theta)
        n = self.n_data
        if n == 0:
            raise ConfigError("no data: per-term gradients undefined", ["data"])
        y = self.data.responses if idx is None else self.data.responses[np.asarray(idx)]
        return (y - theta) @ self.obs_prec - (self.prior_prec @ theta) / n

    def cv_correction(self, theta, theta_hat, idx):
        # every term difference is -(V^-1 + prior^-1/N)(theta - theta_hat), so
        # the N/m-scaled sum over any m terms is exactly -P (theta - theta_hat)
        return -(self.precision @ (self._vec(theta) - self._vec(theta_hat)))

    def term_lipschitz(self) -> np.ndarray:
        lj = np.linalg.norm(self.obs_prec, 2) + np.linalg.norm(self.prior_prec, 2) / max(self.n_data, 1)
        return np.full(self.n_data, lj)


def synthetic_gaussian_data(n: int, obs_cov, theta_true=None, rng=None) -> np.ndarray:
    rng = np.random.default_rng(rng)
    obs_cov = check_spd(obs_cov, "obs_cov")
    d = obs_cov.shape[0]
    mu = np.zeros(d) if theta_true is None else np.asarray(theta_true, dtype=float)
    return rng.multivariate_normal(mu, obs_cov, size=n)


class Logistic(TargetModel):
    """Bayesian logistic regression with a N(0, prior_cov) prior.

    ``flat_prior=True`` drops the prior entirely (improper flat prior).
    """

    kind = "Logistic"

    def __init__(self, X, y, prior_cov=None, flat_prior: bool = False):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).reshape(-1)
        self.data = Dataset(y, X)
        self.X = self.data.covariates
        self.y = y
        self.dim = self.X.shape[1]
        if np.any((y != 0) & (y != 1)):
            raise ConfigError("logistic responses must be 0 or 1", ["y"])
        self.flat_prior = bool(flat_prior)
        if self.flat_prior:
            self.prior_prec = np.zeros((self.dim, self.dim))
        else:
            self.prior_cov = check_spd(np.eye(self.dim) if prior_cov is None else prior_cov, "prior_cov")
            self.prior_prec = np.linalg.inv(self.prior_cov)

    def log_pdf(self, theta) -> float:
        theta = self._vec(theta)
        z = self.X @ theta
        return float(self.y @ z - np.logaddexp(0.0, z).sum() - 0.5 * theta @ self.prior_prec @ theta)

    def grad_log_pdf(self, theta) -> np.ndarray:
        theta = self._vec(theta)
        s = expit(self.X @ theta)
        return self.X.T @ (self.y - s) - self.prior_prec @ theta

    def grad_log_pdf_batch(self, thetas):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        s = expit(thetas @ self.X.T)
        return (self.y - s) @ self.X - thetas @ self.prior_prec

    def grad_log_pdf_terms(self, theta, idx=None):
        theta = self._vec(theta)
        n = self.n_data
        if n == 0:
            raise ConfigError("no data: per-term gradients undefined", ["data"])
        X = self.X if idx is None else self.X[np.asarray(idx)]
        y = self.y if idx is None else self.y[np.asarray(idx)]
        s = expit(X @ theta)
        return X * (y - s)[:, None] - (self.prior_prec @ theta) / n

    def neg_log_hessian(self, theta) -> np.ndarray:
        s = expit(self.X @ self._vec(theta))
        return self.prior_prec + (self.X * (s * (1 - s))[:, None]).T @ self.X

    def hessian_bound(self) -> np.ndarray:
        return logistic_hessian_bound(self)

    def term_lipschitz(self) -> np.ndarray:
        """Per-term gradient Lipschitz constants ``|x_j|^2/4 + |prior^-1|/N``."""
        n = max(self.n_data, 1)
        return 0.25 * np.sum(self.X**2, axis=1) + np.linalg.norm(self.prior_prec, 2) / n

    def subsample_bound_constants(self) -> np.ndarray:
        """``N max_j |x_ji|`` for each coordinate i."""
        return self.n_data * np.max(np.abs(self.X), axis=0)

    def cv_bound_constants(self) -> np.ndarray:
        """``M_i = max_j |x_ji| |x_j|``."""
        norms = np.linalg.norm(self.X, axis=1)
        return np.max(np.abs(self.X) * norms[:, None], axis=0)


def logistic_grad(model: Logistic, theta) -> np.ndarray:
    return model.grad_log_pdf(theta)


def logistic_grad_term(model: Logistic, j: int, theta) -> np.ndarray:
    return model.grad_log_pdf_term(j, theta)


def logistic_hessian_bound(model: Logistic) -> np.ndarray:
    """``J = prior^-1 + X'X / 4`` using q(1 - q) <= 1/4."""
    return model.prior_prec + 0.25 * model.X.T @ model.X


def synthetic_logistic(n: int, d: int, rng=None, theta_true=None, scale: float = 1.0):
    """Covariates iid N(0, scale^2), responses Bernoulli(sigmoid(x' theta_true))."""
    rng = np.random.default_rng(rng)
    theta_true = rng.standard_normal(d) if theta_true is None else np.asarray(theta_true, dtype=float)
    X = scale * rng.standard_normal((n, d))
    y = (rng.random(n) < expit(X @ theta_true)).astype(float)
    return X, y, theta_true


class MatrixFactorisation(TargetModel):
    """Y ~ N(UV, I) entrywise with a flat prior on (U, V).

    theta packs ``U`` (n x k, row major) followed by ``V`` (k x m). Each entry
    ``Y_ij`` is one datum, so ``N = n m``.
    """

    kind = "MatrixFactorisation"

    def __init__(self, Y, rank: int):
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        self.Y = Y
        self.n_rows, self.n_cols = Y.shape
        self.rank = int(rank)
        if self.rank < 1:
            raise ConfigError("rank must be >= 1", ["rank"])
        self.data = Dataset(Y.reshape(-1))
        self.dim = self.rank * (self.n_rows + self.n_cols)
        self._nu = self.n_rows * self.rank

    def unpack(self, theta):
        theta = self._vec(theta)
        U = theta[: self._nu].reshape(self.n_rows, self.rank)
        V = theta[self._nu :].reshape(self.rank, self.n_cols)
        return U, V

    @staticmethod
    def pack(U, V) -> np.ndarray:
        return np.concatenate([np.ravel(U), np.ravel(V)])

    def log_pdf(self, theta) -> float:
        U, V = self.unpack(theta)
        r = self.Y - U @ V
        return float(-0.5 * np.sum(r * r))

    def grad_log_pdf(self, theta):
        U, V = self.unpack(theta)
        r = self.Y - U @ V
        return self.pack(r @ V.T, U.T @ r)

    def grad_log_pdf_terms(self, theta, idx=None):
        U, V = self.unpack(theta)
        idx = np.arange(self.n_data) if idx is None else np.asarray(idx)
        rows, cols = np.divmod(idx, self.n_cols)
        r = self.Y[rows, cols] - np.einsum("ak,ka->a", U[rows], V[:, cols])
        out = np.zeros((len(idx), self.dim))
        k = self.rank
        for a, (i, j) in enumerate(zip(rows, cols)):
            out[a, i * k : (i + 1) * k] = r[a] * V[:, j]
            out[a, self._nu + np.arange(k) * self.n_cols + j] = r[a] * U[i]
        return out

    def rate_polynomial(self, theta, p, i):
        U, V = self.unpack(theta)
        Ud, Vd = self.unpack(p)
        if i < self._nu:
            return bmf_rate_polynomial(self, U, V, Ud, Vd, divmod(i, self.rank))
        l, j = divmod(i - self._nu, self.n_cols)
        # mirror image: d/dV_lj log pi = sum_i U_il R_ij
        r0 = self.Y - U @ V
        r1 = -(Ud @ V + U @ Vd)
        r2 = -(Ud @ Vd)
        a, b = U[:, l], Ud[:, l]
        c = np.array([
            r0[:, j] @ a,
            r1[:, j] @ a + r0[:, j] @ b,
            r2[:, j] @ a + r1[:, j] @ b,
            r2[:, j] @ b,
        ])
        return -Vd[l, j] * c


def bmf_rate_polynomial(model: MatrixFactorisation, U, V, Ud, Vd, entry) -> np.ndarray:
    """Cubic coefficients of ``-Ud_il d/dU_il log pi(U + t Ud, V + t Vd)``.

    With sigma = 1 and a flat prior, ``d/dU_il log pi = sum_j R_ij V_lj`` where
    ``R = Y - UV`` is quadratic in t along the line.
    """
    i, l = entry
    U, V, Ud, Vd = (np.asarray(a, dtype=float) for a in (U, V, Ud, Vd))
    r0 = model.Y[i] - U[i] @ V
    r1 = -(Ud[i] @ V + U[i] @ Vd)
    r2 = -(Ud[i] @ Vd)
    a, b = V[l], Vd[l]
    c = np.array([r0 @ a, r1 @ a + r0 @ b, r2 @ a + r1 @ b, r2 @ b])
    return -Ud[i, l] * c


class Mixture1D(TargetModel):
    """Univariate Gaussian mixture, by default 0.5 N(-2, 0.5^2) + 0.5 N(2, 0.5^2)."""

    kind = "Mixture1D"
    dim = 1

    def __init__(self, weights=(0.5, 0.5), means=(-2.0, 2.0), sds=(0.5, 0.5)):
        self.weights = np.asarray(weights, dtype=float)
        self.means = np.asarray(means, dtype=float)
        self.sds = np.asarray(sds, dtype=float)
        if np.any(self.sds <= 0) or np.any(self.weights <= 0):
            raise ConfigError("mixture weights and sds must be positive", ["weights", "sds"])
        self.weights = self.weights / self.weights.sum()
        self._logw = np.log(self.weights) - np.log(self.sds)

    def _comp(self, x):
        z = (np.asarray(x, dtype=float).reshape(-1, 1) - self.means) / self.sds
        return self._logw - 0.5 * z * z

    def log_pdf(self, theta) -> float:
        return float(logsumexp(self._comp(self._vec(theta)), axis=1)[0])

    def log_pdf_batch(self, thetas):
        return logsumexp(self._comp(np.ravel(thetas)), axis=1)

    def grad_log_pdf_batch(self, thetas):
        x = np.asarray(thetas, dtype=float).reshape(-1, 1)
        lc = self._comp(x)
        r = np.exp(lc - logsumexp(lc, axis=1, keepdims=True))
        return np.sum(r * -(x - self.means) / self.sds**2, axis=1, keepdims=True)

    def grad_log_pdf(self, theta):
        return self.grad_log_pdf_batch(self._vec(theta))[0]


def mixture1d_grad(theta, model: Mixture1D | None = None) -> np.ndarray:
    return (model or Mixture1D()).grad_log_pdf(theta)


class Rosenbrock(TargetModel):
    """log pi(x, y) = -(x - a)^2 - b (y - x^2)^2, default a = 0, b = 3."""

    kind = "Rosenbrock"
    dim = 2

    def __init__(self, a: float = 0.0, b: float = 3.0):
        self.a = float(a)
        self.b = float(b)

    def log_pdf_batch(self, thetas):
        t = np.atleast_2d(np.asarray(thetas, dtype=float))
        x, y = t[:, 0], t[:, 1]
        return -((x - self.a) ** 2) - self.b * (y - x * x) ** 2

    def log_pdf(self, theta) -> float:
        return float(self.log_pdf_batch(self._vec(theta))[0])

    def grad_log_pdf_batch(self, thetas):
        t = np.atleast_2d(np.asarray(thetas, dtype=float))
        x, y = t[:, 0], t[:, 1]
        gy = -2.0 * self.b * (y - x * x)
        gx = -2.0 * (x - self.a) - 2.0 * x * gy
        return np.column_stack([gx, gy])

    def grad_log_pdf(self, theta):
        return self.grad_log_pdf_batch(self._vec(theta))[0]


def rosenbrock_grad(theta, model: Rosenbrock | None = None) -> np.ndarray:
    return (model or Rosenbrock()).grad_log_pdf(theta)


@dataclass
class FlatTarget(TargetModel):
    """Improper uniform density; handy for testing deterministic dynamics."""

    dim: int = 1
    kind: str = field(default="Flat", init=False)

    def log_pdf(self, theta) -> float:
        self._vec(theta)
        return 0.0

    def grad_log_pdf(self, theta):
        return np.zeros_like(self._vec(theta))


def load_model(name: str, params: dict | None = None, rng=None, data_path: str | Path | None = None) -> TargetModel:
    """Build a named model. Used by the CLI.

    Recognised names: gaussian, gaussian-conjugate, logistic, bmf, mixture,
    rosenbrock.
    """
    params = dict(params or {})
    rng = np.random.default_rng(rng)
    d = int(params.get("dim", 2))
    n = int(params.get("n_data", 100))
    if name in ("gaussian", "custom-gaussian"):
        sd = float(params.get("sd", 1.0))
        return CustomGaussian(np.zeros(d), sd**2 * np.eye(d))
    if name == "gaussian-conjugate":
        v = np.diag([1.0, 10.0]) if d == 2 and "obs_var" not in params else float(params.get("obs_var", 1.0)) * np.eye(d)
        if data_path is not None:
            y = Dataset.from_csv(data_path).responses
            y = y.reshape(len(y), -1)
            v = v if y.shape[1] == v.shape[0] else np.eye(y.shape[1])
        else:
            y = synthetic_gaussian_data(n, v, rng=rng)
        return GaussianConjugate(y, v)
    if name == "logistic":
        flat = str(params.get("flat_prior", "false")).lower() in ("1", "true", "yes")
        if data_path is not None:
            ds = Dataset.from_csv(data_path)
            return Logistic(ds.covariates, ds.responses, flat_prior=flat)
        X, y, _ = synthetic_logistic(n, d, rng)
        return Logistic(X, y, flat_prior=flat)
    if name == "bmf":
        rows = int(params.get("rows", 3))
        cols = int(params.get("cols", 3))
        k = int(params.get("rank", 2))
        Y = rng.standard_normal((rows, k)) @ rng.standard_normal((k, cols)) + rng.standard_normal((rows, cols))
        return MatrixFactorisation(Y, k)
    if name == "mixture":
        return Mixture1D()
    if name == "rosenbrock":
        return Rosenbrock(float(params.get("a", 0.0)), float(params.get("b", 3.0)))
    raise ConfigError(f"unknown model {name!r}", ["model"])
