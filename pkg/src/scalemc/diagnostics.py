"""Convergence and efficiency diagnostics, plus basic Monte Carlo estimators."""
from __future__ import annotations

import warnings

import numpy as np
from scipy import linalg
from scipy.special import logsumexp


def _as_chains(chains, coordinate):
    a = np.asarray(chains, dtype=float)
    if a.ndim == 3:
        a = a[:, :, coordinate]
    if a.ndim != 2:
        raise ValueError("chains must have shape (L, n) or (L, n, d)")
    return a


def gelman_rubin(chains, coordinate: int = 0, burn_in: int = 0) -> float:
    """Potential scale reduction factor R-hat for one coordinate.

    ``s^2`` is the mean of the within-chain sample variances and
    ``sigma^2 = (n-1)/n s^2 + 1/(L-1) sum_l (m_l - m)^2``; R-hat is
    ``sqrt(sigma^2 / s^2)``. Identical chains give ``sqrt((n-1)/n)``.
    """
    a = _as_chains(chains, coordinate)[:, burn_in:]
    L, n = a.shape
    if L < 2 or n < 2:
        raise ValueError("need at least 2 chains of length >= 2")
    means = a.mean(axis=1)
    s2 = a.var(axis=1, ddof=1).mean()
    if s2 == 0:
        warnings.warn("zero within-chain variance: R-hat undefined", RuntimeWarning, stacklevel=2)
        return float("nan")
    between = np.sum((means - means.mean()) ** 2) / (L - 1)
    sigma2 = (n - 1) / n * s2 + between
    return float(np.sqrt(sigma2 / s2))


def default_burn_in(n: int) -> int:
    """Half the run, the usual choice when checking R-hat thresholds."""
    return n // 2


def autocovariance(x) -> np.ndarray:
    """Biased (1/n) autocovariance at all lags via FFT."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    xc = x - x.mean()
    size = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    return acov


def _iact_geyer(x, max_lag=None) -> float:
    acov = autocovariance(x)
    if acov[0] <= 0:
        raise ValueError("constant series: IACT undefined")
    n = len(acov)
    if max_lag is not None:
        n = min(n, int(max_lag) + 1)
    n_pairs = n // 2
    pairs = acov[0 : 2 * n_pairs : 2] + acov[1 : 2 * n_pairs : 2]
    # initial positive sequence: keep pairs up to the first non-positive one
    nonpos = np.nonzero(pairs <= 0)[0]
    k = nonpos[0] if nonpos.size else n_pairs
    tau = (-acov[0] + 2.0 * pairs[:k].sum()) / acov[0]
    return float(tau)


def _iact_ar(x, max_order: int = 20) -> float:
    acov = autocovariance(x)
    if acov[0] <= 0:
        raise ValueError("constant series: IACT undefined")
    n = len(x)
    max_order = max(1, min(max_order, n // 4))
    rho = acov / acov[0]
    best = (np.inf, 1.0)
    for p in range(1, max_order + 1):
        phi = linalg.solve_toeplitz(rho[:p], rho[1 : p + 1])
        innov = 1.0 - phi @ rho[1 : p + 1]
        if innov <= 0:
            break
        aic = n * np.log(innov) + 2 * p
        if aic < best[0]:
            best = (aic, innov / (1.0 - phi.sum()) ** 2)
    return float(best[1])


def iact(series, method: str = "geyer", max_lag: int | None = None) -> float:
    """Integrated autocorrelation time ``1 + 2 sum_k rho_k``.

    ``method="geyer"`` truncates at the initial positive sequence of paired
    autocovariances; ``method="ar"`` fits an AR(p) model (order by AIC) and
    returns its spectral density at zero over the variance, which suits
    non-reversible chains.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim > 1:
        return np.array([iact(col, method, max_lag) for col in x.reshape(x.shape[0], -1).T])
    if x.shape[0] < 4:
        raise ValueError("series too short for IACT")
    if method == "geyer":
        return _iact_geyer(x, max_lag)
    if method == "ar":
        return _iact_ar(x)
    raise ValueError(f"unknown IACT method {method!r}")


def ess(series, method: str = "geyer") -> float:
    """Effective sample size n / IACT (0 for an empty series)."""
    x = np.asarray(series, dtype=float)
    if x.shape[0] == 0:
        return 0.0
    return x.shape[0] / iact(x, method)


def mcse(series, method: str = "geyer") -> float:
    """IACT-corrected standard error of the sample mean."""
    x = np.asarray(series, dtype=float)
    return float(np.sqrt(x.var(axis=0) * iact(x, method) / x.shape[0]))


def batch_means_se(series, n_batches: int | None = None) -> np.ndarray:
    """Standard error of the mean by non-overlapping batch means."""
    x = np.asarray(series, dtype=float)
    n = x.shape[0]
    b = n_batches or max(2, int(np.sqrt(n)))
    size = n // b
    means = x[: size * b].reshape(b, size, *x.shape[1:]).mean(axis=1)
    return means.std(axis=0, ddof=1) / np.sqrt(b)


def w2_gaussian(mu_a, cov_a, mu_b, cov_b) -> float:
    """Wasserstein-2 distance between two Gaussians (closed form)."""
    mu_a, mu_b = np.atleast_1d(mu_a).astype(float), np.atleast_1d(mu_b).astype(float)
    cov_a, cov_b = np.atleast_2d(cov_a).astype(float), np.atleast_2d(cov_b).astype(float)
    ra = linalg.sqrtm(cov_a)
    cross = linalg.sqrtm(ra @ cov_b @ ra)
    tr = np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.real(np.trace(cross))
    val = np.sum((mu_a - mu_b) ** 2) + max(float(np.real(tr)), 0.0)
    return float(np.sqrt(val))


def empirical_tvd(counts) -> float:
    """``sum_i |pi_hat(i) - 1/S|`` for visit counts over S states."""
    c = np.asarray(counts, dtype=float)
    tot = c.sum()
    if tot <= 0:
        raise ValueError("no visits recorded")
    return float(np.abs(c / tot - 1.0 / c.shape[0]).sum())


def occupation_tvd(states, S: int, burn_in: int = 0) -> float:
    """TVD to uniform of the occupation measure after ``burn_in`` steps."""
    states = np.asarray(states)
    if states.shape[0] <= burn_in:
        raise ValueError("need n > burn_in")
    return empirical_tvd(np.bincount(states[burn_in:], minlength=S))


def cv_fit(h, Z) -> np.ndarray:
    """Least-squares control-variate coefficients ``(Z'Z)^-1 Z'h``.

    Falls back to the pseudo-inverse (with a warning) when Z is rank deficient.
    """
    h = np.asarray(h, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    coef, _, rank, _ = np.linalg.lstsq(Z, h, rcond=None)
    if rank < Z.shape[1]:
        warnings.warn("control matrix is rank deficient; using the pseudo-inverse", RuntimeWarning, stacklevel=2)
        coef = np.linalg.pinv(Z) @ h
    return coef


def cv_estimate(h, Z, gamma=None, control_means=0.0) -> tuple[float, np.ndarray]:
    """Control-variate estimate of E[h]: mean of ``h - (Z - E Z) gamma``.

    Fits gamma by least squares on centred values when it is not given.
    Returns the estimate and the per-sample adjusted values.
    """
    h = np.asarray(h, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    Zc = Z - np.asarray(control_means, dtype=float)
    if gamma is None:
        gamma = cv_fit(h - h.mean(), Zc - Zc.mean(axis=0))
    adj = h - Zc @ np.atleast_1d(np.asarray(gamma, dtype=float))
    return float(adj.mean()), adj


def importance_estimate(samples, log_weight, h) -> tuple[float, np.ndarray]:
    """Self-normalised importance sampling estimate of E_pi[h].

    ``log_weight`` maps the samples to unnormalised log weights
    ``log pi - log q``. Returns the estimate and normalised weights.
    """
    samples = np.asarray(samples, dtype=float)
    lw = np.asarray(log_weight(samples), dtype=float).reshape(-1)
    if not np.all(np.isfinite(lw)):
        raise ValueError("non-finite importance weights")
    w = np.exp(lw - logsumexp(lw))
    hv = np.asarray(h(samples), dtype=float)
    return float(np.tensordot(w, hv, axes=(0, 0))), w


def gaussian_weight_variance(sigma2: float, d: int = 1) -> float:
    """Variance of pi/q for pi = N(0, sigma2 I), q = N(0, I): sigma^-d (2 - sigma2)^(-d/2) - 1."""
    if not 0 < sigma2 < 2:
        return float("inf")
    return float(sigma2 ** (-d / 2) * (2.0 - sigma2) ** (-d / 2) - 1.0)
