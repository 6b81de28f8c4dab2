"""Zig-Zag, Bouncy Particle, Coordinate and Boomerang samplers.

Every sampler returns a :class:`~scalemc.pdmp.skeleton.Skeleton` holding
the post-event states. Event times come either from exact inversion of
linear rates (Gaussian targets) or from Poisson thinning, in which case each
proposal's acceptance ratio is checked against 1.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .._rng import as_generator
from ..errors import ConfigError, UnsupportedBoundError
from ..grad_estimators import ControlVariateAnchor, build_anchor, find_mode
from ..models import TargetModel, check_spd
from .events import (
    LinearRate,
    ThinningStats,
    cc_bound,
    first_event_superposition,
    linear_inverse,
    linear_inverse_vec,
    linear_mass_vec,
    reflect_precond,
)
from .skeleton import Skeleton, SkeletonBuilder, flip_tag

ZIGZAG_MODES = ("exact-gaussian", "hessian-bound", "cc", "subsample", "subsample-cv")
BPS_MODES = ("exact-gaussian", "hessian-bound", "cc")
VELOCITY_LAWS = ("gaussian", "sphere")


@dataclass
class PdmpState:
    t: float
    theta: np.ndarray
    p: np.ndarray


class _Window:
    """Thinning window width, optionally adapted: doubled after an empty
    window, halved after a proposal in the first quarter."""

    def __init__(self, width: float, adapt: bool):
        if not width > 0:
            raise ConfigError("window width must be positive", ["window"])
        self.base = float(width)
        self.width = float(width)
        self.adapt = adapt

    def empty(self):
        if self.adapt:
            self.width = min(2 * self.width, 1e3 * self.base)

    def proposal(self, s):
        if self.adapt and s < 0.25 * self.width:
            self.width = max(0.5 * self.width, 1e-3 * self.base)


def _gaussian_parts(target: TargetModel):
    if not (hasattr(target, "precision") and hasattr(target, "mean")):
        raise UnsupportedBoundError(f"exact-gaussian mode needs a Gaussian target, got {target.kind}")
    return np.asarray(target.precision, dtype=float), np.asarray(target.mean, dtype=float)


def _hessian(target: TargetModel) -> np.ndarray:
    J = target.hessian_bound()
    if J is None:
        raise UnsupportedBoundError(f"{target.kind} provides no Hessian bound")
    return np.asarray(J, dtype=float)


def _abort(builder, t, theta, p, stats, why):
    warnings.warn(f"PDMP run aborted at t={t}: {why}", RuntimeWarning, stacklevel=3)
    stats = dict(stats)
    stats["aborted"] = why
    return builder.finish(t, theta, p, stats)


def _neg_grad(target, theta):
    g = -target.grad_log_pdf(theta)
    return g if np.all(np.isfinite(g)) else None


# ---------------------------------------------------------------- Zig-Zag


def _zigzag_init(target, theta0, p0, speeds, rng):
    d = target.dim
    theta = np.array(theta0, dtype=float).reshape(-1)
    if theta.shape[0] != d:
        raise ConfigError(f"theta0 must have length {d}", ["init"])
    c = np.ones(d) if speeds is None else np.asarray(speeds, dtype=float).reshape(-1)
    if c.shape[0] != d or np.any(c <= 0):
        raise ConfigError("speeds must be positive, one per coordinate", ["speeds"])
    if p0 is None:
        p = c * rng.choice([-1.0, 1.0], size=d)
    else:
        p = np.array(p0, dtype=float).reshape(-1)
        if p.shape[0] != d or not np.allclose(np.abs(p), c, rtol=0, atol=1e-12):
            raise ConfigError("initial Zig-Zag velocity must have components +-speed", ["init"])
        p = np.sign(p) * c
    return theta, p, c


def neighbours_from_precision(Q, tol: float = 0.0) -> list[np.ndarray]:
    """Neighbour sets ``S_i = {j != i : Q_ij != 0}``."""
    Q = np.asarray(Q)
    return [np.flatnonzero((np.abs(Q[i]) > tol) & (np.arange(Q.shape[0]) != i)) for i in range(Q.shape[0])]


def zigzag_run(target: TargetModel, T: float, theta0, p0=None, mode: str = "exact-gaussian",
               rng=None, *, speeds=None, sparsity=None, window: float = 1.0, adapt_window: bool = False,
               anchor: ControlVariateAnchor | None = None, bound_form: str = "energy") -> Skeleton:
    """Zig-Zag process on [0, T].

    ``mode`` selects how flip times are simulated:

    * ``exact-gaussian``: inversion of the linear rates of a Gaussian target.
      Each coordinate keeps its unused unit-exponential budget between
      events, so only the flipped coordinate draws a fresh one. With
      ``sparsity`` (neighbour sets, or ``True`` to read them off the
      precision) only the flipped coordinate and its neighbours are
      recomputed.
    * ``hessian-bound``: thinning with linear bounds from the Hessian bound J.
    * ``cc``: thinning with concave-convex bounds on windows of width
      ``window``; needs ``target.rate_polynomial``.
    * ``subsample`` / ``subsample-cv``: thinning with rates estimated from
      one datum, plain or with a control variate at ``anchor``.
    """
    if mode not in ZIGZAG_MODES:
        raise ConfigError(f"mode must be one of {ZIGZAG_MODES}", ["mode"])
    if not T > 0:
        raise ConfigError("horizon must be positive", ["horizon"])
    rng = as_generator(rng)
    theta, p, c = _zigzag_init(target, theta0, p0, speeds, rng)
    if sparsity is not None and mode != "exact-gaussian":
        raise ConfigError("sparsity is only used by exact-gaussian mode", ["sparsity"])
    if mode == "exact-gaussian":
        return _zigzag_exact(target, T, theta, p, rng, sparsity)
    return _zigzag_thinned(target, T, theta, p, c, mode, rng, window, adapt_window, anchor, bound_form)


def _zigzag_exact(target, T, theta, p, rng, sparsity):
    Q, mu = _gaussian_parts(target)
    d = theta.shape[0]
    if sparsity is True:
        sparsity = neighbours_from_precision(Q)
    nbrs = None
    if sparsity is not None:
        if len(sparsity) != d:
            raise ConfigError("need one neighbour set per coordinate", ["sparsity"])
        nbrs = [np.unique(np.append(np.asarray(s, dtype=int), i)) for i, s in enumerate(sparsity)]
    builder = SkeletonBuilder(theta, p)
    g = Q @ (theta - mu)
    Qp = Q @ p
    a = p * g
    b = p * Qp
    E = rng.exponential(size=d)
    tau = linear_inverse_vec(a, b, E)
    t = 0.0
    n_ev = 0
    while True:
        i = int(np.argmin(tau))
        s = float(tau[i])
        if t + s > T:
            theta = theta + (T - t) * p
            return builder.finish(T, theta, p, {"events": n_ev})
        E = np.maximum(E - linear_mass_vec(a, b, s), 0.0)
        E[i] = rng.exponential()
        theta = theta + s * p
        t += s
        old = p[i]
        p = p.copy()
        p[i] = -old
        n_ev += 1
        builder.add(t, theta, p, flip_tag(i))
        if nbrs is None:
            g = Q @ (theta - mu)
            Qp = Q @ p
            a = p * g
            b = p * Qp
            tau = linear_inverse_vec(a, b, E)
        else:
            g = g + s * Qp
            Qp = Qp + Q[:, i] * (p[i] - old)
            a = a + b * s
            tau = tau - s
            S = nbrs[i]
            a[S] = p[S] * g[S]
            b[S] = p[S] * Qp[S]
            tau[S] = linear_inverse_vec(a[S], b[S], E[S])


class _ZigZagBounds:
    """Per-coordinate rate bounds and rate evaluations for the thinning modes."""

    def __init__(self, target, mode, anchor, bound_form):
        self.target = target
        self.mode = mode
        self.form = bound_form
        if mode == "hessian-bound":
            J = _hessian(target)
            if bound_form not in ("energy", "norm"):
                raise ConfigError("bound_form must be 'energy' or 'norm'", ["bound_form"])
            self.J = J
            self.sqrt_diag = np.sqrt(np.maximum(np.diag(J), 0.0))
        elif mode in ("subsample", "subsample-cv"):
            if not hasattr(target, "subsample_bound_constants") or target.n_data == 0:
                raise UnsupportedBoundError(f"{target.kind} has no subsampling bound")
            self.N = target.n_data
            self.prior_prec = np.asarray(target.prior_prec, dtype=float)
            if mode == "subsample":
                self.C = target.subsample_bound_constants()
            else:
                self.anchor = anchor if anchor is not None else build_anchor(target)
                if self.anchor.per_term_anchor_grads is None:
                    self.anchor = build_anchor(target, self.anchor.theta_hat)
                row = np.linalg.norm(self.prior_prec, axis=1)
                self.K = 0.25 * self.N * target.cv_bound_constants() + row
                self.U_hat = -self.anchor.anchor_full_grad
        elif mode == "cc":
            pass

    def linear(self, theta, p, U):
        """Linear bounds (a, b) for all coordinates at the current state."""
        ap = np.abs(p)
        if self.mode == "hessian-bound":
            a = p * U
            if self.form == "energy":
                b = ap * self.sqrt_diag * math.sqrt(max(p @ self.J @ p, 0.0))
            else:
                b = ap * np.linalg.norm(self.J @ p)
            return a, b
        if self.mode == "subsample":
            return ap * (self.C + np.abs(self.prior_prec @ theta)), ap * np.abs(self.prior_prec @ p)
        r = np.linalg.norm(theta - self.anchor.theta_hat)
        return p * self.U_hat + ap * self.K * r, ap * self.K * np.linalg.norm(p)

    def estimate(self, theta, p, i, rng, U):
        """Rate (exact or unbiased estimate) for coordinate i at theta."""
        if self.mode in ("hessian-bound", "cc"):
            return max(0.0, p[i] * U[i])
        j = int(rng.integers(self.N))
        gj = self.target.grad_log_pdf_terms(theta, np.array([j]))[0, i]
        if self.mode == "subsample":
            return max(0.0, -p[i] * self.N * gj)
        gh = self.anchor.per_term_anchor_grads[j, i]
        return max(0.0, p[i] * (self.U_hat[i] - self.N * (gj - gh)))


def _zigzag_thinned(target, T, theta, p, c, mode, rng, window, adapt_window, anchor, bound_form):
    d = theta.shape[0]
    bounds = _ZigZagBounds(target, mode, anchor, bound_form)
    win = _Window(window, adapt_window)
    stats = ThinningStats()
    builder = SkeletonBuilder(theta, p)
    needs_grad = mode in ("hessian-bound", "cc")
    U = _neg_grad(target, theta) if needs_grad else None
    if needs_grad and U is None:
        return _abort(builder, 0.0, theta, p, stats.as_dict(), "non-finite gradient")
    t = 0.0
    while True:
        w = rng.exponential(size=d)
        if mode == "cc":
            Delta = min(win.width, T - t)
            scheds = [cc_bound(target.rate_polynomial(theta, p, i), (0.0, Delta)) for i in range(d)]
            taus = [sc.inverse_from(0.0, w[i]) for i, sc in enumerate(scheds)]
            taus = np.array([math.inf if x is None else x for x in taus])
            i = int(np.argmin(taus))
            s = float(taus[i])
            if not s <= Delta:
                win.empty()
                theta = theta + Delta * p
                t += Delta
                if t >= T:
                    return builder.finish(T, theta, p, stats.as_dict())
                U = _neg_grad(target, theta)
                if U is None:
                    return _abort(builder, t, theta, p, stats.as_dict(), "non-finite gradient")
                continue
            win.proposal(s)
            lam = float(scheds[i](s))
        else:
            a, b = bounds.linear(theta, p, U)
            taus = linear_inverse_vec(a, b, w)
            i = int(np.argmin(taus))
            s = float(taus[i])
            if t + s > T:
                theta = theta + (T - t) * p
                return builder.finish(T, theta, p, stats.as_dict())
            lam = max(0.0, a[i] + b[i] * s)
        theta = theta + s * p
        t += s
        if needs_grad:
            U = _neg_grad(target, theta)
            if U is None:
                return _abort(builder, t, theta, p, stats.as_dict(), "non-finite gradient")
        rate = bounds.estimate(theta, p, i, rng, U)
        if rng.random() < stats.ratio(t, rate, lam):
            stats.accepted += 1
            p = p.copy()
            p[i] = -p[i]
            builder.add(t, theta, p, flip_tag(i))
        if t >= T:
            return builder.finish(T, theta, p, stats.as_dict())


# ---------------------------------------------------------------- BPS


def _draw_velocity(rng, d, law, chol=None):
    if law == "sphere":
        z = rng.standard_normal(d)
        return z / np.linalg.norm(z)
    z = rng.standard_normal(d)
    return z if chol is None else chol @ z


def _refresh_time(rng, lam_r):
    return rng.exponential(1.0 / lam_r) if lam_r > 0 else math.inf


def bps_run(target: TargetModel, T: float, theta0, p0=None, refresh: float = 1.0, rng=None, *,
            velocity_law: str = "gaussian", precond=None, mode: str = "exact-gaussian",
            window: float = 1.0, adapt_window: bool = False) -> Skeleton:
    """Bouncy Particle Sampler on [0, T].

    Bounce rate ``max(0, p . U(theta))`` with ``U = -grad log pi``, plus
    refreshes at rate ``refresh``. ``precond`` (SPD matrix S) switches to the
    reflection ``p - 2 (g'p)/(g'Sg) S g`` with refreshed velocities N(0, S);
    it requires the Gaussian velocity law. In exact-gaussian mode the
    per-segment drop in log pi from its maximum to the bounce point is
    recorded in ``stats["energy_drops"]``.
    """
    if mode not in BPS_MODES:
        raise ConfigError(f"mode must be one of {BPS_MODES}", ["mode"])
    if velocity_law not in VELOCITY_LAWS:
        raise ConfigError(f"velocity_law must be one of {VELOCITY_LAWS}", ["velocity_law"])
    bad = []
    if not T > 0:
        bad.append("horizon")
    if not refresh >= 0:
        bad.append("refresh")
    if precond is not None and velocity_law != "gaussian":
        bad.append("precond")
    if bad:
        raise ConfigError("invalid BPS settings: " + ", ".join(bad), bad)
    if refresh == 0:
        warnings.warn("refresh rate 0: the sampler can be reducible (e.g. on Gaussian targets)",
                      RuntimeWarning, stacklevel=2)
    rng = as_generator(rng)
    d = target.dim
    sigma = None if precond is None else check_spd(precond, "precond")
    chol = None if sigma is None else np.linalg.cholesky(sigma)
    theta = np.array(theta0, dtype=float).reshape(-1)
    if theta.shape[0] != d:
        raise ConfigError(f"theta0 must have length {d}", ["init"])
    p = _draw_velocity(rng, d, velocity_law, chol) if p0 is None else np.array(p0, dtype=float).reshape(-1)
    builder = SkeletonBuilder(theta, p)
    stats = ThinningStats()
    counts = {"bounce": 0, "refresh": 0}
    drops = []
    if mode == "exact-gaussian":
        Q, mu = _gaussian_parts(target)
    elif mode == "hessian-bound":
        J = _hessian(target)
    win = _Window(window, adapt_window)
    t = 0.0

    def summary():
        out = dict(stats.as_dict(), **counts)
        if mode == "exact-gaussian":
            out["energy_drops"] = np.array(drops)
        return out

    U = _neg_grad(target, theta)
    if U is None:
        return _abort(builder, 0.0, theta, p, summary(), "non-finite gradient")
    while True:
        exact = mode == "exact-gaussian"
        if mode == "cc":
            Delta = min(win.width, T - t)
            poly = sum(np.asarray(target.rate_polynomial(theta, p, i), dtype=float) for i in range(d))
            sched = cc_bound(poly, (0.0, Delta))
            tb = sched.inverse_from(0.0, rng.exponential())
            tb = math.inf if tb is None else tb
        else:
            a = float(p @ U)
            b = float(p @ Q @ p) if exact else float(p @ J @ p)
            tb = linear_inverse(a, b, rng.exponential())
        tr = _refresh_time(rng, refresh)
        s, tag = first_event_superposition([(tb, "bounce"), (tr, "refresh")])
        if mode == "cc" and s > Delta:
            win.empty()
            theta = theta + Delta * p
            t += Delta
            if t >= T:
                return builder.finish(T, theta, p, summary())
            U = _neg_grad(target, theta)
            if U is None:
                return _abort(builder, t, theta, p, summary(), "non-finite gradient")
            continue
        if t + s > T:
            theta = theta + (T - t) * p
            return builder.finish(T, theta, p, summary())
        start = theta
        theta = theta + s * p
        t += s
        U = _neg_grad(target, theta)
        if U is None:
            return _abort(builder, t, theta, p, summary(), "non-finite gradient")
        if tag == "bounce":
            if mode == "cc":
                win.proposal(s)
                lam = float(sched(s))
            else:
                lam = max(0.0, a + b * s)
            if not exact:
                if not rng.random() < stats.ratio(t, max(0.0, float(p @ U)), lam):
                    continue
                stats.accepted += 1
            if not np.any(U):
                tag = "refresh"
            else:
                if exact:
                    t_max = min(max(-a / b, 0.0), s) if b > 0 else 0.0
                    drops.append(target.log_pdf(start + t_max * p) - target.log_pdf(theta))
                p = reflect_precond(p, U, sigma)
        if tag == "refresh":
            p = _draw_velocity(rng, d, velocity_law, chol)
        counts[tag] += 1
        builder.add(t, theta, p, tag)


def bps_autotune(target: TargetModel, theta0, refresh: float = 1.0, *, pilot_horizon: float = 200.0,
                 n_rounds: int = 8, ratio: float = 0.78, rng=None, **kwargs):
    """Adjust the refresh rate so refresh:bounce counts approach ``ratio``.

    Runs ``n_rounds`` pilot trajectories, each time scaling the rate by the
    ratio shortfall. Returns ``(refresh, history)``.
    """
    if not refresh > 0:
        raise ConfigError("autotune needs a positive starting refresh rate", ["refresh"])
    rng = as_generator(rng)
    history = []
    theta = np.array(theta0, dtype=float)
    for _ in range(n_rounds):
        sk = bps_run(target, pilot_horizon, theta, refresh=refresh, rng=rng, **kwargs)
        nb, nr = sk.stats["bounce"], sk.stats["refresh"]
        observed = nr / nb if nb else math.inf
        history.append((refresh, observed))
        if nb == 0:
            refresh *= 0.5
        elif nr == 0:
            refresh *= 2.0
        else:
            refresh *= float(np.clip(ratio / observed, 0.25, 4.0))
        theta = sk.thetas[-1]
    return refresh, history


# ---------------------------------------------------------------- Coordinate sampler


def coordinate_kernel(grad_log_pi, refresh: float) -> np.ndarray:
    """Probabilities of the 2d velocities ``(+e_0, -e_0, +e_1, ...)``.

    Weight of ``p'`` is ``max(0, p' . grad log pi) + refresh``; uniform when all
    weights vanish.
    """
    g = np.asarray(grad_log_pi, dtype=float)
    w = np.empty(2 * g.shape[0])
    w[0::2] = np.maximum(g, 0.0) + refresh
    w[1::2] = np.maximum(-g, 0.0) + refresh
    tot = w.sum()
    if tot == 0:
        return np.full(w.shape, 1.0 / w.shape[0])
    return w / tot


def coordinate_run(target: TargetModel, T: float, theta0, p0=None, refresh: float = 1.0, rng=None, *,
                   mode: str = "exact-gaussian", window: float = 1.0) -> Skeleton:
    """Coordinate Sampler on [0, T] with velocities in ``{+-e_i}``.

    Events occur at rate ``max(0, p . U(theta)) + refresh``. At every event
    the new velocity is drawn from :func:`coordinate_kernel`; the event tag is
    ``bounce`` or ``refresh`` according to which component fired.
    """
    if mode not in BPS_MODES:
        raise ConfigError(f"mode must be one of {BPS_MODES}", ["mode"])
    bad = []
    if not T > 0:
        bad.append("horizon")
    if not refresh >= 0:
        bad.append("refresh")
    if bad:
        raise ConfigError("invalid Coordinate Sampler settings: " + ", ".join(bad), bad)
    rng = as_generator(rng)
    d = target.dim
    theta = np.array(theta0, dtype=float).reshape(-1)
    if theta.shape[0] != d:
        raise ConfigError(f"theta0 must have length {d}", ["init"])
    if p0 is None:
        k = int(rng.integers(2 * d))
        p = np.zeros(d)
        p[k // 2] = 1.0 if k % 2 == 0 else -1.0
    else:
        p = np.array(p0, dtype=float).reshape(-1)
        if not (np.count_nonzero(p) == 1 and np.abs(p).sum() == 1.0):
            raise ConfigError("initial velocity must be +-e_i", ["init"])
    if mode == "exact-gaussian":
        Q, mu = _gaussian_parts(target)
        diag = np.diag(Q)
    elif mode == "hessian-bound":
        diag = np.diag(_hessian(target))
    builder = SkeletonBuilder(theta, p)
    stats = ThinningStats()
    counts = {"bounce": 0, "refresh": 0}
    t = 0.0
    U = _neg_grad(target, theta)
    if U is None:
        return _abort(builder, 0.0, theta, p, stats.as_dict(), "non-finite gradient")
    while True:
        k = int(np.flatnonzero(p)[0])
        sgn = p[k]
        if mode == "cc":
            Delta = min(window, T - t)
            sched = cc_bound(target.rate_polynomial(theta, p, k), (0.0, Delta))
            tb = sched.inverse_from(0.0, rng.exponential())
            tb = math.inf if tb is None else tb
        else:
            a = float(sgn * U[k])
            b = float(diag[k])
            tb = linear_inverse(a, b, rng.exponential())
        tr = _refresh_time(rng, refresh)
        s, tag = first_event_superposition([(tb, "bounce"), (tr, "refresh")])
        if mode == "cc" and s > Delta:
            theta = theta + Delta * p
            t += Delta
            if t >= T:
                return builder.finish(T, theta, p, dict(stats.as_dict(), **counts))
            U = _neg_grad(target, theta)
            if U is None:
                return _abort(builder, t, theta, p, stats.as_dict(), "non-finite gradient")
            continue
        if t + s > T:
            theta = theta + (T - t) * p
            return builder.finish(T, theta, p, dict(stats.as_dict(), **counts))
        theta = theta + s * p
        t += s
        U = _neg_grad(target, theta)
        if U is None:
            return _abort(builder, t, theta, p, stats.as_dict(), "non-finite gradient")
        if tag == "bounce" and mode != "exact-gaussian":
            lam = float(sched(s)) if mode == "cc" else max(0.0, a + b * s)
            if not rng.random() < stats.ratio(t, max(0.0, sgn * U[k]), lam):
                continue
            stats.accepted += 1
        probs = coordinate_kernel(-U, refresh)
        j = min(int(np.searchsorted(np.cumsum(probs), rng.random(), side="right")), 2 * d - 1)
        p = np.zeros(d)
        p[j // 2] = 1.0 if j % 2 == 0 else -1.0
        counts[tag] += 1
        builder.add(t, theta, p, tag)


# ---------------------------------------------------------------- Boomerang


def boomerang_flow(theta, p, t, centre):
    """Elliptical flow about ``centre``."""
    u = np.asarray(theta, dtype=float) - centre
    c, s = math.cos(t), math.sin(t)
    return centre + u * c + p * s, p * c - u * s


def boomerang_constant(target: TargetModel, cov) -> float:
    """Spectral bound M on the Hessian of ``U = -log pi - log N(theta*, cov)``.

    Gaussian targets: ``||P - cov^-1||``. Otherwise, with ``0 <= H <= J``,
    ``max(lambda_max(J - cov^-1), lambda_max(cov^-1))``.
    """
    prec = np.linalg.inv(cov)
    if hasattr(target, "precision"):
        return float(np.linalg.norm(target.precision - prec, 2))
    J = _hessian(target)
    return float(max(np.linalg.eigvalsh(J - prec)[-1], np.linalg.eigvalsh(prec)[-1], 0.0))


def boomerang_run(target: TargetModel, T: float, theta0, p0=None, refresh: float = 1.0, rng=None, *,
                  centre=None, cov=None, M: float | None = None) -> Skeleton:
    """Boomerang sampler on [0, T].

    The reference is N(centre, cov), by default the target's mode and its
    Gaussian covariance (or the inverse negative Hessian at the mode). The
    bounce rate ``max(0, p . grad U(theta))`` is thinned against the constant
    bound ``r |grad U(centre)| + M r^2 / 2`` with
    ``r^2 = |theta - centre|^2 + |p|^2``, which the flow conserves.
    """
    bad = []
    if not T > 0:
        bad.append("horizon")
    if not refresh >= 0:
        bad.append("refresh")
    if bad:
        raise ConfigError("invalid Boomerang settings: " + ", ".join(bad), bad)
    rng = as_generator(rng)
    d = target.dim
    centre = find_mode(target) if centre is None else np.asarray(centre, dtype=float).reshape(-1)
    if cov is None:
        post = target.posterior()
        if post is not None:
            cov = post.covariance
        elif hasattr(target, "neg_log_hessian"):
            cov = np.linalg.inv(target.neg_log_hessian(centre))
        else:
            cov = np.eye(d)
    cov = check_spd(np.atleast_2d(cov), "cov")
    prec = np.linalg.inv(cov)
    chol = np.linalg.cholesky(cov)
    if M is None:
        M = boomerang_constant(target, cov)
    theta = np.array(theta0, dtype=float).reshape(-1)
    if theta.shape[0] != d:
        raise ConfigError(f"theta0 must have length {d}", ["init"])
    p = chol @ rng.standard_normal(d) if p0 is None else np.array(p0, dtype=float).reshape(-1)

    def grad_U(x):
        return -target.grad_log_pdf(x) - prec @ (x - centre)

    g_star = float(np.linalg.norm(grad_U(centre)))
    builder = SkeletonBuilder(theta, p, flow="boomerang", centre=centre)
    stats = ThinningStats()
    counts = {"bounce": 0, "refresh": 0}
    t = 0.0
    while True:
        r2 = float((theta - centre) @ (theta - centre) + p @ p)
        lam = math.sqrt(r2) * g_star + 0.5 * M * r2
        tb = rng.exponential(1.0 / lam) if lam > 0 else math.inf
        tr = _refresh_time(rng, refresh)
        s, tag = first_event_superposition([(tb, "bounce"), (tr, "refresh")])
        if t + s > T:
            theta, p = boomerang_flow(theta, p, T - t, centre)
            return builder.finish(T, theta, p, dict(stats.as_dict(), **counts))
        theta, p = boomerang_flow(theta, p, s, centre)
        t += s
        if tag == "bounce":
            g = grad_U(theta)
            if not np.all(np.isfinite(g)):
                return _abort(builder, t, theta, p, stats.as_dict(), "non-finite gradient")
            if not rng.random() < stats.ratio(t, max(0.0, float(p @ g)), lam):
                continue
            stats.accepted += 1
            if np.any(g):
                p = reflect_precond(p, g, cov)
            else:
                tag = "refresh"
        if tag == "refresh":
            p = chol @ rng.standard_normal(d)
        counts[tag] += 1
        builder.add(t, theta, p, tag)
