"""Discrete-time samplers: Metropolis-Hastings family, HMC, and lifted
non-reversible chains (guided random walk, Horowitz HMC, discrete BPS,
ring walks).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, NumericalFault
from .models import TargetModel, check_spd


@dataclass
class ChainOutput:
    """Record of a discrete-time run. ``states[k]`` is the state after step k+1."""

    states: np.ndarray
    accept_count: int
    proposal_kind: str
    seed: int | None = None
    burn_in: int = 0
    accepted: np.ndarray | None = None
    momenta: np.ndarray | None = None

    def __post_init__(self):
        n = self.states.shape[0]
        if not 0 <= self.accept_count <= n:
            raise ValueError("accept_count out of range")

    @property
    def n(self) -> int:
        return int(self.states.shape[0])

    @property
    def acceptance_rate(self) -> float:
        return self.accept_count / self.n if self.n else float("nan")

    def kept(self) -> np.ndarray:
        """States after burn-in."""
        return self.states[self.burn_in :]


# ---------------------------------------------------------------- proposals


@dataclass(frozen=True)
class RWM:
    """Random walk proposal N(theta, scale^2 V)."""

    scale: float
    precond: np.ndarray | None = None
    kind: str = field(default="rwm", init=False)


@dataclass(frozen=True)
class MALA:
    """Langevin proposal N(theta + scale^2 V grad / 2, scale^2 V)."""

    scale: float
    precond: np.ndarray | None = None
    kind: str = field(default="mala", init=False)


@dataclass(frozen=True)
class MHIS:
    """Gaussian independence proposal N(mean, cov)."""

    mean: np.ndarray
    cov: np.ndarray
    kind: str = field(default="mhis", init=False)


def acceptance_probability(log_pi_cur, log_pi_prop, log_q_fwd=0.0, log_q_rev=0.0) -> float:
    """``min(1, pi(y) q(x|y) / (pi(x) q(y|x)))``; a NaN ratio counts as 0."""
    lr = (log_pi_prop - log_pi_cur) + (log_q_rev - log_q_fwd)
    if lr != lr:
        return 0.0
    return 1.0 if lr >= 0 else math.exp(lr)


class _Kernel:
    """Pre-factorised MH proposal. ``z`` is a standard normal draw."""

    def __init__(self, proposal, d: int):
        self.kind = proposal.kind
        self.proposal = proposal
        if self.kind in ("rwm", "mala"):
            if not proposal.scale > 0:
                raise ConfigError("proposal scale must be positive", ["scale"])
            V = np.eye(d) if proposal.precond is None else check_spd(proposal.precond, "precond")
            self.V = V
            self.chol = np.linalg.cholesky(V)
            self.chol_inv = np.linalg.inv(self.chol)
            self.lam = float(proposal.scale)
            self.identity = proposal.precond is None
        elif self.kind == "mhis":
            cov = check_spd(proposal.cov, "cov")
            self.mean = np.asarray(proposal.mean, dtype=float)
            self.chol = np.linalg.cholesky(cov)
            self.chol_inv = np.linalg.inv(self.chol)
        else:
            raise ConfigError(f"unknown proposal {proposal!r}", ["proposal"])
        self.needs_grad = self.kind == "mala"

    def _noise(self, z):
        return z if getattr(self, "identity", False) else self.chol @ z

    def _maha(self, r):
        w = r if getattr(self, "identity", False) else self.chol_inv @ r
        return w @ w

    def mala_mean(self, theta, g):
        step = 0.5 * self.lam**2
        return theta + step * (g if self.identity else self.V @ g)

    def transition(self, theta, lp, g, z, u, target):
        """One MH transition given its random inputs. Returns (theta, lp, g, accepted)."""
        if self.kind == "rwm":
            prop = theta + self.lam * self._noise(z)
            lp_prop = target.log_pdf(prop)
            alpha = acceptance_probability(lp, lp_prop)
            g_prop = None
        elif self.kind == "mala":
            prop = self.mala_mean(theta, g) + self.lam * self._noise(z)
            lp_prop = target.log_pdf(prop)
            if not math.isfinite(lp_prop):
                return theta, lp, g, False
            g_prop = target.grad_log_pdf(prop)
            s2 = self.lam**2
            log_fwd = -0.5 * self._maha(prop - self.mala_mean(theta, g)) / s2
            log_rev = -0.5 * self._maha(theta - self.mala_mean(prop, g_prop)) / s2
            alpha = acceptance_probability(lp, lp_prop, log_fwd, log_rev)
        else:
            prop = self.mean + self.chol @ z
            lp_prop = target.log_pdf(prop)
            log_fwd = -0.5 * self._maha(prop - self.mean)
            log_rev = -0.5 * self._maha(theta - self.mean)
            alpha = acceptance_probability(lp, lp_prop, log_fwd, log_rev)
            g_prop = None
        if u < alpha:
            return prop, lp_prop, g_prop, True
        return theta, lp, g, False


def _check_current(lp):
    if not math.isfinite(lp):
        raise NumericalFault(
            f"log-density at the current state is {lp}; the chain must start inside the support"
        )


def mh_step(theta, proposal, target: TargetModel, rng: np.random.Generator):
    """One Metropolis-Hastings step. Returns ``(theta', accepted)``.

    A proposal is accepted when a uniform draw is strictly below the
    acceptance probability.
    """
    theta = np.asarray(theta, dtype=float)
    kern = _Kernel(proposal, theta.shape[0])
    lp = target.log_pdf(theta)
    _check_current(lp)
    g = target.grad_log_pdf(theta) if kern.needs_grad else None
    z = rng.standard_normal(theta.shape[0])
    u = rng.random()
    new, _, _, acc = kern.transition(theta, lp, g, z, u, target)
    return new, acc


def run_mh(target: TargetModel, proposal, theta0, n_iter: int, rng=None, seed: int | None = None,
           burn_in: int = 0, block: int = 4096) -> ChainOutput:
    """Run ``n_iter`` MH steps. Noise is drawn in blocks for speed."""
    rng = np.random.default_rng(seed if rng is None else rng)
    theta = np.array(theta0, dtype=float).reshape(-1)
    d = theta.shape[0]
    kern = _Kernel(proposal, d)
    lp = target.log_pdf(theta)
    _check_current(lp)
    g = target.grad_log_pdf(theta) if kern.needs_grad else None
    states = np.empty((n_iter, d))
    accepted = np.zeros(n_iter, dtype=bool)
    for start in range(0, n_iter, block):
        stop = min(start + block, n_iter)
        Z = rng.standard_normal((stop - start, d))
        U = rng.random(stop - start)
        for k in range(start, stop):
            theta, lp, g, acc = kern.transition(theta, lp, g, Z[k - start], U[k - start], target)
            states[k] = theta
            accepted[k] = acc
    return ChainOutput(states, int(accepted.sum()), proposal.kind, seed, burn_in, accepted)


def tune_scale(acceptance_of: Callable[[float], float], target_rate: float, lo: float, hi: float,
               n_steps: int = 20, tol: float = 0.005) -> float:
    """Bisection on a scale whose acceptance rate decreases with the scale."""
    for _ in range(n_steps):
        mid = math.sqrt(lo * hi)
        rate = acceptance_of(mid)
        if abs(rate - target_rate) < tol:
            return mid
        if rate > target_rate:
            lo = mid
        else:
            hi = mid
    return math.sqrt(lo * hi)


# ---------------------------------------------------------------- HMC


def _mass(M, d):
    if M is None:
        return None, None
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = float(M) * np.eye(d)
    M = check_spd(M, "mass")
    return np.linalg.inv(M), np.linalg.cholesky(M)


def _leapfrog(theta, p, eps, L, minv, grad):
    """Leapfrog with half-steps of size eps/2. Returns (theta, p, finite)."""
    g = grad(theta)
    p = p + 0.5 * eps * g
    for i in range(L):
        theta = theta + eps * (p if minv is None else minv @ p)
        g = grad(theta)
        if not np.all(np.isfinite(g)):
            return theta, p, False
        p = p + (eps if i < L - 1 else 0.5 * eps) * g
    return theta, p, bool(np.all(np.isfinite(theta)) and np.all(np.isfinite(p)))


def leapfrog(theta, p, eps: float, L: int, M, target: TargetModel):
    """``L`` leapfrog steps of size ``eps`` under mass matrix ``M`` (None for I).

    Returns ``(theta', p')``; entries are non-finite if the trajectory
    diverged.
    """
    if not eps > 0 or L < 1:
        raise ConfigError("leapfrog needs eps > 0 and L >= 1", ["eps", "L"])
    theta = np.asarray(theta, dtype=float)
    minv, _ = _mass(M, theta.shape[0])
    th, pp, ok = _leapfrog(theta, np.asarray(p, dtype=float), eps, L, minv, target.grad_log_pdf)
    if not ok:
        return np.full_like(th, np.nan), np.full_like(pp, np.nan)
    return th, pp


def gaussian_exact_flow(sigma: float, T: float, mean: float = 0.0):
    """Exact Hamiltonian flow for N(mean, sigma^2 I) with unit mass over time T."""
    c, s = math.cos(T / sigma), math.sin(T / sigma)

    def flow(theta, p):
        r = theta - mean
        return mean + r * c + sigma * p * s, p * c - (r / sigma) * s

    return flow


def _kinetic(p, minv):
    return 0.5 * (p @ p if minv is None else p @ (minv @ p))


def hmc_step(theta, eps: float, L: int, M, target: TargetModel, rng: np.random.Generator, flow=None):
    """One HMC step. Returns ``(theta', accepted)``.

    ``flow`` replaces the leapfrog integrator with an exact (theta, p) map,
    e.g. :func:`gaussian_exact_flow`. ``L = 0`` is a no-op counted as accepted.
    """
    theta = np.asarray(theta, dtype=float)
    d = theta.shape[0]
    minv, chol = _mass(M, d)
    z = rng.standard_normal(d)
    u = rng.random()
    new, _, acc = _hmc_transition(theta, target.log_pdf(theta), z, u, eps, L, minv, chol, target, flow)
    return new, acc


def _hmc_transition(theta, lp, z, u, eps, L, minv, chol, target, flow):
    if L == 0 and flow is None:
        return theta, lp, True
    p = z if chol is None else chol @ z
    if flow is not None:
        new, pn = flow(theta, p)
        ok = bool(np.all(np.isfinite(new)))
    else:
        new, pn, ok = _leapfrog(theta, p, eps, L, minv, target.grad_log_pdf)
    if not ok:
        return theta, lp, False
    lp_new = target.log_pdf(new)
    alpha = acceptance_probability(lp - _kinetic(p, minv), lp_new - _kinetic(pn, minv))
    if u < alpha:
        return new, lp_new, True
    return theta, lp, False


def run_hmc(target: TargetModel, theta0, n_iter: int, eps: float, L: int, M=None, rng=None,
            seed: int | None = None, flow=None, burn_in: int = 0) -> ChainOutput:
    rng = np.random.default_rng(seed if rng is None else rng)
    theta = np.array(theta0, dtype=float).reshape(-1)
    d = theta.shape[0]
    minv, chol = _mass(M, d)
    lp = target.log_pdf(theta)
    _check_current(lp)
    Z = rng.standard_normal((n_iter, d))
    U = rng.random(n_iter)
    states = np.empty((n_iter, d))
    accepted = np.zeros(n_iter, dtype=bool)
    for k in range(n_iter):
        theta, lp, acc = _hmc_transition(theta, lp, Z[k], U[k], eps, L, minv, chol, target, flow)
        states[k] = theta
        accepted[k] = acc
    return ChainOutput(states, int(accepted.sum()), "hmc", seed, burn_in, accepted)


# ---------------------------------------------------------------- lifted chains


def guided_rw_step(state, delta: float, target: TargetModel, rng: np.random.Generator,
                   random_length: bool | None = None):
    """Guided random walk step on a lifted state ``(theta, p)``.

    With ``random_length`` (the default in one dimension) the move is
    ``theta + p |zeta|`` with ``zeta ~ N(0, delta^2)`` and ``p = +-1``;
    otherwise it is ``theta + delta p`` for a unit vector ``p``. Accepted
    moves keep ``p``; rejections reverse it.
    """
    theta, p = (np.asarray(a, dtype=float) for a in state)
    if not delta > 0:
        raise ConfigError("delta must be positive", ["delta"])
    if random_length is None:
        random_length = theta.shape[0] == 1
    step = abs(rng.normal(0.0, delta)) if random_length else delta
    prop = theta + step * p
    u = rng.random()
    if u < acceptance_probability(target.log_pdf(theta), target.log_pdf(prop)):
        return prop, p
    return theta, -p


def uniform_direction(d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def run_guided_rw(target: TargetModel, theta0, n_iter: int, delta: float, rng=None, seed=None,
                  p0=None, refresh_every: int | None = 10, random_length: bool | None = None) -> ChainOutput:
    """Guided random walk. In d > 1 the direction is redrawn uniformly on the
    sphere every ``refresh_every`` iterations (None disables refreshes)."""
    rng = np.random.default_rng(seed if rng is None else rng)
    theta = np.array(theta0, dtype=float).reshape(-1)
    d = theta.shape[0]
    if p0 is None:
        p = np.array([1.0]) if d == 1 else uniform_direction(d, rng)
    else:
        p = np.asarray(p0, dtype=float)
    states = np.empty((n_iter, d))
    moms = np.empty((n_iter, d))
    accepted = np.zeros(n_iter, dtype=bool)
    for k in range(n_iter):
        if d > 1 and refresh_every and k > 0 and k % refresh_every == 0:
            p = uniform_direction(d, rng)
        new, p_new = guided_rw_step((theta, p), delta, target, rng, random_length)
        accepted[k] = p_new is p
        theta, p = new, p_new
        states[k] = theta
        moms[k] = p
    return ChainOutput(states, int(accepted.sum()), "guided", seed, 0, accepted, moms)


def horowitz_step(state, gamma: float, eps: float, L: int, target: TargetModel, rng: np.random.Generator,
                  M=None, on_reject: str = "refreshed", return_accept: bool = False):
    """Non-reversible HMC with partial momentum refreshment.

    ``p' = gamma p + sqrt(1 - gamma^2) zeta``, then a leapfrog trajectory with
    a momentum flip as an MH proposal, then a final momentum flip. On
    rejection the momentum kept before the flip is the refreshed ``p'``
    (``on_reject="refreshed"``) or the incoming ``p`` (``"previous"``); only
    the former leaves the extended target invariant.
    """
    if not 0 <= gamma < 1:
        raise ConfigError("gamma must lie in [0, 1)", ["gamma"])
    theta, p = (np.asarray(a, dtype=float) for a in state)
    d = theta.shape[0]
    minv, chol = _mass(M, d)
    z = rng.standard_normal(d)
    u = rng.random()
    zeta = z if chol is None else chol @ z
    p_ref = gamma * p + math.sqrt(1.0 - gamma * gamma) * zeta
    if L == 0:
        new, pn, ok = theta, p_ref, True
    else:
        new, pn, ok = _leapfrog(theta, p_ref, eps, L, minv, target.grad_log_pdf)
    acc = False
    if ok:
        alpha = acceptance_probability(
            target.log_pdf(theta) - _kinetic(p_ref, minv), target.log_pdf(new) - _kinetic(pn, minv)
        )
        acc = u < alpha
    if acc:
        # proposal is (new, -pn); the final flip restores pn
        out = (new, pn)
    else:
        kept = p_ref if on_reject == "refreshed" else p
        out = (theta, -kept)
    return (*out, acc) if return_accept else out


def run_horowitz(target: TargetModel, theta0, n_iter: int, gamma: float, eps: float, L: int, rng=None,
                 seed=None, p0=None, M=None, on_reject: str = "refreshed") -> ChainOutput:
    rng = np.random.default_rng(seed if rng is None else rng)
    theta = np.array(theta0, dtype=float).reshape(-1)
    d = theta.shape[0]
    p = rng.standard_normal(d) if p0 is None else np.asarray(p0, dtype=float)
    states = np.empty((n_iter, d))
    moms = np.empty((n_iter, d))
    accepted = np.zeros(n_iter, dtype=bool)
    for k in range(n_iter):
        theta, p, accepted[k] = horowitz_step((theta, p), gamma, eps, L, target, rng, M, on_reject, True)
        states[k] = theta
        moms[k] = p
    return ChainOutput(states, int(accepted.sum()), "horowitz", seed, 0, accepted, moms)


def psi_reflect(p, g) -> np.ndarray:
    """``Psi_g(p) = -p + 2 (p . g_hat) g_hat``."""
    g_hat = g / np.linalg.norm(g)
    return -p + 2.0 * (p @ g_hat) * g_hat


def dbps_step(state, delta: float, gamma: float, target: TargetModel, rng: np.random.Generator,
              return_outcome: bool = False):
    """Discrete bouncy particle sampler step with delayed rejection.

    Net outcomes: forward ``(theta + delta p, p)``; bounce
    ``(theta + delta p + delta R_g p, R_g p)`` with ``R_g = -Psi_g`` at the
    first proposal; or full rejection ``(theta, -p)``. A zero gradient at the
    first proposal means full rejection. Afterwards the direction is jittered
    to ``(gamma p + sqrt(1 - gamma^2) xi) / norm`` with ``xi ~ N(0, I/d)``
    unless ``gamma == 1``.
    """
    theta, p = (np.asarray(a, dtype=float) for a in state)
    if not delta > 0 or not 0 <= gamma <= 1:
        raise ConfigError("need delta > 0 and gamma in [0, 1]", ["delta", "gamma"])
    d = theta.shape[0]
    u1, u2 = rng.random(2)
    lp = target.log_pdf(theta)
    th1 = theta + delta * p
    lp1 = target.log_pdf(th1)
    a1 = acceptance_probability(lp, lp1)
    if u1 < a1:
        new, pn, outcome = th1, p, "forward"
    else:
        g = target.grad_log_pdf(th1)
        if not np.any(g):
            new, pn, outcome = theta, -p, "reject"
        else:
            psi = psi_reflect(p, g)
            th2 = th1 - delta * psi
            lp2 = target.log_pdf(th2)
            a1_rev = acceptance_probability(lp2, lp1)
            num = (1.0 - a1_rev) * math.exp(min(lp2 - lp, 700.0))
            den = 1.0 - a1
            a2 = 1.0 if num >= den else num / den
            if u2 < a2:
                new, pn, outcome = th2, -psi, "bounce"
            else:
                new, pn, outcome = theta, -p, "reject"
    if gamma < 1:
        xi = rng.standard_normal(d) / math.sqrt(d)
        v = gamma * pn + math.sqrt(1.0 - gamma * gamma) * xi
        pn = v / np.linalg.norm(v)
    return (new, pn, outcome) if return_outcome else (new, pn)


def run_dbps(target: TargetModel, theta0, n_iter: int, delta: float, gamma: float, rng=None, seed=None,
             p0=None) -> ChainOutput:
    rng = np.random.default_rng(seed if rng is None else rng)
    theta = np.array(theta0, dtype=float).reshape(-1)
    d = theta.shape[0]
    p = uniform_direction(d, rng) if p0 is None else np.asarray(p0, dtype=float)
    states = np.empty((n_iter, d))
    moms = np.empty((n_iter, d))
    accepted = np.zeros(n_iter, dtype=bool)
    for k in range(n_iter):
        theta, p, outcome = dbps_step((theta, p), delta, gamma, target, rng, True)
        accepted[k] = outcome != "reject"
        states[k] = theta
        moms[k] = p
    return ChainOutput(states, int(accepted.sum()), "dbps", seed, 0, accepted, moms)


# ---------------------------------------------------------------- ring walks


@dataclass(frozen=True)
class RingLaw:
    """Jump law on the integers: ``values`` with probabilities ``probs``."""

    values: tuple
    probs: tuple

    @staticmethod
    def symmetric(h: int = 1) -> "RingLaw":
        vals = tuple(range(-h, h + 1))
        return RingLaw(vals, tuple([1.0 / len(vals)] * len(vals)))

    @staticmethod
    def biased() -> "RingLaw":
        return RingLaw((-1, 0, 1), (2 / 9, 1 / 3, 4 / 9))


def _jumps(law: RingLaw, size, rng):
    vals = np.asarray(law.values, dtype=np.int64)
    cdf = np.cumsum(law.probs)
    cdf[-1] = 1.0
    return vals[np.searchsorted(cdf, rng.random(size), side="right")]


def ring_walk_step(x: int, S: int, law: RingLaw, rng: np.random.Generator) -> int:
    if S < 2 or not 0 <= x < S:
        raise ConfigError("need S >= 2 and 0 <= x < S", ["S", "x"])
    return int((x + _jumps(law, 1, rng)[0]) % S)


def ring_walk_run(x0: int, S: int, n: int, law: RingLaw, rng: np.random.Generator) -> np.ndarray:
    """States X_1..X_n of the ring walk started at x0 (vectorised)."""
    if S < 2 or not 0 <= x0 < S:
        raise ConfigError("need S >= 2 and 0 <= x0 < S", ["S", "x0"])
    return (x0 + np.cumsum(_jumps(law, n, rng))) % S


def ring_tvd_curve(S: int, checkpoints, law: RingLaw, rng: np.random.Generator, x0: int = 0) -> np.ndarray:
    """Occupation-measure TVD to uniform at each checkpoint n (no burn-in)."""
    checkpoints = np.asarray(checkpoints, dtype=np.int64)
    states = ring_walk_run(x0, S, int(checkpoints.max()), law, rng)
    out = np.empty(len(checkpoints))
    counts = np.zeros(S, dtype=np.int64)
    prev = 0
    for i in np.argsort(checkpoints):
        n = int(checkpoints[i])
        counts += np.bincount(states[prev:n], minlength=S)
        prev = n
        out[i] = np.abs(counts / n - 1.0 / S).sum()
    return out
