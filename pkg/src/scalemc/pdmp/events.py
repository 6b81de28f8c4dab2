"""Event-time simulation: exact inversion of linear rates, Poisson thinning,
superposition and concave-convex bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .._kernels import linear_inverse_arr, linear_mass_arr
from ..errors import InvalidBoundError, UnsupportedBoundError

SQRT_CLAMP = 1e-12
RATIO_TOL = 1e-9


def _sqrt(x: float) -> float:
    if x < 0:
        if x < -SQRT_CLAMP:
            raise ValueError(f"negative square-root argument {x}")
        return 0.0
    return math.sqrt(x)


def linear_inverse(a: float, b: float, w: float) -> float:
    """Smallest tau with ``int_0^tau max(0, a + b s) ds = w``, or +inf."""
    if b > 0:
        if a >= 0:
            return 2.0 * w / (a + _sqrt(a * a + 2.0 * w * b))
        return -a / b + _sqrt(2.0 * w / b)
    if b == 0:
        return w / a if a > 0 else math.inf
    if a <= 0:
        return math.inf
    if w >= a * a / (-2.0 * b):
        return math.inf
    return 2.0 * w / (a + _sqrt(a * a + 2.0 * w * b))


def linear_mass(a: float, b: float, tau: float) -> float:
    """``int_0^tau max(0, a + b s) ds``."""
    if tau <= 0:
        return 0.0
    lo, hi = 0.0, tau
    if b > 0:
        lo = min(max(-a / b, 0.0), tau)
    elif b < 0:
        hi = min(max(-a / b, 0.0), tau)
    elif a <= 0:
        return 0.0
    # midpoint form avoids cancellation when b is tiny
    return max((hi - lo) * (a + 0.5 * b * (lo + hi)), 0.0) if hi > lo else 0.0


@dataclass(frozen=True)
class LinearRate:
    """Rate ``t -> max(0, a + b t)``."""

    a: float
    b: float

    def __call__(self, t):
        return np.maximum(0.0, self.a + self.b * np.asarray(t, dtype=float))

    def mass(self, tau: float) -> float:
        return linear_mass(self.a, self.b, tau)

    def inverse(self, w: float) -> float:
        return linear_inverse(self.a, self.b, w)

    def shifted(self, s: float) -> "LinearRate":
        return LinearRate(self.a + self.b * s, self.b)


def event_time_linear(rate: LinearRate, rng: np.random.Generator) -> float:
    """First event time of a Poisson process with rate ``max(0, a + b t)``."""
    return linear_inverse(rate.a, rate.b, rng.exponential())


@dataclass(frozen=True)
class PiecewiseLinearRate:
    """Continuous non-negative piecewise-linear rate given by knots and values.

    Defined on ``[knots[0], knots[-1]]``.
    """

    knots: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        return np.interp(t, self.knots, self.values)

    @property
    def start(self) -> float:
        return float(self.knots[0])

    @property
    def end(self) -> float:
        return float(self.knots[-1])

    def inverse_from(self, t0: float, w: float) -> float | None:
        """Time s >= t0 where the mass accumulated from t0 reaches w, or None
        if the window ends first."""
        k = self.knots
        v = self.values
        i = max(int(np.searchsorted(k, t0, side="right")) - 1, 0)
        t = t0
        vt = float(np.interp(t0, k, v))
        while i < len(k) - 1:
            h = k[i + 1] - t
            if h > 0:
                slope = (v[i + 1] - v[i]) / (k[i + 1] - k[i])
                m = linear_mass(vt, slope, h)
                if m >= w:
                    return t + linear_inverse(vt, slope, w)
                w -= m
            i += 1
            t = k[i]
            vt = v[i]
        return None


def first_event_superposition(candidates):
    """Minimum of candidate ``(time, tag)`` pairs; ties go to the lowest index.

    Returns ``(inf, None)`` when every candidate is infinite.
    """
    if len(candidates) == 0:
        raise ValueError("need at least one candidate")
    best_t, best_tag = math.inf, None
    for t, tag in candidates:
        if t < best_t:
            best_t, best_tag = t, tag
    return best_t, best_tag


class ThinningStats:
    """Counts proposals and checks each acceptance ratio against 1."""

    def __init__(self):
        self.proposals = 0
        self.accepted = 0
        self.max_ratio = 0.0

    def ratio(self, t: float, rate: float, bound: float) -> float:
        self.proposals += 1
        if bound <= 0:
            if rate > 0:
                raise InvalidBoundError(t, rate, bound)
            return 0.0
        r = rate / bound
        if r > self.max_ratio:
            self.max_ratio = r
        if r > 1.0 + RATIO_TOL:
            raise InvalidBoundError(t, rate, bound)
        return r

    def as_dict(self) -> dict:
        return {"proposals": self.proposals, "accepted": self.accepted, "max_ratio": self.max_ratio}


def event_time_thinning(true_rate: Callable[[float], float], bound, horizon: float,
                        rng: np.random.Generator, stats: ThinningStats | None = None):
    """First event of ``true_rate`` on [0, horizon] by Poisson thinning.

    ``bound`` is a :class:`LinearRate` valid on the whole horizon, a
    :class:`PiecewiseLinearRate`, or a callable ``t0 -> PiecewiseLinearRate``
    returning a bound valid on a window starting at t0 (rebuilt whenever a
    window passes without an event). Returns ``(tau, n_proposals)`` with
    ``tau = inf`` if no event occurs before the horizon.
    """
    stats = stats or ThinningStats()
    start = stats.proposals
    t = 0.0
    while t < horizon:
        if isinstance(bound, LinearRate):
            s = t + bound.shifted(t).inverse(rng.exponential())
            lam_fn = bound
            end = horizon
        else:
            sched = bound if isinstance(bound, PiecewiseLinearRate) else bound(t)
            end = min(sched.end, horizon)
            s = sched.inverse_from(t, rng.exponential())
            lam_fn = sched
            if s is None:
                s = math.inf
        if s > end:
            if end >= horizon or isinstance(bound, PiecewiseLinearRate):
                return math.inf, stats.proposals - start
            t = end
            continue
        lam = float(lam_fn(s))
        r = stats.ratio(s, float(true_rate(s)), lam)
        if rng.random() < r:
            stats.accepted += 1
            return s, stats.proposals - start
        t = s
    return math.inf, stats.proposals - start


def cc_bound(poly, window) -> PiecewiseLinearRate:
    """Piecewise-linear bound on ``max(0, poly(t))`` over ``window = (t0, t1)``, t0 >= 0.

    ``poly`` holds coefficients c0..c3. Constant, linear and positive
    higher-order terms form the convex part, bounded by its chord;
    negative higher-order terms form the concave part, bounded by the
    smaller of its tangents at t0 and t1. The result is
    ``max(0, chord) + max(0, min(tangents))``.
    """
    t0, t1 = float(window[0]), float(window[1])
    if not t1 > t0 or t0 < 0:
        raise ValueError("cc_bound needs 0 <= t0 < t1")
    c = np.zeros(4)
    c[: len(poly)] = np.asarray(poly, dtype=float)
    cvx = np.array([c[0], c[1], max(c[2], 0.0), max(c[3], 0.0)])
    ccv = np.array([0.0, 0.0, min(c[2], 0.0), min(c[3], 0.0)])

    def ev(q, t):
        return q[0] + t * (q[1] + t * (q[2] + t * q[3]))

    def dv(q, t):
        return q[1] + t * (2 * q[2] + 3 * t * q[3])

    f0, f1 = ev(cvx, t0), ev(cvx, t1)
    chord_b = (f1 - f0) / (t1 - t0)
    # tangent lines of the concave part: y = g_k + s_k (t - tk)
    g0, s0 = ev(ccv, t0), dv(ccv, t0)
    g1, s1 = ev(ccv, t1), dv(ccv, t1)

    def chord(t):
        return f0 + chord_b * (t - t0)

    def tang(t):
        return np.minimum(g0 + s0 * (t - t0), g1 + s1 * (t - t1))

    pts = {t0, t1}
    if chord_b != 0:
        pts.add(t0 - f0 / chord_b)
    if s0 != s1:
        pts.add((g1 - s1 * t1 - g0 + s0 * t0) / (s0 - s1))
    if s0 != 0:
        pts.add(t0 - g0 / s0)
    if s1 != 0:
        pts.add(t1 - g1 / s1)
    knots = np.array(sorted(p for p in pts if t0 <= p <= t1))
    vals = np.maximum(0.0, chord(knots)) + np.maximum(0.0, tang(knots))
    # tiny relative inflation absorbs rounding in the polynomial evaluation
    scale = np.abs(c).sum() * max(1.0, t1) ** 3
    return PiecewiseLinearRate(knots, vals + 1e-12 * scale)


def hessian_bound_rate(target, state, w, form: str = "energy") -> LinearRate:
    """Linear bound on ``max(0, w . U(theta + t p))`` with ``U = -grad log pi``.

    The intercept is ``w . U(theta)``. With ``form="energy"`` the slope is
    ``sqrt(w'Jw) sqrt(p'Jp)``, valid whenever ``0 <= H <= J``. ``form="norm"``
    gives ``|w| |Jp|``, which is only guaranteed when the Hessian commutes
    with J (for instance Gaussian targets with J equal to the precision).
    """
    J = target.hessian_bound()
    if J is None:
        raise UnsupportedBoundError(f"{target.kind} provides no Hessian bound")
    theta, p = (np.asarray(a, dtype=float) for a in state)
    w = np.asarray(w, dtype=float)
    a = float(-(w @ target.grad_log_pdf(theta)))
    if form == "energy":
        b = math.sqrt(max(w @ J @ w, 0.0) * max(p @ J @ p, 0.0))
    elif form == "norm":
        b = float(np.linalg.norm(w) * np.linalg.norm(J @ p))
    else:
        raise ValueError(f"unknown form {form!r}")
    return LinearRate(a, b)


def linear_inverse_vec(a, b, w) -> np.ndarray:
    """Vectorised :func:`linear_inverse`."""
    a, b, w = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (a, b, w)))
    shape = a.shape
    out = linear_inverse_arr(np.ascontiguousarray(a).reshape(-1), np.ascontiguousarray(b).reshape(-1),
                             np.ascontiguousarray(w).reshape(-1))
    return out.reshape(shape)


def linear_mass_vec(a, b, tau: float) -> np.ndarray:
    """Vectorised :func:`linear_mass` for a common duration tau."""
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    return linear_mass_arr(a.reshape(-1), b.reshape(-1), float(tau)).reshape(a.shape)


def reflect(p, g):
    """Reflection of p in the hyperplane orthogonal to g."""
    g = np.asarray(g, dtype=float)
    return p - 2.0 * (g @ p) / (g @ g) * g


def reflect_precond(p, g, sigma=None):
    """``p - 2 (g'p)/(g' S g) S g``; preserves ``p' S^-1 p`` and flips ``p . g``."""
    if sigma is None:
        return reflect(p, g)
    sg = sigma @ g
    return p - 2.0 * (g @ p) / (g @ sg) * sg
