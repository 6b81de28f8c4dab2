"""PDMP skeletons: event records, interpolation, path integrals, JSONL I/O."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError

TAGS = ("init", "bounce", "refresh", "final")


def flip_tag(i: int) -> str:
    return f"flip({i})"


@dataclass
class Skeleton:
    """Ordered events ``(t, theta, p, tag)`` storing the post-event state.

    ``flow`` is ``"linear"`` (theta moves at constant velocity) or
    ``"boomerang"`` (elliptical flow about ``centre``).
    """

    times: np.ndarray
    thetas: np.ndarray
    ps: np.ndarray
    tags: list
    horizon: float
    flow: str = "linear"
    centre: np.ndarray | None = None
    stats: dict = field(default_factory=dict)

    @property
    def n_events(self) -> int:
        return len(self.tags)

    @property
    def dim(self) -> int:
        return self.thetas.shape[1]

    def validate(self) -> None:
        t = self.times
        if self.tags[0] != "init" or t[0] != 0.0:
            raise ValueError("skeleton must start with init at t=0")
        if self.tags[-1] != "final" or t[-1] != self.horizon:
            raise ValueError("skeleton must end with final at the horizon")
        if np.any(np.diff(t) <= 0):
            raise ValueError("event times must be strictly increasing")

    def _move(self, theta, p, s):
        if self.flow == "linear":
            return theta + s * p, p
        u = theta - self.centre
        c, sn = np.cos(s), np.sin(s)
        return self.centre + u * c + p * sn, p * c - u * sn

    def interpolate(self, t: float):
        """State at time t; at an event time the stored post-event state."""
        if not 0.0 <= t <= self.horizon:
            raise ConfigError(f"t={t} outside [0, {self.horizon}]", ["t"])
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return self._move(self.thetas[k], self.ps[k], t - self.times[k])

    def grid_times(self, n_grid: int, burn_in: float = 0.0) -> np.ndarray:
        """``S + j (T - S)/N`` for j = 1..N."""
        if n_grid < 1 or not 0 <= burn_in < self.horizon:
            raise ConfigError("need n_grid >= 1 and 0 <= burn_in < horizon", ["grid", "burn_in"])
        step = (self.horizon - burn_in) / n_grid
        g = burn_in + step * np.arange(1, n_grid + 1)
        g[-1] = self.horizon
        return g

    def grid(self, n_grid: int, burn_in: float = 0.0) -> np.ndarray:
        """Positions at the grid times, shape (n_grid, d)."""
        ts = self.grid_times(n_grid, burn_in)
        k = np.searchsorted(self.times, ts, side="right") - 1
        s = (ts - self.times[k])[:, None]
        th, p = self.thetas[k], self.ps[k]
        if self.flow == "linear":
            return th + s * p
        u = th - self.centre
        return self.centre + u * np.cos(s) + p * np.sin(s)

    def grid_velocities(self, n_grid: int, burn_in: float = 0.0) -> np.ndarray:
        ts = self.grid_times(n_grid, burn_in)
        k = np.searchsorted(self.times, ts, side="right") - 1
        if self.flow == "linear":
            return self.ps[k]
        s = (ts - self.times[k])[:, None]
        u = self.thetas[k] - self.centre
        return self.ps[k] * np.cos(s) - u * np.sin(s)

    # ------------------------------------------------------------ I/O

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            if self.flow != "linear":
                fh.write(json.dumps({"flow": self.flow, "centre": self.centre.tolist()}) + "\n")
            for t, th, p, tag in zip(self.times, self.thetas, self.ps, self.tags):
                fh.write(json.dumps({"t": float(t), "theta": th.tolist(), "p": p.tolist(), "tag": tag}) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "Skeleton":
        flow, centre = "linear", None
        times, thetas, ps, tags = [], [], [], []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                if "flow" in rec:
                    flow, centre = rec["flow"], np.asarray(rec["centre"], dtype=float)
                    continue
                times.append(rec["t"])
                thetas.append(rec["theta"])
                ps.append(rec["p"])
                tags.append(rec["tag"])
        if not tags:
            raise ConfigError(f"{path}: empty skeleton", ["skeleton"])
        sk = cls(np.asarray(times, float), np.asarray(thetas, float), np.asarray(ps, float), tags,
                 float(times[-1]), flow, centre)
        sk.validate()
        return sk


class SkeletonBuilder:
    """Accumulates events during a run."""

    def __init__(self, theta0, p0, flow: str = "linear", centre=None):
        self.times = [0.0]
        self.thetas = [np.array(theta0, dtype=float)]
        self.ps = [np.array(p0, dtype=float)]
        self.tags = ["init"]
        self.flow = flow
        self.centre = None if centre is None else np.asarray(centre, dtype=float)

    def add(self, t, theta, p, tag):
        if t <= self.times[-1]:
            # coincident times have probability zero; nudge to keep strict order
            t = math.nextafter(self.times[-1], math.inf)
        self.times.append(float(t))
        self.thetas.append(np.array(theta, dtype=float))
        self.ps.append(np.array(p, dtype=float))
        self.tags.append(tag)

    def finish(self, horizon, theta, p, stats=None) -> Skeleton:
        if horizon > self.times[-1]:
            self.add(horizon, theta, p, "final")
        else:
            self.tags[-1] = "final"
        return Skeleton(np.array(self.times), np.array(self.thetas), np.array(self.ps), list(self.tags),
                        float(horizon), self.flow, self.centre, dict(stats or {}))


# ---------------------------------------------------------------- estimators


@dataclass(frozen=True)
class Quadratic:
    """``h(theta) = c + b' theta + theta' A theta``; integrable along PDMP flows."""

    c: float = 0.0
    b: np.ndarray | None = None
    A: np.ndarray | None = None

    @staticmethod
    def coordinate(i: int, d: int, power: int = 1) -> "Quadratic":
        if power == 0:
            return Quadratic(1.0)
        if power == 1:
            b = np.zeros(d)
            b[i] = 1.0
            return Quadratic(0.0, b)
        if power == 2:
            A = np.zeros((d, d))
            A[i, i] = 1.0
            return Quadratic(0.0, None, A)
        raise ConfigError("path-integral mode handles powers up to 2; use grid mode", ["h"])

    def __call__(self, theta):
        x = np.atleast_2d(theta)
        out = np.full(x.shape[0], float(self.c))
        if self.b is not None:
            out = out + x @ self.b
        if self.A is not None:
            out = out + np.einsum("ij,jk,ik->i", x, self.A, x)
        return out if np.ndim(theta) > 1 else out[0]

    def _parts(self, d):
        b = np.zeros(d) if self.b is None else np.asarray(self.b, dtype=float)
        A = np.zeros((d, d)) if self.A is None else np.asarray(self.A, dtype=float)
        return b, 0.5 * (A + A.T)

    def integral_linear(self, theta, p, tau) -> float:
        b, A = self._parts(len(theta))
        return (
            self.c * tau
            + b @ theta * tau
            + b @ p * tau**2 / 2
            + theta @ A @ theta * tau
            + 2 * (theta @ A @ p) * tau**2 / 2
            + p @ A @ p * tau**3 / 3
        )

    def integral_boomerang(self, theta, p, tau, centre) -> float:
        # theta(s) = centre + u cos s + p sin s
        b, A = self._parts(len(theta))
        u = theta - centre
        ic, is_ = math.sin(tau), 1.0 - math.cos(tau)
        icc = tau / 2 + math.sin(2 * tau) / 4
        iss = tau / 2 - math.sin(2 * tau) / 4
        isc = math.sin(tau) ** 2 / 2
        lin = b @ centre * tau + b @ u * ic + b @ p * is_
        quad = (
            centre @ A @ centre * tau
            + 2 * (centre @ A @ u) * ic
            + 2 * (centre @ A @ p) * is_
            + u @ A @ u * icc
            + p @ A @ p * iss
            + 2 * (u @ A @ p) * isc
        )
        return self.c * tau + lin + quad


def skeleton_estimate(skel: Skeleton, h, burn_in: float = 0.0, mode: str = "path-integral",
                      n_grid: int = 1000) -> float:
    """Estimate E_pi[h] from a skeleton.

    ``path-integral``: exact time average of h over [S, T]; h must be a
    :class:`Quadratic`. ``grid``: mean of h over ``n_grid`` evenly spaced
    points in (S, T].
    """
    T = skel.horizon
    if not 0 <= burn_in < T:
        raise ConfigError("burn-in must satisfy 0 <= S < T", ["burn_in"])
    if mode == "grid":
        pts = skel.grid(n_grid, burn_in)
        vals = h(pts) if isinstance(h, Quadratic) else np.array([h(x) for x in pts], dtype=float)
        return float(np.mean(vals))
    if mode != "path-integral":
        raise ConfigError(f"unknown mode {mode!r}", ["mode"])
    if not isinstance(h, Quadratic):
        raise ConfigError(
            "path-integral mode needs a Quadratic (polynomial of degree <= 2); use mode='grid' for general h",
            ["h"],
        )
    total = 0.0
    times = skel.times
    for k in range(len(times) - 1):
        a, b = times[k], times[k + 1]
        if b <= burn_in:
            continue
        theta, p = skel.thetas[k], skel.ps[k]
        if a < burn_in:
            theta, p = skel._move(theta, p, burn_in - a)
            a = burn_in
        tau = b - a
        if skel.flow == "linear":
            total += h.integral_linear(theta, p, tau)
        else:
            total += h.integral_boomerang(theta, p, tau, skel.centre)
    return float(total / (T - burn_in))
