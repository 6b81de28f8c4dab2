"""Acceptance suite: one check per criterion, each with its tolerance and a
runtime limit. Prints a PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` or ``python3 tests/test_acceptance.py``.
"""
import math
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

sys.path.insert(0, str(Path(__file__).parent))
from conftest import central_diff  # noqa: E402

from scalemc import classic_mcmc as cm  # noqa: E402
from scalemc import diagnostics as dg  # noqa: E402
from scalemc import grad_estimators as ge  # noqa: E402
from scalemc import pdmp, stein  # noqa: E402
from scalemc import sgmcmc as sg  # noqa: E402
from scalemc.errors import InvalidBoundError  # noqa: E402
from scalemc.models import (  # noqa: E402
    CustomGaussian,
    GaussianConjugate,
    Logistic,
    MatrixFactorisation,
    Mixture1D,
    Rosenbrock,
    load_model,
    synthetic_gaussian_data,
    synthetic_logistic,
)

SEEDS = range(10)


def _within(x, target, se, k=3.0):
    return abs(x - target) < k * se


# ---------------------------------------------------------------- classic MCMC


def c01_rwm_scaling():
    d = 50
    t = CustomGaussian(np.zeros(d), np.eye(d))
    out = cm.run_mh(t, cm.RWM(2.38 / math.sqrt(d)), np.zeros(d), 100_000, seed=1)
    rate = out.acceptance_rate
    return 0.20 <= rate <= 0.27, f"acceptance {rate:.4f} (want [0.20, 0.27])"


def c02_mala_scaling():
    ells = {}
    rates = {}
    for d in (50, 200):
        t = CustomGaussian(np.zeros(d), np.eye(d))
        x0 = np.random.default_rng(d).standard_normal(d)

        def rate(ell, n=3000):
            return cm.run_mh(t, cm.MALA(ell * d ** (-1 / 6)), x0, n, seed=7).acceptance_rate

        ell = cm.tune_scale(rate, 0.574, 0.2, 5.0, n_steps=30, tol=0.01)
        ells[d] = ell
        rates[d] = cm.run_mh(t, cm.MALA(ell * d ** (-1 / 6)), x0, 20_000, seed=8).acceptance_rate
    ok = all(abs(r - 0.574) <= 0.03 for r in rates.values()) and abs(ells[200] / ells[50] - 1) <= 0.2
    return ok, (f"l(50)={ells[50]:.3f} acc {rates[50]:.3f}; l(200)={ells[200]:.3f} acc {rates[200]:.3f}; "
                f"ratio {ells[200] / ells[50]:.3f}")


def c03_hmc_correlation():
    sigma, T = 2.0, 1.0
    t = CustomGaussian(np.zeros(1), np.eye(1) * sigma**2)
    x = cm.run_hmc(t, np.zeros(1), 100_000, 0.1, 1, seed=3, flow=cm.gaussian_exact_flow(sigma, T)).states[:, 0]
    c = np.corrcoef(x[:-1], x[1:])[0, 1]
    return abs(c - math.cos(T / sigma)) <= 0.02, f"corr {c:.4f} vs cos(T/sigma) {math.cos(T / sigma):.4f}"


# ---------------------------------------------------------------- SG-MCMC


def c04_ula_variance():
    t = CustomGaussian([0.0], [[1.0]])
    x = sg.run_ula_linear(t, 0.5, [0.0], 1_000_000, seed=1).states[1000:, 0]
    y = x**2
    se = dg.mcse(y)
    return _within(y.mean(), 8 / 7, se), f"E[x^2] {y.mean():.4f} vs 8/7 = {8 / 7:.4f}, s.e. {se:.4f}"


def c05_sgld_cv_identity():
    V = np.diag([1.0, 10.0])
    t = GaussianConjugate(synthetic_gaussian_data(1000, V, rng=0), V)
    anchor = ge.build_anchor(t)
    cfg = sg.SgmcmcConfig(1e-3, batch=10, estimator="cv", anchor=anchor)
    a = sg.run_sgld(t, cfg, np.zeros(2), 2000, seed=5).states
    b = sg.run_ula(t, 1e-3, np.zeros(2), 2000, seed=5).states
    return bool(np.array_equal(a, b)), f"max |diff| {np.abs(a - b).max():.1e} over 2000 steps"


def c06_variance_ordering():
    X, y, _ = synthetic_logistic(200, 2, rng=0)
    m = Logistic(X, y)
    anchor = ge.build_anchor(m)
    th_hat = anchor.theta_hat
    w, V = np.linalg.eigh(np.linalg.inv(m.neg_log_hessian(th_hat)))
    far = th_hat + 5 * math.sqrt(w[-1]) * V[:, -1]
    rng = np.random.default_rng(6)
    batch = 20
    out = {}
    for name, th in (("mode", th_hat), ("far", far)):
        truth = m.grad_log_pdf(th)
        vs = ge.pseudo_variance(lambda r: ge.simple_grad(m, th, batch, r), truth, 2000, rng)
        vc = ge.pseudo_variance(lambda r: ge.cv_grad(m, th, anchor, batch, r), truth, 2000, rng)
        out[name] = (vs, vc)
    ok = out["mode"][1] < out["mode"][0] and out["far"][1] > out["far"][0]
    return ok, (f"at mode: cv {out['mode'][1]:.3g} < simple {out['mode'][0]:.3g}; "
                f"at 5 s.d.: cv {out['far'][1]:.3g} > simple {out['far'][0]:.3g}")


# ---------------------------------------------------------------- PDMP


def c07_bps_energy_drop():
    t = CustomGaussian(np.zeros(10), np.eye(10))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sk = pdmp.bps_run(t, 3000.0, np.zeros(10), refresh=0.0, rng=np.random.default_rng(10))
    drops = sk.stats["energy_drops"]
    if drops.size < 2000:
        return False, f"only {drops.size} bounces"
    p = stats.kstest(drops[:2000], "expon").pvalue
    return p > 0.01, f"KS p = {p:.3f} over 2000 segments"


def c08_pdmp_invariance():
    t = CustomGaussian(np.zeros(2), np.eye(2))
    T = 10_000.0
    runs = {
        "zigzag": pdmp.zigzag_run(t, T, np.zeros(2), rng=np.random.default_rng(1)),
        "bps": pdmp.bps_run(t, T, np.zeros(2), refresh=1.0, rng=np.random.default_rng(2)),
        "coord": pdmp.coordinate_run(t, T, np.zeros(2), refresh=1.0, rng=np.random.default_rng(3)),
        "boomerang": pdmp.boomerang_run(t, T, np.zeros(2), refresh=1.0, rng=np.random.default_rng(4),
                                        centre=np.zeros(2), cov=2 * np.eye(2)),
    }
    ok = True
    parts = []
    for name, sk in runs.items():
        x = sk.grid(20_000, 10.0)
        worst = 0.0
        for i in range(2):
            z_mean = abs(x[:, i].mean()) / dg.mcse(x[:, i])
            sq = x[:, i] ** 2
            z_var = abs(sq.mean() - 1.0) / dg.mcse(sq)
            worst = max(worst, z_mean, z_var)
        ok &= worst < 3
        parts.append(f"{name} max|z| {worst:.2f}")
    return ok, "; ".join(parts)


def c09_thinning_soundness():
    total = {"hessian-bound": 0, "cc": 0, "subsample": 0}
    X, y, _ = synthetic_logistic(100, 2, rng=0)
    logit = Logistic(X, y, flat_prior=True)
    bmf = MatrixFactorisation(np.random.default_rng(0).normal(size=(3, 3)), 1)
    gauss = CustomGaussian(np.zeros(2), [[1.0, 0.5], [0.5, 2.0]])
    jobs = [
        ("hessian-bound", lambda r: pdmp.zigzag_run(logit, 2000.0, np.zeros(2), mode="hessian-bound", rng=r), 350_000),
        ("hessian-bound", lambda r: pdmp.bps_run(logit, 500.0, np.zeros(2), mode="hessian-bound", rng=r), 50_000),
        ("subsample", lambda r: pdmp.zigzag_run(logit, 200.0, np.zeros(2), mode="subsample", rng=r), 300_000),
        ("subsample", lambda r: pdmp.zigzag_run(logit, 200.0, np.zeros(2), mode="subsample-cv", rng=r), 250_000),
        ("cc", lambda r: pdmp.zigzag_run(bmf, 200.0, np.full(bmf.dim, 0.5), mode="cc", rng=r), 30_000),
        ("cc", lambda r: pdmp.zigzag_run(gauss, 2000.0, np.zeros(2), mode="cc", rng=r), 70_000),
    ]
    failures = 0
    seed = 0
    for kind, run, want in jobs:
        got = 0
        while got < want:
            try:
                sk = run(np.random.default_rng(seed))
                got += sk.stats["proposals"]
            except InvalidBoundError:
                failures += 1
                got += 1
            seed += 1
        total[kind] += got
    n = sum(total.values())
    ok = failures == 0 and n >= 1_000_000
    return ok, f"{n} proposals ({total}), {failures} invalid-bound failures"


def c10_subsampled_zigzag():
    X, y, _ = synthetic_logistic(100, 2, rng=0)
    m = Logistic(X, y, flat_prior=True)
    dense = pdmp.zigzag_run(m, 10_000.0, np.zeros(2), mode="hessian-bound", rng=np.random.default_rng(1))
    xd = dense.grid(20_000, 10.0)
    ok = True
    parts = []
    for k, mode in enumerate(("subsample", "subsample-cv")):
        sk = pdmp.zigzag_run(m, 800.0, np.zeros(2), mode=mode, rng=np.random.default_rng(2 + k))
        xs = sk.grid(20_000, 10.0)
        for i in range(2):
            se = math.hypot(dg.mcse(xd[:, i]), dg.mcse(xs[:, i]))
            z = abs(xd[:, i].mean() - xs[:, i].mean()) / se
            ok &= z < 3
            parts.append(f"{mode}[{i}] z={z:.2f}")
    return ok, "; ".join(parts)


# ---------------------------------------------------------------- Stein


def c11_ksd_discrimination():
    target = Mixture1D()
    cfg = stein.SteinKernelConfig(standardize=False)
    small, big = [], []
    for s in SEEDS:
        rng = np.random.default_rng(s)
        u = cm.run_mh(target, cm.RWM(3.0), np.zeros(1), 21_000, rng=rng).states[1000:]
        b = cm.run_mh(CustomGaussian([2.0], [[0.25]]), cm.RWM(1.0), np.full(1, 2.0), 20_000, rng=rng).states
        gu, gb = target.grad_log_pdf_batch(u), target.grad_log_pdf_batch(b)
        small.append(stein.ksd(u[:200], gu[:200], None, cfg) / stein.ksd(b[:200], gb[:200], None, cfg))
        big.append((stein.ksd(u, gu, None, cfg), stein.ksd(b, gb, None, cfg)))
    ratio200 = float(np.median(small))
    ku, kb = np.median([x[0] for x in big]), np.median([x[1] for x in big])
    ok = 0.5 <= ratio200 <= 2 and ku < 0.5 * kb
    return ok, (f"n=200 ratio {ratio200:.2f} (want [0.5, 2]); n=20000 unbiased {ku:.4f} vs "
                f"half biased plateau {0.5 * kb:.4f}")


def _zoom_min(K, signed):
    centre = np.array([1 / 3, 1 / 3])
    half = 3.0 if signed else 0.5
    best = np.inf
    for _ in range(30):
        g = np.linspace(-half, half, 41)
        w1, w2 = np.meshgrid(centre[0] + g, centre[1] + g)
        W = np.stack([w1.ravel(), w2.ravel(), 1 - w1.ravel() - w2.ravel()], 1)
        if not signed:
            W = W[np.all(W >= 0, axis=1)]
        vals = np.einsum("ij,jk,ik->i", W, K, W)
        k = int(np.argmin(vals))
        best = vals[k]
        centre = W[k, :2]
        half *= 0.5
    return best


def c12_optimal_weights():
    rng = np.random.default_rng(12)
    gaps = []
    for _ in range(10):
        A = rng.normal(size=(3, 3))
        K = A @ A.T + 0.05 * np.eye(3)
        w = stein.optimal_weights_signed(K)
        gaps.append(w @ K @ w - _zoom_min(K, True))
    worse = 0
    for _ in range(20):
        n = int(rng.integers(3, 30))
        A = rng.normal(size=(n, int(rng.integers(1, n + 3))))
        K = A @ A.T
        w = stein.optimal_weights_simplex(K).weights
        u = np.full(n, 1 / n)
        worse += w @ K @ w > u @ K @ u + 1e-12
    ok = max(gaps) <= 1e-6 and worse == 0
    return ok, f"max signed gap {max(gaps):.1e}; simplex worse than uniform in {worse}/20"


def c13_greedy_thinning():
    target = Rosenbrock()
    uni, m10, m100 = [], [], []
    for s in SEEDS:
        x = cm.run_mh(target, cm.RWM(0.5), np.zeros(2), 1000, seed=s).states
        g = target.grad_log_pdf_batch(x)
        uni.append(stein.ksd(x, g))
        for m, store in ((10, m10), (100, m100)):
            idx = stein.greedy_thin(x, g, m)
            store.append(stein.ksd(x, g, stein.thinned_weights(idx, len(x))))
    u, a, b = np.median(uni), np.median(m10), np.median(m100)
    return b <= u and b < a, f"median KSD uniform {u:.4f}, m=10 {a:.4f}, m=100 {b:.4f}"


# ---------------------------------------------------------------- scaling and estimators


def c14_ring_collapse():
    reps = 50
    parts = []
    ok = True
    for name, law, scale, xs in (
        ("symmetric vs n/S^2", cm.RingLaw.symmetric(1), lambda S: S * S, np.geomspace(0.5, 40, 12)),
        ("biased vs n/S", cm.RingLaw.biased(), lambda S: S, np.geomspace(2, 400, 12)),
    ):
        curves = []
        for S in (100, 200, 400):
            cps = np.maximum((xs * scale(S)).astype(np.int64), 1)
            curves.append(np.mean([cm.ring_tvd_curve(S, cps, law, np.random.default_rng(1000 * S + r))
                                   for r in range(reps)], axis=0))
        gap = float(np.max(np.ptp(np.array(curves), axis=0)))
        ok &= gap < 0.1
        parts.append(f"{name} max gap {gap:.3f}")
    return ok, "; ".join(parts)


def c15_control_variate():
    factors = []
    for s in SEEDS:
        x = np.random.default_rng(s).normal(size=100_000)
        h = np.sin(x)
        _, adj = dg.cv_estimate(h, x, gamma=[1.0])
        factors.append(h.var() / adj.var())
    lo, hi = min(factors), max(factors)
    return 1.5 <= lo and hi <= 2.5, f"reduction factor in [{lo:.3f}, {hi:.3f}] over 10 seeds"


def c16_importance_variance():
    exact = dg.gaussian_weight_variance(1.5)
    vals = []
    for s in SEEDS:
        x = np.random.default_rng(s).normal(size=1_000_000)
        _, w = dg.importance_estimate(x, lambda t: -t**2 / 3 + t**2 / 2, lambda t: t)
        vals.append(np.var(w * x.shape[0]))
    med = float(np.median(vals))
    return abs(med / exact - 1) <= 0.05, f"median MC var(w) {med:.4f} vs {exact:.4f} ({abs(med / exact - 1):.1%})"


def c17_gradient_audit():
    rng = np.random.default_rng(17)
    names = ("gaussian", "gaussian-conjugate", "logistic", "bmf", "mixture", "rosenbrock")
    worst = {}
    for name in names:
        m = load_model(name, {"dim": "3"} if name in ("gaussian", "logistic") else {}, rng=0)
        err = 0.0
        for _ in range(50):
            th = rng.normal(size=m.dim)
            fd = central_diff(m.log_pdf, th)
            g = m.grad_log_pdf(th)
            err = max(err, np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-8))
        worst[name] = err
    ok = max(worst.values()) < 1e-5
    return ok, "max rel err " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())


CRITERIA = [
    (1, "RWM scaling constant", c01_rwm_scaling, 5),
    (2, "MALA optimal acceptance", c02_mala_scaling, 30),
    (3, "HMC Gaussian correlation", c03_hmc_correlation, 5),
    (4, "ULA stationary variance", c04_ula_variance, 10),
    (5, "SGLD-CV identity", c05_sgld_cv_identity, 1),
    (6, "gradient-estimator variance ordering", c06_variance_ordering, 30),
    (7, "BPS energy-drop law", c07_bps_energy_drop, 30),
    (8, "PDMP invariance suite", c08_pdmp_invariance, 120),
    (9, "thinning-bound soundness", c09_thinning_soundness, 120),
    (10, "subsampled Zig-Zag consistency", c10_subsampled_zigzag, 60),
    (11, "KSD discrimination", c11_ksd_discrimination, 120),
    (12, "optimal weights", c12_optimal_weights, 10),
    (13, "greedy thinning", c13_greedy_thinning, 60),
    (14, "ring-walk scaling collapse", c14_ring_collapse, 60),
    (15, "control-variate factor", c15_control_variate, 5),
    (16, "importance-weight variance", c16_importance_variance, 5),
    (17, "numerical gradient audit", c17_gradient_audit, 5),
]


def _evaluate(number, name, fn, limit):
    t0 = time.perf_counter()
    ok, detail = fn()
    elapsed = time.perf_counter() - t0
    in_time = elapsed < limit
    status = "PASS" if ok and in_time else "FAIL"
    timing = f"{elapsed:.1f}s < {limit}s" if in_time else f"{elapsed:.1f}s exceeds {limit}s"
    print(f"{status} criterion {number:2d} ({name}): {detail} [{timing}]", flush=True)
    return ok, in_time, detail, elapsed


@pytest.mark.parametrize("number,name,fn,limit", CRITERIA, ids=[f"c{c[0]:02d}" for c in CRITERIA])
def test_criterion(number, name, fn, limit):
    ok, in_time, detail, elapsed = _evaluate(number, name, fn, limit)
    assert ok, detail
    assert in_time, f"runtime {elapsed:.1f}s exceeds {limit}s"


if __name__ == "__main__":
    results = [_evaluate(*c) for c in CRITERIA]
    n_pass = sum(ok and t for ok, t, _, _ in results)
    print(f"{n_pass}/{len(results)} criteria passed")
    sys.exit(0 if n_pass == len(results) else 1)
