import math
import warnings

import numpy as np
import pytest
from scipy import integrate
from sklearn.base import clone

from scalemc import stein
from scalemc import sgmcmc as sg
from scalemc.errors import ConfigError
from scalemc.models import CustomGaussian, Logistic, synthetic_logistic
from scalemc.postprocess import SteinThinning, SteinWeights

RAW = stein.SteinKernelConfig(standardize=False)


def _k(x, y, cfg=RAW):
    # N(0, 1): grad log pi(x) = -x
    return stein.stein_kernel([x], [y], [-x], [-y], cfg)


def test_kernel_at_mode():
    assert _k(0.0, 0.0) == pytest.approx(1.0)


def test_kernel_diagonal_formula(rng):
    for _ in range(20):
        d = int(rng.integers(1, 5))
        x, g = rng.normal(size=d), rng.normal(size=d)
        beta = rng.uniform(0.1, 0.9)
        A = rng.normal(size=(d, d))
        S = A @ A.T + np.eye(d)
        cfg = stein.SteinKernelConfig(scale=S, beta=beta, standardize=False)
        val = stein.stein_kernel(x, x, g, g, cfg)
        assert val == pytest.approx(2 * beta * np.trace(np.linalg.inv(S)) + g @ g, rel=1e-10)


def test_kernel_symmetry(rng):
    for family, tilt in (("imq", None), ("tilted-imq", (np.zeros(3), 2))):
        cfg = stein.SteinKernelConfig(family, beta=0.3, tilt=tilt, standardize=False)
        for _ in range(20):
            x, y, gx, gy = rng.normal(size=(4, 3))
            assert stein.stein_kernel(x, y, gx, gy, cfg) == pytest.approx(stein.stein_kernel(y, x, gy, gx, cfg),
                                                                         abs=1e-12)


@pytest.mark.parametrize("family", ["imq", "tilted-imq"])
@pytest.mark.parametrize("y", [-1.0, 0.0, 2.0])
def test_kernel_zero_mean_under_target(family, y):
    cfg = stein.SteinKernelConfig(family, tilt=(np.zeros(1), 2) if family != "imq" else None, standardize=False)
    f = lambda x: _k(x, y, cfg) * math.exp(-x * x / 2) / math.sqrt(2 * math.pi)  # noqa: E731
    val, _ = integrate.quad(f, -10, 10, epsabs=1e-12, epsrel=1e-12, limit=200)
    assert abs(val) < 1e-6


def test_tilted_kernel_at_anchor(rng):
    for _ in range(10):
        d = int(rng.integers(1, 4))
        x0, g = rng.normal(size=d), rng.normal(size=d)
        cfg = stein.SteinKernelConfig("tilted-imq", tilt=(x0, 1), standardize=False)
        val = stein.tilted_stein_kernel(x0, x0, g, g, cfg)
        assert val == pytest.approx(2 * 0.5 * d + g @ g + d + g @ g, rel=1e-10)
    with pytest.raises(ConfigError):
        stein.tilted_stein_kernel(x0, x0, g, g, RAW)


def test_tilted_kernel_detects_wrong_variance():
    cfg = stein.SteinKernelConfig("tilted-imq", tilt=(np.zeros(1), 2), standardize=False)
    good, bad = [], []
    for s in range(10):
        rng = np.random.default_rng(s)
        x = rng.normal(size=(2000, 1))
        y = math.sqrt(2) * rng.normal(size=(2000, 1))
        good.append(stein.ksd(x, -x, None, cfg))
        bad.append(stein.ksd(y, -y, None, cfg))
    assert np.median(bad) > np.median(good)


def test_ksd_single_point_and_duplicates():
    assert stein.ksd([[0.0]], [[0.0]], None, RAW) == pytest.approx(1.0)
    x = np.array([[0.3], [0.3]])
    assert stein.ksd(x, -x, [0.5, 0.5], RAW) == pytest.approx(stein.ksd(x[:1], -x[:1], [1.0], RAW), rel=1e-12)


def test_ksd_decays_with_n():
    med = []
    for n in (250, 1000, 4000):
        vals = []
        for s in range(10):
            x = np.random.default_rng(s).normal(size=(n, 1))
            vals.append(stein.ksd(x, -x))
        med.append(np.median(vals))
    assert med[2] < med[1] < med[0]


def test_ksd_matches_matrix_form(rng):
    x = rng.normal(size=(50, 2))
    w = rng.dirichlet(np.ones(50))
    K = stein.stein_matrix(x, -x)
    assert stein.ksd(x, -x, w) == pytest.approx(math.sqrt(w @ K @ w), rel=1e-10)


def test_stein_matrix_psd(rng):
    x = rng.normal(size=(80, 3))
    for cfg in (stein.SteinKernelConfig(), stein.SteinKernelConfig("tilted-imq", tilt=(np.zeros(3), 2))):
        ev = np.linalg.eigvalsh(stein.stein_matrix(x, -x + 0.1, cfg))
        assert ev.min() >= -1e-8 * ev.max()


def _logistic():
    X, y, _ = synthetic_logistic(100, 2, rng=0)
    return Logistic(X, y)


def test_stochastic_ksd():
    m = _logistic()
    theta = sg.run_sgld(m, sg.SgmcmcConfig(1e-2, batch=10, estimator="simple"), np.zeros(2), 2000,
                        seed=1).states[200:]
    full = stein.ksd(theta, np.array([m.grad_log_pdf(x) for x in theta]))
    assert stein.stochastic_ksd(theta, m, m.n_data, rng=0) == full
    sub = np.median([stein.stochastic_ksd(theta, m, 10, rng=s) for s in range(5)])
    assert abs(sub - full) < 0.2 * full
    one = stein.stochastic_ksd(theta, m, 1, rng=0)
    assert math.isfinite(one) and one > 0


def test_standardize():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(500, 2))
    x = (x - x.mean(0)) / np.mean(np.abs(x - x.mean(0)), axis=0)
    xs, gs, mad = stein.standardize(x, -x)
    np.testing.assert_allclose(mad, 1.0)
    np.testing.assert_allclose(xs, x)
    c = 3.7
    _, _, mad_c = stein.standardize(c * x, -x / c)
    np.testing.assert_allclose(mad_c, c * mad)
    assert stein.ksd(c * x, -x / c) == pytest.approx(stein.ksd(x, -x), abs=1e-10)
    x[:, 1] = 2.0
    with pytest.warns(RuntimeWarning):
        _, _, mad = stein.standardize(x, -x)
    assert mad[1] == 1.0


def test_bias_diagnostic():
    assert stein.bias_diagnostic([[-1.0], [1.0]]) == 0.0
    assert stein.bias_diagnostic([[-2.0]]) == 2.0
    ns = np.array([100, 1000, 10_000, 100_000])
    vals = []
    for n in ns:
        vals.append(np.median([stein.bias_diagnostic(-np.random.default_rng(s).normal(size=(n, 1)))
                               for s in range(20)]))
    slope = np.polyfit(np.log(ns), np.log(vals), 1)[0]
    assert abs(slope + 0.5) < 0.15


def _obj(K, w):
    return w @ K @ w


def _zoom_min(K, signed):
    # brute-force minimum over 3-point weights summing to 1 by a refining grid
    centre = np.array([1 / 3, 1 / 3])
    half = 3.0 if signed else 0.5
    best = None
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


def test_signed_weights():
    np.testing.assert_allclose(stein.optimal_weights_signed(np.array([[1.0, 0.3], [0.3, 1.0]])), [0.5, 0.5])
    np.testing.assert_allclose(stein.optimal_weights_signed(np.diag([1.0, 4.0])), [0.8, 0.2])
    rng = np.random.default_rng(1)
    for _ in range(10):
        A = rng.normal(size=(3, 3))
        K = A @ A.T + 0.1 * np.eye(3)
        w = stein.optimal_weights_signed(K)
        assert w.sum() == pytest.approx(1.0)
        assert _obj(K, w) <= _zoom_min(K, True) + 1e-6


def test_signed_weights_jitter_on_singular():
    K = np.ones((3, 3))
    w = stein.optimal_weights_signed(K)
    assert w.sum() == pytest.approx(1.0) and np.all(np.isfinite(w))


def test_simplex_weights():
    r = stein.optimal_weights_simplex(np.diag([1.0, 4.0]))
    np.testing.assert_allclose(r.weights, [0.8, 0.2], atol=1e-8)
    r = stein.optimal_weights_simplex(np.diag([1.0, 1e8]))
    assert r.weights[1] < 1e-6
    rng = np.random.default_rng(2)
    for _ in range(20):
        n = int(rng.integers(3, 12))
        A = rng.normal(size=(n, n + 2))
        K = A @ A.T
        w = stein.optimal_weights_simplex(K).weights
        assert np.all(w >= 0) and w.sum() == pytest.approx(1.0)
        u = np.full(n, 1 / n)
        assert _obj(K, w) <= _obj(K, u) + 1e-12
        if n == 3:
            assert _obj(K, w) <= _zoom_min(K, False) + 1e-6


def test_project_simplex(rng):
    for _ in range(20):
        v = rng.normal(size=6) * 3
        p = stein.project_simplex(v)
        assert np.all(p >= 0) and p.sum() == pytest.approx(1.0)


def test_greedy_thin():
    x = np.array([[1.5], [-0.2], [0.7], [0.1], [-3.0]])
    assert stein.greedy_thin(x, -x, 1, RAW).tolist() == [3]
    np.testing.assert_array_equal(stein.greedy_thin([[0.5]], [[-0.5]], 4), [0, 0, 0, 0])
    with pytest.raises(ConfigError):
        stein.greedy_thin(x, -x, 0)


def test_greedy_thin_improves_on_uniform():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(1000, 2))
    idx = stein.greedy_thin(x, -x, 100)
    w = stein.thinned_weights(idx, 1000)
    assert w.sum() == pytest.approx(1.0)
    assert stein.ksd(x, -x, w) <= stein.ksd(x, -x)


def test_kernel_best_approx():
    assert stein.kernel_best_approx([2.0], [[1.0]]) == pytest.approx(2.0)
    assert stein.kernel_best_approx([0.0, 0.0], np.eye(2)) == 0.0
    vals = []
    for k in (0, 1, 2, 3):
        nodes = np.arange(-k, k + 1, dtype=float)
        K = np.exp(-0.5 * (nodes[:, None] - nodes[None, :]) ** 2)
        vals.append(stein.kernel_best_approx(1 / (1 + nodes**2), K))
    assert np.all(np.diff(vals) > 0)


def test_config_validation():
    with pytest.raises(ConfigError) as e:
        stein.SteinKernelConfig("rbf", beta=1.5)
    assert set(e.value.fields) == {"family", "beta"}
    with pytest.raises(ConfigError):
        stein.SteinKernelConfig("tilted-imq")
    with pytest.raises(ConfigError):
        stein.ksd(np.zeros((3, 2)), np.zeros((3, 1)))


def test_sklearn_wrappers():
    t = CustomGaussian(np.zeros(2), np.eye(2))
    x = np.random.default_rng(4).normal(size=(300, 2))
    th = SteinThinning(m=30, target=t).fit(x)
    assert th.transform(x).shape == (30, 2)
    assert -th.score(x) == pytest.approx(th.ksd_)
    naive = stein.thinned_weights(np.arange(0, 300, 10), 300)
    assert th.ksd_ <= stein.ksd(x, -x, naive)
    th2 = SteinThinning(m=30).fit(x, grads=-x)
    np.testing.assert_array_equal(th.selected_, th2.selected_)
    assert clone(th).get_params()["m"] == 30
    sw = SteinWeights(mode="simplex", target=t).fit(x[:100])
    assert sw.full_weights_.sum() == pytest.approx(1.0)
    assert sw.transform(x[:100]).shape[0] == sw.weights_.shape[0]
    sws = SteinWeights(mode="signed", target=t).fit(x[:100])
    assert sws.ksd_ <= sw.ksd_ + 1e-10
    with pytest.raises(ConfigError):
        SteinThinning(m=3).fit(x)
    with pytest.raises(ConfigError):
        SteinWeights(mode="other", target=t).fit(x)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        SteinThinning(m=3, target=t).fit_transform(x[:20])
