import numpy as np
import pytest

from scalemc import diagnostics as dg
from scalemc import grad_estimators as ge
from scalemc import sgmcmc as sg
from scalemc.errors import ConfigError, DivergenceError, NumericalFault
from scalemc.models import CustomGaussian, FlatTarget, GaussianConjugate, synthetic_gaussian_data


def _conjugate(n=1000, d=2, seed=0):
    V = np.diag([1.0, 10.0])[:d, :d]
    return GaussianConjugate(synthetic_gaussian_data(n, V, rng=seed), V)


def test_ula_flat_target_is_gaussian_increment():
    t = FlatTarget(3)
    th = np.array([1.0, 2.0, 3.0])
    out = sg.ula_step(th, 0.25, t, np.random.default_rng(5))
    z = np.random.default_rng(5).standard_normal(3)
    np.testing.assert_array_equal(out, th + 0.5 * z)


def test_ula_rejects_bad_step_and_nonfinite_gradient():
    t = CustomGaussian([0.0], [[1.0]])
    with pytest.raises(ConfigError):
        sg.ula_step(np.zeros(1), 0.0, t, np.random.default_rng(0))

    class Bad(CustomGaussian):
        def grad_log_pdf(self, theta):
            return np.array([np.nan])

    with pytest.raises(NumericalFault):
        sg.ula_step(np.zeros(1), 0.1, Bad([0.0], [[1.0]]), np.random.default_rng(0))


def test_ula_stationary_variance_eight_sevenths():
    t = CustomGaussian([0.0], [[1.0]])
    x = sg.run_ula_linear(t, 0.5, [0.0], 1_000_000, seed=1).states[1000:, 0]
    y = x**2
    se = dg.mcse(y)
    assert sg.ula_stationary_variance(1.0, 0.5) == pytest.approx(8 / 7)
    assert abs(y.mean() - 8 / 7) < 3 * se


def test_ula_linear_matches_generic_runner():
    t = CustomGaussian([1.0, -1.0], [[1.0, 0.3], [0.3, 2.0]])
    a = sg.run_ula(t, 0.2, [0.0, 0.0], 500, seed=3).states
    b = sg.run_ula_linear(t, 0.2, [0.0, 0.0], 500, seed=3).states
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_ula_ar1_coefficient():
    t = CustomGaussian([0.0], [[1.0]])
    x = sg.run_ula_linear(t, 0.5, [0.0], 200_000, seed=2).states[:, 0]
    rho = np.corrcoef(x[:-1], x[1:])[0, 1]
    assert rho == pytest.approx(0.75, abs=0.01)


@pytest.mark.parametrize("delta", [4.5, 8.0])
def test_ula_diverges_beyond_threshold(delta):
    t = CustomGaussian([0.0], [[1.0]])
    assert sg.ula_stationary_variance(1.0, delta) == float("inf")
    with pytest.raises(DivergenceError):
        sg.run_ula(t, delta, [1.0], 100_000, seed=0)


def test_ula_boundary_step_has_growing_variance():
    t = CustomGaussian([0.0], [[1.0]])
    assert sg.ula_stationary_variance(1.0, 4.0) == float("inf")
    x = sg.run_ula(t, 4.0, [0.0], 20000, seed=0).states[:, 0]
    assert x[10000:].var() > 100 * x[:100].var()


def test_sgld_full_batch_equals_ula():
    t = _conjugate(50)
    cfg = sg.SgmcmcConfig(0.01, batch=50, estimator="simple")
    th = np.array([0.2, -0.1])
    a = sg.sgld_step(th, cfg, t, np.random.default_rng(7), np.random.default_rng(8))
    b = sg.ula_step(th, 0.01, t, np.random.default_rng(7))
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-15)
    ra = sg.run_sgld(t, cfg, th, 300, seed=4).states
    rb = sg.run_ula(t, 0.01, th, 300, seed=4).states
    np.testing.assert_allclose(ra, rb, rtol=1e-12, atol=1e-14)


def test_sgld_cv_on_conjugate_target_equals_ula():
    t = _conjugate(500)
    anchor = ge.build_anchor(t)
    cfg = sg.SgmcmcConfig(1e-3, batch=5, estimator="cv", anchor=anchor)
    a = sg.run_sgld(t, cfg, np.zeros(2), 2000, seed=9).states
    b = sg.run_ula(t, 1e-3, np.zeros(2), 2000, seed=9).states
    np.testing.assert_array_equal(a, b)


def test_sgld_overdispersed_relative_to_ula():
    t = _conjugate(1000, 1)
    delta = 1e-3
    th0 = t.mean
    ula = sg.run_ula(t, delta, th0, 40000, seed=10).states[2000:, 0]
    cfg = sg.SgmcmcConfig(delta, batch=10, estimator="simple")
    sgld = sg.run_sgld(t, cfg, th0, 40000, seed=10).states[2000:, 0]
    assert sgld.var() > 1.5 * ula.var()


def test_sgld_rejects_bad_batch():
    t = _conjugate(20)
    with pytest.raises(ConfigError) as e:
        sg.run_sgld(t, sg.SgmcmcConfig(0.1, batch=21, estimator="simple"), np.zeros(2), 5, seed=0)
    assert "batch" in e.value.fields


def test_auto_step():
    assert sg.auto_step(_conjugate(250)) == pytest.approx(1 / 250)
    with pytest.raises(ConfigError):
        sg.auto_step(FlatTarget(2))


def test_sghmc_no_friction_is_euler_step():
    t = CustomGaussian([0.0, 0.0], np.eye(2))
    cfg = sg.SgmcmcConfig(0.1, friction=0.0)
    th, p = np.array([1.0, 0.5]), np.array([0.2, -0.3])
    th2, p2 = sg.sghmc_step((th, p), cfg, t, np.random.default_rng(0))
    np.testing.assert_allclose(th2, th + 0.05 * p)
    np.testing.assert_allclose(p2, p - 0.05 * th)


def test_sghmc_long_run_variance():
    t = CustomGaussian([0.0], [[1.0]])
    cfg = sg.SgmcmcConfig(0.05, friction=1.0)
    x = sg.run_sghmc(t, cfg, [0.0], 400_000, seed=11).states[20000:, 0]
    assert x.var() == pytest.approx(1.0, rel=0.05)


def test_sghmc_noise_covariance():
    t = FlatTarget(2)
    C = np.array([[2.0, 0.5], [0.5, 1.0]])
    B = np.array([[1.0, 0.0], [0.0, 2.0]])
    delta = 0.2
    cfg = sg.SgmcmcConfig(delta, friction=C, noise_correction=B, mass=1e12)
    rng = np.random.default_rng(12)
    p = np.zeros(2)
    Z = np.array([sg.sghmc_step((np.zeros(2), p), cfg, t, rng)[1] for _ in range(100_000)]) / np.sqrt(delta)
    np.testing.assert_allclose(np.cov(Z.T), C - delta * B, rtol=0.02, atol=0.02 * 1.6)


def test_sghmc_indefinite_noise_rejected():
    t = CustomGaussian([0.0], [[1.0]])
    cfg = sg.SgmcmcConfig(1.0, friction=0.5, noise_correction=1.0)
    with pytest.raises(ConfigError) as e:
        sg.run_sghmc(t, cfg, [0.0], 10, seed=0)
    assert "noise_correction" in e.value.fields


def test_general_recovers_ula():
    t = CustomGaussian([1.0, 2.0], [[1.0, 0.2], [0.2, 0.5]])
    D, Q, G, gH = sg.sgld_as_general(t)
    th = np.array([0.3, 0.4])
    a = sg.general_sgmcmc_step(th, D, Q, G, gH, 0.1, np.random.default_rng(1))
    b = sg.ula_step(th, 0.1, t, np.random.default_rng(1))
    np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-15)


def test_general_recovers_sghmc():
    t = CustomGaussian([1.0, 2.0], [[1.0, 0.2], [0.2, 0.5]])
    C = np.array([[1.5, 0.3], [0.3, 0.8]])
    D, Q, G, gH = sg.sghmc_as_general(t, C)
    th, p = np.array([0.3, 0.4]), np.array([-0.2, 0.7])
    z = sg.general_sgmcmc_step(np.concatenate([th, p]), D, Q, G, gH, 0.05, np.random.default_rng(2))
    th2, p2 = sg.sghmc_step((th, p), sg.SgmcmcConfig(0.05, friction=C), t, np.random.default_rng(2))
    np.testing.assert_allclose(z, np.concatenate([th2, p2]), rtol=1e-12, atol=1e-12)


def test_general_constant_gamma_is_zero():
    t = CustomGaussian([0.0], [[1.0]])
    D, Q, G, gH = sg.sgld_as_general(t)
    a = sg.general_sgmcmc_step(np.ones(1), D, Q, None, gH, 0.1, np.random.default_rng(0))
    b = sg.general_sgmcmc_step(np.ones(1), D, Q, np.zeros(1), gH, 0.1, np.random.default_rng(0))
    np.testing.assert_array_equal(a, b)


def test_general_rejects_bad_matrices():
    gH = lambda z: z  # noqa: E731
    with pytest.raises(ConfigError):
        sg.general_sgmcmc_step(np.zeros(2), np.array([[1.0, 1.0], [0.0, 1.0]]), np.zeros((2, 2)), None, gH, 0.1,
                               np.random.default_rng(0))
    with pytest.raises(ConfigError):
        sg.general_sgmcmc_step(np.zeros(2), np.eye(2), np.array([[0.0, 1.0], [1.0, 0.0]]), None, gH, 0.1,
                               np.random.default_rng(0))
