import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from scalemc import diagnostics as dg
from scalemc import pdmp, stein
from scalemc.config import ExperimentConfig
from scalemc.pdmp.events import linear_mass

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
vec3 = arrays(np.float64, 3, elements=st.floats(-10, 10))


# slopes below 1e-6 push event times past double resolution
slopes = st.one_of(st.just(0.0), st.floats(1e-6, 50), st.floats(-50, -1e-6))


@given(finite, slopes, st.floats(1e-6, 50))
def test_linear_inverse_is_inverse_of_mass(a, b, w):
    tau = pdmp.linear_inverse(a, b, w)
    if math.isinf(tau):
        assert b <= 0 and (a <= 0 or w >= a * a / (-2 * b) - 1e-9 * max(1.0, w))
    else:
        assert tau >= 0
        assert math.isclose(linear_mass(a, b, tau), w, rel_tol=1e-7, abs_tol=1e-9)


@given(vec3, vec3)
def test_reflection_is_isometric_involution(p, g):
    if g @ g < 1e-6:
        return
    r = pdmp.reflect(p, g)
    assert math.isclose(r @ r, p @ p, rel_tol=1e-9, abs_tol=1e-9)
    np.testing.assert_allclose(pdmp.reflect(r, g), p, atol=1e-8)
    assert math.isclose(r @ g, -(p @ g), rel_tol=1e-9, abs_tol=1e-8)


@given(arrays(np.float64, st.integers(1, 8), elements=st.floats(-100, 100)))
def test_project_simplex_lands_on_simplex(v):
    p = stein.project_simplex(v)
    assert np.all(p >= 0) and math.isclose(p.sum(), 1.0, rel_tol=1e-9)


@settings(max_examples=50)
@given(arrays(np.float64, 4, elements=st.floats(-5, 5)), st.floats(0.05, 3.0))
def test_cc_bound_dominates(c, t1):
    b = pdmp.cc_bound(c, (0.0, t1))
    ts = np.linspace(0, t1, 50)
    true = np.maximum(0.0, c[0] + c[1] * ts + c[2] * ts**2 + c[3] * ts**3)
    assert np.all(b(ts) >= true - 1e-9 * (1 + np.abs(c).sum()))


@given(st.lists(st.floats(0, 10), min_size=1, max_size=6))
def test_superposition_returns_minimum(times):
    t, tag = pdmp.first_event_superposition([(x, i) for i, x in enumerate(times)])
    assert t == min(times) and tag == times.index(min(times))


@given(st.lists(st.integers(0, 50), min_size=2, max_size=10).filter(lambda c: sum(c) > 0))
def test_tvd_bounds(counts):
    v = dg.empirical_tvd(counts)
    assert 0 <= v <= 2 * (1 - 1 / len(counts)) + 1e-12


@given(st.sampled_from(["rwm", "mala", "zigzag", "sgld"]), st.integers(1, 10**6), st.integers(0, 2**31),
       st.lists(st.floats(-1e6, 1e6), max_size=4), st.floats(0.5, 1e5))
def test_config_text_round_trip(sampler, iters, seed, theta0, horizon):
    cfg = ExperimentConfig(sampler=sampler, iters=iters, seed=seed, theta0=tuple(theta0), horizon=horizon,
                           sampler_params={"step": "0.1"})
    assert ExperimentConfig.from_text(cfg.to_text()) == cfg


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.integers(0, 1000))
def test_stein_matrix_symmetric_psd(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2))
    g = rng.normal(size=(n, 2))
    K = stein.stein_matrix(x, g)
    np.testing.assert_allclose(K, K.T, atol=1e-12)
    ev = np.linalg.eigvalsh(K)
    assert ev.min() >= -1e-8 * max(ev.max(), 1.0)
