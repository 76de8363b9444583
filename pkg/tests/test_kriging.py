import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from microgrid_fopid.kriging import (KERNELS, FitFailure, KrigingRegressor,
                                     concentrated_likelihood, correlation, correlation_matrix,
                                     fit, gls_coefficient, normalize, pattern_search)


def training_set(k=30, n=5, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 2, (k, n))
    y = np.sin(X).sum(1) + 0.3 * (X**2).sum(1)
    return X, y


def test_normalize_column():
    Sn, _, stats = normalize(np.array([[0.0], [1.0], [2.0]]), [1.0, 2.0, 4.0])
    assert Sn.mean() == pytest.approx(0.0, abs=1e-15)
    assert Sn.std(ddof=1) == pytest.approx(1.0)
    assert stats.S_std[0] == pytest.approx(1.0)


def test_normalize_idempotent_and_invertible():
    X, y = training_set()
    Sn, Yn, stats = normalize(X, y)
    Sn2, Yn2, _ = normalize(Sn, Yn)
    np.testing.assert_allclose(Sn2, Sn, atol=1e-12)
    np.testing.assert_allclose(stats.inverse_S(Sn), X, atol=1e-12)
    np.testing.assert_allclose(stats.inverse_Y(Yn), y, atol=1e-12)


def test_constant_column_rejected():
    X = np.column_stack([np.ones(5), np.arange(5.0)])
    with pytest.raises(ValueError, match="constant"):
        normalize(X, np.arange(5.0))


@pytest.mark.parametrize("kind", KERNELS)
def test_zero_distance_is_one(kind):
    assert correlation(kind, [0.7, 2.0], [0.3, -1.0], [0.3, -1.0]) == 1.0


def test_spherical_at_unit_argument():
    assert correlation("spherical", 1.0, [1.0], [0.0]) == pytest.approx(0.0, abs=1e-15)


def test_spline_branches_meet():
    left = 1 - 15 * 0.2**2 + 30 * 0.2**3
    right = 1.25 * (1 - 0.2) ** 3
    assert left == pytest.approx(0.64) and right == pytest.approx(0.64)
    assert correlation("spline", 1.0, [0.2], [0.0]) == pytest.approx(0.64)
    assert correlation("spline", 1.0, [0.2 + 1e-9], [0.0]) == pytest.approx(0.64, abs=1e-7)


def test_closed_form_kernels():
    d = 0.4
    assert correlation("exponential", 2.0, [d], [0]) == pytest.approx(math.exp(-0.8))
    assert correlation("gaussian", 2.0, [d], [0]) == pytest.approx(math.exp(-0.32))
    assert correlation("linear", 2.0, [d], [0]) == pytest.approx(0.2)
    assert correlation("linear", 2.0, [-d], [0]) == pytest.approx(0.2)


def test_unknown_kernel():
    with pytest.raises(ValueError):
        correlation("cubic", 1.0, [0.0], [1.0])


vec = st.lists(st.floats(-3, 3), min_size=3, max_size=3)
theta_st = st.lists(st.floats(1e-3, 20), min_size=3, max_size=3)


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(KERNELS), theta_st, vec, vec)
def test_kernel_symmetry_and_range(kind, theta, w, x):
    a = correlation(kind, theta, w, x)
    assert a == correlation(kind, theta, x, w)
    assert 0.0 <= a <= 1.0


@settings(max_examples=100, deadline=None)
@given(st.sampled_from(("linear", "spherical", "spline")), theta_st, vec, vec)
def test_compact_support(kind, theta, w, x):
    th = np.array(theta)
    if np.any(th * np.abs(np.array(w) - np.array(x)) >= 1.0):
        assert correlation(kind, theta, w, x) == 0.0


def test_identity_correlation_gives_mean():
    # widely spaced sites and a short compact support make Q exactly I
    X = np.arange(8.0)[:, None] * np.array([[1.0, 2.0]])
    X[:, 1] += np.array([0, 3, 1, 4, 2, 7, 5, 6])
    y = np.random.default_rng(1).normal(size=8)
    m = KrigingRegressor(corr="linear", theta=20.0).fit(X, y)
    Q = correlation_matrix("linear", m.theta_, m.S_, m.S_)
    assert np.array_equal(Q, np.eye(8))
    assert m.zeta_ == pytest.approx(y.mean(), abs=1e-12)


def test_one_dimensional_quadratic_interpolates():
    x = np.linspace(-1, 1, 5)[:, None]
    y = x.ravel() ** 2
    m = fit(x, y, "gaussian")
    np.testing.assert_allclose(m.predict(x), y, atol=1e-8)


def dense_gls(Q, F, Y):
    Qi = np.linalg.inv(Q)
    return np.linalg.inv(F.T @ Qi @ F) @ F.T @ Qi @ Y


def test_gls_matches_dense_inverse_small():
    rng = np.random.default_rng(5)
    S = rng.normal(size=(8, 3))
    Q = correlation_matrix("gaussian", [0.5, 1.0, 2.0], S, S)
    F = np.ones((8, 1))
    Y = rng.normal(size=8)
    np.testing.assert_allclose(gls_coefficient(Q, F, Y), dense_gls(Q, F, Y), rtol=1e-10)


def test_model_coefficient_matches_dense_inverse():
    X, y = training_set(k=12, n=3, seed=2)
    m = KrigingRegressor(corr="gaussian", theta=[0.5, 1.0, 2.0]).fit(X, y)
    Q = correlation_matrix("gaussian", m.theta_, m.S_, m.S_)
    Yn = m.stats_.transform_Y(y)
    z = dense_gls(Q, np.ones((12, 1)), Yn)[0]
    assert m.gls_.zeta == pytest.approx(z, rel=1e-10)


@pytest.mark.parametrize("kind", KERNELS)
def test_exact_interpolation_and_zero_mse(kind):
    X, y = training_set()
    m = KrigingRegressor(corr=kind).fit(X, y)
    pred, mse = m.predict(X, return_mse=True)
    assert np.max(np.abs(pred - y)) <= 1e-8 * (1 + np.max(np.abs(y)))
    assert np.max(mse) <= 1e-8


def test_constant_response():
    X, _ = training_set(k=10, n=2)
    m = KrigingRegressor(corr="gaussian").fit(X, np.full(10, 3.5))
    np.testing.assert_allclose(m.predict(np.random.default_rng(0).normal(size=(20, 2))), 3.5)


def test_far_extrapolation_limits():
    # well-separated grid so that Q is close to the identity
    X = np.array([[i, j] for i in range(5) for j in range(4)], float)
    y = np.sin(X).sum(1)
    m = KrigingRegressor(corr="gaussian", theta=20.0).fit(X, y)
    far = np.array([[1e3, -1e3]])
    assert m.predict(far)[0] == pytest.approx(m.zeta_, rel=1e-12)
    Q = correlation_matrix("gaussian", m.theta_, m.S_, m.S_)
    assert np.allclose(Q, np.eye(20), atol=1e-3)
    assert m.mse(far)[0] == pytest.approx(m.sigma2_ * (1 + 1 / 20), rel=1e-2)


@pytest.mark.parametrize("kind", KERNELS)
def test_mse_nonnegative_sweep(kind):
    X, y = training_set(k=25, n=3, seed=3)
    m = KrigingRegressor(corr=kind).fit(X, y)
    Z = np.random.default_rng(9).uniform(-3, 3, (1000, 3))
    assert np.all(m.mse(Z) >= 0.0)


@pytest.mark.parametrize("kind", ["gaussian", "exponential"])
def test_mse_positive_away_from_sites(kind):
    X, y = training_set(k=20, n=2, seed=4)
    m = KrigingRegressor(corr=kind).fit(X, y)
    Z = np.random.default_rng(1).uniform(-2, 2, (400, 2))
    Zn = m.stats_.transform_S(Z)
    dmin = np.sqrt(((Zn[:, None] - m.S_[None]) ** 2).sum(-1)).min(1)
    assert np.all(m.mse(Z[dmin >= 0.1]) > 0.0)


@pytest.mark.parametrize("kind", KERNELS)
def test_likelihood_search_improves(kind):
    X, y = training_set(k=25, n=3, seed=6)
    m = KrigingRegressor(corr=kind).fit(X, y)
    assert m.likelihood_ >= m.initial_likelihood_
    assert m.n_likelihood_evals_ <= 200
    assert np.all((m.theta_ >= 1e-3) & (m.theta_ <= 20))


def test_duplicate_sites_rejected():
    X, y = training_set(k=10, n=2)
    X[3] = X[7]
    with pytest.raises(ValueError, match="coincide"):
        KrigingRegressor().fit(X, y)


def test_pattern_search_finds_quadratic_peak():
    x, f, n = pattern_search(lambda v: -np.sum((v - 0.3) ** 2), [2.0, -2.0],
                             np.full(2, -5.0), np.full(2, 5.0), max_evals=500, tol=1e-6)
    np.testing.assert_allclose(x, 0.3, atol=1e-4)


def test_estimator_protocol(tmp_path):
    X, y = training_set(k=15, n=2)
    m = KrigingRegressor(corr="spherical", max_likelihood_evals=50)
    assert m.get_params()["corr"] == "spherical"
    c = clone(m).set_params(corr="gaussian")
    c.fit(X, y)
    assert c.score(X, y) == pytest.approx(1.0)
    c.dump(tmp_path / "model.json")
    d = json.loads((tmp_path / "model.json").read_text())
    assert len(d["sites"]) == 15 and d["corr"] == "gaussian"


def test_fit_failure_is_runtime_error():
    assert issubclass(FitFailure, RuntimeError)


def test_concentrated_likelihood_formula():
    X, y = training_set(k=12, n=2)
    m = KrigingRegressor(corr="gaussian", theta=[1.0, 1.0]).fit(X, y)
    Q = correlation_matrix("gaussian", m.theta_, m.S_, m.S_)
    Yn = m.stats_.transform_Y(y)
    r = Yn - m.gls_.zeta
    s2 = r @ np.linalg.solve(Q, r) / 12
    ref = -12 * np.log(s2) - np.linalg.slogdet(Q)[1]
    assert concentrated_likelihood(m.gls_) == pytest.approx(ref, rel=1e-9)
