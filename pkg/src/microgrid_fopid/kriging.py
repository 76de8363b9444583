"""DACE-style kriging: constant regression trend plus a correlated
residual, generalized least squares fit, maximum-likelihood range
parameters, predictor and mean squared error."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from numba import njit
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

KERNELS = ("exponential", "gaussian", "linear", "spherical", "spline")
THETA_BOUNDS = (1e-3, 20.0)
DUPLICATE_TOL = 1e-6


class FitFailure(RuntimeError):
    """Correlation matrix stayed numerically singular after jitter."""


_KIND_CODE = {name: i for i, name in enumerate(KERNELS)}


@njit(cache=True, inline="always")
def _phi(code, theta, d):
    if code == 0:
        return math.exp(-theta * d)
    if code == 1:
        return math.exp(-theta * d * d)
    if code == 2:
        return max(0.0, 1.0 - theta * d)
    xi = theta * d
    if code == 3:
        xi = min(1.0, xi)
        return 1.0 - 1.5 * xi + 0.5 * xi**3
    if xi <= 0.2:
        return 1.0 - 15.0 * xi**2 + 30.0 * xi**3
    if xi < 1.0:
        return 1.25 * (1.0 - xi) ** 3
    return 0.0


@njit(cache=True)
def _corr_rows(code, theta, dist):
    """Product correlation for each row of absolute distances."""
    m, n = dist.shape
    out = np.empty(m)
    for i in range(m):
        r = 1.0
        for j in range(n):
            r *= _phi(code, theta[j], dist[i, j])
            if r == 0.0:
                break
        out[i] = r
    return out


def _kind_code(kind: str) -> int:
    try:
        return _KIND_CODE[kind]
    except KeyError:
        raise ValueError(f"unknown correlation kernel {kind!r}; choose from {KERNELS}") from None


def correlation_1d(kind: str, theta, d):
    """Per-coordinate correlation ``Phi_j(theta_j, |d_j|)``."""
    code = _kind_code(kind)
    d = np.abs(np.asarray(d, float))
    th = np.broadcast_to(np.asarray(theta, float), d.shape).ravel()
    flat = d.ravel()
    out = np.array([_phi(code, t, x) for t, x in zip(th, flat)]) if flat.size else flat
    return out.reshape(d.shape)


def correlation(kind: str, theta, w, x) -> float:
    """Product correlation between two points."""
    w = np.atleast_1d(np.asarray(w, float))
    theta = np.broadcast_to(np.asarray(theta, float), w.shape).copy()
    d = np.abs(w - np.asarray(x, float))[None, :]
    return float(_corr_rows(_kind_code(kind), theta, d)[0])


def correlation_matrix(kind: str, theta, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """``R[i, j] = Phi(theta, A[i], B[j])``."""
    A, B = np.atleast_2d(A), np.atleast_2d(B)
    theta = np.broadcast_to(np.asarray(theta, float), (A.shape[1],)).copy()
    d = np.abs(A[:, None, :] - B[None, :, :]).reshape(-1, A.shape[1])
    return _corr_rows(_kind_code(kind), theta, d).reshape(A.shape[0], B.shape[0])


class _PairDistances:
    """Upper-triangle distances of a fixed site set, reused across the
    likelihood search."""

    def __init__(self, Sn):
        self.k = Sn.shape[0]
        self.iu = np.triu_indices(self.k, 1)
        self.dist = np.ascontiguousarray(np.abs(Sn[self.iu[0]] - Sn[self.iu[1]]))

    def matrix(self, kind, theta):
        Q = np.eye(self.k)
        vals = _corr_rows(_kind_code(kind), np.asarray(theta, float), self.dist)
        Q[self.iu] = vals
        Q[self.iu[1], self.iu[0]] = vals
        return Q


@dataclass(frozen=True)
class NormalizationStats:
    S_mean: np.ndarray
    S_std: np.ndarray
    Y_mean: float
    Y_std: float

    def transform_S(self, S):
        return (np.asarray(S, float) - self.S_mean) / self.S_std

    def transform_Y(self, Y):
        return (np.asarray(Y, float) - self.Y_mean) / self.Y_std

    def inverse_S(self, Sn):
        return np.asarray(Sn) * self.S_std + self.S_mean

    def inverse_Y(self, Yn):
        return np.asarray(Yn) * self.Y_std + self.Y_mean


def normalize(S, Y):
    """Zero-mean, unit-sample-variance columns. A constant response is
    kept at unit scale; a constant site column is rejected."""
    S = np.asarray(S, float)
    Y = np.asarray(Y, float).ravel()
    S_std = S.std(axis=0, ddof=1)
    if np.any(S_std == 0):
        raise ValueError(f"constant design column(s): {np.flatnonzero(S_std == 0).tolist()}")
    Y_std = float(Y.std(ddof=1)) if Y.size > 1 else 0.0
    stats = NormalizationStats(S.mean(axis=0), S_std, float(Y.mean()), Y_std or 1.0)
    return stats.transform_S(S), stats.transform_Y(Y), stats


@dataclass
class _GLSFit:
    L: np.ndarray       # lower Cholesky factor of Q
    Ft: np.ndarray      # L^-1 F
    zeta: float
    gamma: np.ndarray   # Q^-1 (Y - F zeta)
    sigma2: float       # normalized-scale process variance
    FtF: float          # F^T Q^-1 F
    log_det: float
    jitter: float


def _gls(pairs: _PairDistances, Yn, kind, theta) -> _GLSFit:
    k = pairs.k
    Q = pairs.matrix(kind, theta)
    base = (10.0 + k) * np.finfo(float).eps
    L = None
    for level in range(4):
        jitter = base * 100.0**level
        try:
            L = cholesky(Q + jitter * np.eye(k), lower=True)
            break
        except np.linalg.LinAlgError:
            continue
    if L is None:
        raise FitFailure(f"correlation matrix singular for theta={np.round(theta, 6)}")
    F = np.ones(k)
    Ft = solve_triangular(L, F, lower=True)
    Yt = solve_triangular(L, Yn, lower=True)
    FtF = float(Ft @ Ft)
    zeta = float(Ft @ Yt) / FtF
    rt = Yt - Ft * zeta
    sigma2 = float(rt @ rt) / k
    gamma = solve_triangular(L.T, rt, lower=False)
    log_det = 2.0 * float(np.sum(np.log(np.diag(L))))
    return _GLSFit(L, Ft, zeta, gamma, sigma2, FtF, log_det, jitter)


def concentrated_likelihood(fit: _GLSFit) -> float:
    k = fit.L.shape[0]
    if fit.sigma2 <= 0:
        return math.inf
    return -k * math.log(fit.sigma2) - fit.log_det


def pattern_search(func, x0, lo, hi, step=1.0, max_evals=200, tol=1e-3):
    """Hooke-Jeeves maximization of ``func`` inside a box."""
    x = np.clip(np.asarray(x0, float), lo, hi)
    fx = func(x)
    n_evals = 1
    step = np.full(x.size, step)

    def explore(base, fbase):
        nonlocal n_evals
        y, fy = base.copy(), fbase
        for i in range(y.size):
            for sgn in (1.0, -1.0):
                if n_evals >= max_evals:
                    return y, fy
                trial = y.copy()
                trial[i] = np.clip(trial[i] + sgn * step[i], lo[i], hi[i])
                if trial[i] == y[i]:
                    continue
                ft = func(trial)
                n_evals += 1
                if ft > fy:
                    y, fy = trial, ft
                    break
        return y, fy

    while n_evals < max_evals and np.max(step) > tol:
        y, fy = explore(x, fx)
        if fy > fx:
            # pattern move along the improving direction
            while n_evals < max_evals:
                pattern = np.clip(y + (y - x), lo, hi)
                x, fx = y, fy
                fp = func(pattern)
                n_evals += 1
                y, fy = explore(pattern, fp)
                if not fy > fx:
                    break
        else:
            step = step / 2.0
    return x, fx, n_evals


class KrigingRegressor(RegressorMixin, BaseEstimator):
    """Exact-interpolating kriging surrogate.

    Parameters
    ----------
    corr : str
        One of ``exponential``, ``gaussian``, ``linear``, ``spherical``,
        ``spline``.
    theta : array-like or None
        Fixed range parameters in normalized space; ``None`` selects them by
        maximum likelihood.
    theta0 : float
        Starting value for the likelihood search.
    theta_bounds : (float, float)
    max_likelihood_evals : int
    """

    def __init__(self, corr="spline", theta=None, theta0=1.0,
                 theta_bounds=THETA_BOUNDS, max_likelihood_evals=200):
        self.corr = corr
        self.theta = theta
        self.theta0 = theta0
        self.theta_bounds = theta_bounds
        self.max_likelihood_evals = max_likelihood_evals

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        if self.corr not in KERNELS:
            raise ValueError(f"unknown correlation kernel {self.corr!r}")
        Sn, Yn, stats = normalize(X, y)
        self._check_distinct(Sn)
        pairs = _PairDistances(Sn)
        n = X.shape[1]
        constant = not np.any(Yn)
        if self.theta is None and constant:
            # the likelihood is unbounded for a flat response; keep the start
            theta = np.full(n, float(self.theta0))
            self.initial_likelihood_ = math.inf
            self.n_likelihood_evals_ = 0
        elif self.theta is None:
            lo = np.full(n, math.log(self.theta_bounds[0]))
            hi = np.full(n, math.log(self.theta_bounds[1]))

            def loglik(log_theta):
                try:
                    return concentrated_likelihood(_gls(pairs, Yn, self.corr, np.exp(log_theta)))
                except FitFailure:
                    return -math.inf

            start = np.full(n, math.log(self.theta0))
            self.initial_likelihood_ = loglik(start)
            log_theta, best, self.n_likelihood_evals_ = pattern_search(
                loglik, start, lo, hi, max_evals=self.max_likelihood_evals)
            if not np.isfinite(best):
                raise FitFailure("no theta in bounds gives a factorizable correlation matrix")
            theta = np.exp(log_theta)
        else:
            theta = np.broadcast_to(np.asarray(self.theta, float), (n,)).copy()
        self.theta_ = theta
        self.stats_ = stats
        self.S_ = Sn
        self.gls_ = _gls(pairs, Yn, self.corr, theta)
        self.likelihood_ = concentrated_likelihood(self.gls_)
        self.n_features_in_ = n
        return self

    @staticmethod
    def _check_distinct(Sn):
        d = np.sqrt(((Sn[:, None, :] - Sn[None, :, :]) ** 2).sum(-1))
        d[np.diag_indices_from(d)] = np.inf
        if d.min() < DUPLICATE_TOL:
            i, j = np.unravel_index(np.argmin(d), d.shape)
            raise ValueError(f"design sites {i} and {j} coincide in normalized space")

    @property
    def zeta_(self) -> float:
        """Regression coefficient in original response units."""
        return float(self.stats_.inverse_Y(self.gls_.zeta))

    @property
    def sigma2_(self) -> float:
        """Process variance in original response units."""
        return self.gls_.sigma2 * self.stats_.Y_std**2

    def _corr_to_sites(self, X):
        X = check_array(X)
        Xn = self.stats_.transform_S(X)
        return correlation_matrix(self.corr, self.theta_, Xn, self.S_)

    def predict(self, X, return_mse=False):
        check_is_fitted(self, "gls_")
        q = self._corr_to_sites(X)
        g = self.gls_
        yn = g.zeta + q @ g.gamma
        y = self.stats_.inverse_Y(yn)
        if return_mse:
            return y, self._mse(q)
        return y

    def mse(self, X):
        check_is_fitted(self, "gls_")
        return self._mse(self._corr_to_sites(X))

    def _mse(self, q):
        g = self.gls_
        rt = solve_triangular(g.L, q.T, lower=True)
        b = g.Ft @ rt - 1.0
        phi = g.sigma2 * (1.0 + b**2 / g.FtF - np.sum(rt**2, axis=0))
        return np.maximum(phi, 0.0) * self.stats_.Y_std**2

    def to_dict(self) -> dict:
        check_is_fitted(self, "gls_")
        s = self.stats_
        return {"corr": self.corr, "theta": self.theta_.tolist(),
                "zeta": self.zeta_, "sigma2": self.sigma2_,
                "sites": s.inverse_S(self.S_).tolist(),
                "S_mean": s.S_mean.tolist(), "S_std": s.S_std.tolist(),
                "Y_mean": s.Y_mean, "Y_std": s.Y_std}

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def fit(S, Y, kind="spline", theta="mle", **kwargs) -> KrigingRegressor:
    """Functional entry point: ``theta="mle"`` runs the likelihood search."""
    return KrigingRegressor(corr=kind, theta=None if isinstance(theta, str) else theta,
                            **kwargs).fit(S, Y)


def gls_coefficient(Q, F, Y):
    """``(F^T Q^-1 F)^-1 F^T Q^-1 Y`` through a Cholesky factorization."""
    c = (cholesky(Q, lower=True), True)
    QiF = cho_solve(c, F)
    QiY = cho_solve(c, Y)
    return np.linalg.solve(F.T @ QiF, F.T @ QiY)
