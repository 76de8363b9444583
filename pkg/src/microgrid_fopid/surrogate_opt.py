"""Kriging-assisted global optimization with a symmetric Latin hypercube
start and candidate-point infill."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .fopid import LOWER_BOUNDS, UPPER_BOUNDS, ControllerParams
from .kriging import KERNELS, FitFailure, KrigingRegressor

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("eval_index", "Kp", "Ki", "Kd", "lam", "mu", "J_mean", "best_so_far")


@dataclass(frozen=True)
class Bounds:
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
        if lo.shape != hi.shape or lo.ndim != 1 or np.any(lo >= hi):
            raise ValueError("bounds need lo < hi componentwise")
        object.__setattr__(self, "lo", tuple(lo.tolist()))
        object.__setattr__(self, "hi", tuple(hi.tolist()))

    @property
    def n(self) -> int:
        return len(self.lo)

    @property
    def lower(self) -> np.ndarray:
        return np.array(self.lo)

    @property
    def upper(self) -> np.ndarray:
        return np.array(self.hi)

    @property
    def span(self) -> np.ndarray:
        return self.upper - self.lower

    def to_unit(self, X):
        return (np.asarray(X, float) - self.lower) / self.span

    def clip(self, X):
        return np.clip(X, self.lower, self.upper)

    def contains(self, X) -> bool:
        X = np.atleast_2d(X)
        return bool(np.all(X >= self.lower) and np.all(X <= self.upper))

    @classmethod
    def fopid(cls) -> "Bounds":
        return cls(LOWER_BOUNDS, UPPER_BOUNDS)

    @classmethod
    def pid(cls) -> "Bounds":
        return cls(LOWER_BOUNDS[:3], UPPER_BOUNDS[:3])

    @classmethod
    def for_controller(cls, controller: str) -> "Bounds":
        if controller not in ("pid", "fopid"):
            raise ValueError(f"unknown controller {controller!r}")
        return cls.pid() if controller == "pid" else cls.fopid()


@dataclass(frozen=True)
class InfillConfig:
    n_initial: int = 50
    n_perturbed: int = 500
    n_uniform: int = 500
    perturbation: float = 0.2
    weights: tuple = (0.3, 0.5, 0.8, 0.95)
    duplicate_tol: float = 1e-6
    response_transform: str = "log"

    def __post_init__(self):
        if self.response_transform not in ("none", "log"):
            raise ValueError("response_transform must be 'none' or 'log'")
        if not self.weights or any(not 0 <= w <= 1 for w in self.weights):
            raise ValueError("weights must lie in [0, 1]")
        if self.perturbation < 0 or self.n_perturbed < 0 or self.n_uniform < 0:
            raise ValueError("candidate counts and perturbation must be nonnegative")


@dataclass
class RunHistory:
    X: list = field(default_factory=list)
    J: list = field(default_factory=list)

    def append(self, x, J: float) -> None:
        self.X.append(np.asarray(x, float).copy())
        self.J.append(float(J))

    def __len__(self) -> int:
        return len(self.J)

    @property
    def best_so_far(self) -> np.ndarray:
        return np.minimum.accumulate(np.asarray(self.J)) if self.J else np.empty(0)

    @property
    def best_index(self) -> int:
        # argmin returns the first occurrence, so ties go to the earliest
        return int(np.argmin(self.J))

    @property
    def best_x(self) -> np.ndarray:
        return self.X[self.best_index]

    @property
    def best_J(self) -> float:
        return self.J[self.best_index]

    def rows(self):
        best = self.best_so_far
        for i, (x, J) in enumerate(zip(self.X, self.J)):
            p = ControllerParams.from_vector(x) if x.size in (3, 5) else None
            gains = p.as_vector() if p is not None else np.full(5, np.nan)
            yield (i, *gains.tolist(), J, float(best[i]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(HISTORY_COLUMNS)
            for row in self.rows():
                w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def slhs(k: int, bounds: Bounds, seed=None) -> np.ndarray:
    """Symmetric Latin hypercube: one point per stratum and column, rows
    paired so that ``s_i + s_j = lo + hi``."""
    if k < 2 or k % 2:
        raise ValueError("symmetric Latin hypercube needs an even k >= 2")
    rng = np.random.default_rng(seed)
    n, half = bounds.n, k // 2
    strata = np.empty((k, n), dtype=int)
    for j in range(n):
        first = rng.permutation(half)
        # flip half of the lower strata to the upper side, mirror the rest
        flip = rng.random(half) < 0.5
        first = np.where(flip, k - 1 - first, first)
        strata[:half, j] = first
        strata[half:, j] = k - 1 - first
    unit = (strata + 0.5) / k
    return bounds.lower + unit * bounds.span


def _min_distances(C_unit: np.ndarray, S_unit: np.ndarray) -> np.ndarray:
    d2 = ((C_unit[:, None, :] - S_unit[None, :, :]) ** 2).sum(-1)
    return np.sqrt(d2.min(axis=1))


def propose_candidates(best, bounds: Bounds, cfg: InfillConfig, rng,
                       sampled: Optional[np.ndarray] = None) -> np.ndarray:
    """Perturbations of ``best`` plus uniform draws, minus near-duplicates of
    already sampled sites (distance measured on the unit cube)."""
    best = np.asarray(best, float)
    A = best + rng.normal(size=(cfg.n_perturbed, bounds.n)) * cfg.perturbation * bounds.span
    A = bounds.clip(A)
    B = bounds.lower + rng.random((cfg.n_uniform, bounds.n)) * bounds.span
    C = np.vstack([A, B])
    C = np.unique(C, axis=0) if len(C) else C
    if sampled is not None and len(sampled) and len(C):
        keep = _min_distances(bounds.to_unit(C), bounds.to_unit(sampled)) > cfg.duplicate_tol
        C = C[keep]
    return C


def _transform(J: np.ndarray, kind: str) -> np.ndarray:
    """Surrogate response. ``log`` compresses penalty values of diverged
    runs so they do not flatten the fit elsewhere."""
    if kind == "none":
        return J
    floor = np.finfo(float).tiny
    return np.log(np.maximum(J, floor))


def _minmax(v: np.ndarray) -> np.ndarray:
    span = v.max() - v.min()
    return np.zeros_like(v) if span == 0 else (v - v.min()) / span


def score_and_select(model, candidates: np.ndarray, sampled: np.ndarray,
                     w_rs: float, bounds: Optional[Bounds] = None) -> np.ndarray:
    """Weighted sum of the normalized surrogate prediction and the
    normalized negative distance to the sampled set; lowest score wins.
    ``model=None`` ranks by distance alone."""
    if len(candidates) == 0:
        raise ValueError("empty candidate set")
    to_unit = bounds.to_unit if bounds is not None else (lambda X: np.asarray(X, float))
    v_dist = _minmax(-_min_distances(to_unit(candidates), to_unit(sampled)))
    if model is None:
        return candidates[int(np.argmin(v_dist))]
    v_rs = _minmax(np.asarray(model.predict(candidates), float))
    score = w_rs * v_rs + (1.0 - w_rs) * v_dist
    return candidates[int(np.argmin(score))]


def optimize(objective: Callable[[np.ndarray], float], bounds: Bounds,
             kernel: str = "spline", budget: int = 150, seed=None,
             cfg: InfillConfig = InfillConfig(), callback=None):
    """Minimize ``objective`` with exactly ``budget`` calls.

    Returns ``(best_x, history)``.
    """
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}")
    if budget < cfg.n_initial:
        raise ValueError("budget must cover the initial design")
    rng = np.random.default_rng(seed)
    history = RunHistory()

    def evaluate(x):
        J = float(objective(x))
        history.append(x, J)
        if callback is not None:
            callback(len(history) - 1, x, J)

    for x in slhs(cfg.n_initial, bounds, rng):
        evaluate(x)

    for it in range(budget - cfg.n_initial):
        S = np.array(history.X)
        Y = _transform(np.array(history.J), cfg.response_transform)
        try:
            model = KrigingRegressor(corr=kernel).fit(S, Y)
        except (FitFailure, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("kriging fit failed at infill %d: %s", it, exc)
            model = None
        w_rs = cfg.weights[it % len(cfg.weights)]
        C = propose_candidates(history.best_x, bounds, cfg, rng, S)
        if len(C) == 0:
            C = propose_candidates(history.best_x, bounds, cfg, rng, S)
        if len(C) == 0:
            x = bounds.lower + rng.random(bounds.n) * bounds.span
        else:
            x = score_and_select(model, C, S, w_rs, bounds)
        evaluate(x)

    return history.best_x, history
