"""Real-coded genetic algorithm used as a budget-matched baseline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .surrogate_opt import Bounds, RunHistory


@dataclass(frozen=True)
class GAConfig:
    bounds: Bounds
    population: int = 10
    generations: int = 15
    elite_count: int = 2
    crossover_fraction: float = 0.8
    mutation_fraction: float = 0.2
    mutation_scale: float = 0.1
    seed: object = None

    def __post_init__(self):
        if not 0 <= self.elite_count < self.population:
            raise ValueError("elite_count must be below the population size")
        for f in (self.crossover_fraction, self.mutation_fraction):
            if not 0 <= f <= 1:
                raise ValueError("fractions must lie in [0, 1]")
        if self.generations < 1:
            raise ValueError("need at least one generation")

    @property
    def budget(self) -> int:
        return self.population * self.generations


def _rank_weights(n: int) -> np.ndarray:
    # linear ranking: the best individual gets weight n, the worst 1
    w = np.arange(n, 0, -1, dtype=float)
    return w / w.sum()


def ga_optimize(objective: Callable[[np.ndarray], float], cfg: GAConfig):
    """Minimize ``objective`` over ``cfg.bounds``.

    Every generation, elites included, is passed through ``objective``, so
    the run costs exactly ``population * generations`` calls.
    Returns ``(best_x, history)``.
    """
    rng = np.random.default_rng(cfg.seed)
    b = cfg.bounds
    n_pop = cfg.population
    n_free = n_pop - cfg.elite_count
    n_cross = int(round(cfg.crossover_fraction * n_free))
    history = RunHistory()

    def evaluate(P):
        J = np.empty(len(P))
        for i, x in enumerate(P):
            J[i] = float(objective(x))
            history.append(x, J[i])
        return J

    P = b.lower + rng.random((n_pop, b.n)) * b.span
    J = evaluate(P)
    weights = _rank_weights(n_pop)
    for _ in range(cfg.generations - 1):
        order = np.argsort(J, kind="stable")
        ranked = P[order]
        elites = ranked[:cfg.elite_count]
        parents = ranked[rng.choice(n_pop, size=(n_free, 2), p=weights)]
        children = np.empty((n_free, b.n))
        # intermediate recombination for the crossover slots
        r = rng.random((n_cross, b.n))
        p1, p2 = parents[:n_cross, 0], parents[:n_cross, 1]
        children[:n_cross] = p1 + r * (p2 - p1)
        # gaussian mutation of a single parent for the rest
        m = n_free - n_cross
        children[n_cross:] = parents[n_cross:, 0] + \
            rng.normal(size=(m, b.n)) * cfg.mutation_scale * b.span
        P = np.vstack([elites, b.clip(children)])
        J = evaluate(P)
    return history.best_x, history
