import numpy as np
import pytest

from microgrid_fopid.ga import GAConfig, ga_optimize
from microgrid_fopid.surrogate_opt import Bounds

FOPID = Bounds.fopid()


def sphere(x):
    return float(np.sum(np.asarray(x) ** 2))


class Counter:
    def __init__(self, f):
        self.f, self.n = f, 0

    def __call__(self, x):
        self.n += 1
        return self.f(x)


def test_config_validation():
    with pytest.raises(ValueError):
        GAConfig(FOPID, elite_count=10)
    with pytest.raises(ValueError):
        GAConfig(FOPID, crossover_fraction=1.5)


def test_exact_budget():
    f = Counter(sphere)
    _, h = ga_optimize(f, GAConfig(FOPID, seed=0))
    assert f.n == 150 == len(h) == GAConfig(FOPID).budget


def test_bounds_and_monotone_best():
    _, h = ga_optimize(sphere, GAConfig(FOPID, seed=1))
    assert FOPID.contains(np.array(h.X))
    assert np.all(np.diff(h.best_so_far) <= 0)
    gen_best = np.array(h.J).reshape(15, 10).min(1)
    assert np.all(np.diff(gen_best) <= 0)


def test_elites_carried_unchanged():
    _, h = ga_optimize(sphere, GAConfig(FOPID, seed=2))
    X = np.array(h.X).reshape(15, 10, 5)
    J = np.array(h.J).reshape(15, 10)
    for g in range(14):
        order = np.argsort(J[g], kind="stable")[:2]
        np.testing.assert_array_equal(X[g + 1, :2], X[g, order])


def test_deterministic():
    a = ga_optimize(sphere, GAConfig(FOPID, seed=3))[1]
    b = ga_optimize(sphere, GAConfig(FOPID, seed=3))[1]
    assert a.J == b.J


def test_improves_over_initial_population():
    ratios = []
    for s in range(10):
        _, h = ga_optimize(sphere, GAConfig(FOPID, seed=s))
        ratios.append(min(h.J[:10]) / h.best_J)
    assert np.median(ratios) > 2.0


@pytest.mark.xfail(strict=True, reason="plain rank/intermediate/gaussian GA reaches about "
                   "4x median reduction on this benchmark in 150 evaluations")
def test_sphere_tenfold_reduction():
    first, final = [], []
    for s in range(10):
        _, h = ga_optimize(sphere, GAConfig(FOPID, seed=s))
        first.append(min(h.J[:10]))
        final.append(h.best_J)
    assert np.median(first) / np.median(final) >= 10.0
