"""Weighted ISE / ISDCO cost on a simulation trace and its replicate
average, the expensive black-box objective."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .fopid import ControllerParams, OustaloupSpec, build_controller
from .microgrid import MicrogridParams, Plant, SimulationTrace, SwitchingPolicy, Topology
from .stochastic import Scenario, replicate_seed

DIVERGENCE_PENALTY = 1e6


@dataclass(frozen=True)
class CostSpec:
    w: float = 0.7
    K_n: float = 1e4
    T_min: float = 100.0
    T_max: float = 220.0

    def __post_init__(self):
        if not 0 <= self.w <= 1 or self.K_n <= 0 or not self.T_min < self.T_max:
            raise ValueError("invalid cost specification")

    def window(self, dt: float):
        """Grid indices ``(i_min, i_max)`` of the integration window."""
        return int(round(self.T_min / dt)), int(round(self.T_max / dt))


def cost(trace: SimulationTrace, spec: CostSpec = CostSpec()) -> float:
    """Trapezoidal ``int w*df^2 + (1-w)/K_n * du^2`` over ``[T_min, T_max]``
    with ``du = u - u(T_min)``."""
    if trace.diverged:
        return DIVERGENCE_PENALTY
    t = trace.t
    dt = t[1] - t[0]
    i0, i1 = spec.window(dt)
    if i1 >= t.size:
        raise ValueError("trace does not span the cost window")
    df = trace.df[i0:i1 + 1]
    du = trace.u[i0:i1 + 1] - trace.u[i0]
    integrand = spec.w * df**2 + (1 - spec.w) / spec.K_n * du**2
    return float(np.trapezoid(integrand, dx=dt))


@dataclass
class EvaluationRecord:
    params: ControllerParams
    J_mean: float
    J_replicates: list
    diverged_count: int = 0

    @property
    def J_std(self) -> float:
        return float(np.std(self.J_replicates))


@dataclass(frozen=True)
class Problem:
    """Everything except the controller that defines one expected-cost
    evaluation."""

    params: MicrogridParams = MicrogridParams()
    scenario: Scenario = Scenario()
    cost: CostSpec = CostSpec()
    policy: SwitchingPolicy = SwitchingPolicy()
    topology: Topology = Topology()
    oustaloup: OustaloupSpec = OustaloupSpec()
    n_rep: int = 10


def expected_cost(params: ControllerParams, run_seed: int,
                  problem: Problem = Problem(), n_rep: Optional[int] = None) -> EvaluationRecord:
    """Mean cost over ``n_rep`` noise replicates seeded
    ``run_seed * 10**6 + r``."""
    n_rep = problem.n_rep if n_rep is None else n_rep
    if n_rep < 1:
        raise ValueError("n_rep must be >= 1")
    plant = Plant(problem.params, build_controller(params, problem.oustaloup),
                  problem.policy, problem.topology)
    sc = problem.scenario
    window = (*problem.cost.window(sc.dt), problem.cost.w, problem.cost.K_n)
    costs, n_div = [], 0
    for r in range(n_rep):
        wind, solar, load = sc.inputs(replicate_seed(run_seed, r))
        _, J, diverged, _ = plant.run(wind, solar, load, sc.dt, record=False,
                                      cost_window=window)
        if diverged or not np.isfinite(J):
            J, n_div = DIVERGENCE_PENALTY, n_div + 1
        costs.append(float(J))
    return EvaluationRecord(params, float(np.mean(costs)), costs, n_div)


class ExpensiveObjective:
    """Callable ``x -> J_mean`` that counts evaluations and keeps records.

    ``x`` holds (Kp, Ki, Kd) in PID mode or (Kp, Ki, Kd, lam, mu).
    """

    def __init__(self, problem: Problem = Problem(), run_seed: int = 0,
                 budget: Optional[int] = None):
        self.problem = problem
        self.run_seed = run_seed
        self.budget = budget
        self.records: list = []

    @property
    def n_evals(self) -> int:
        return len(self.records)

    def __call__(self, x) -> float:
        if self.budget is not None and self.n_evals >= self.budget:
            raise RuntimeError(f"evaluation budget of {self.budget} exhausted")
        rec = expected_cost(ControllerParams.from_vector(x), self.run_seed, self.problem)
        self.records.append(rec)
        return rec.J_mean
