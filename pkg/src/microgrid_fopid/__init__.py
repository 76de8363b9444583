"""Surrogate-assisted tuning of PID and fractional-order PID frequency
controllers for a stochastic islanded microgrid."""

from .fopid import ControllerParams, OustaloupSpec, build_controller, oustaloup
from .ga import GAConfig, ga_optimize
from .kriging import KrigingRegressor
from .microgrid import MicrogridParams, Plant, SwitchingPolicy, Topology, simulate
from .objective import CostSpec, ExpensiveObjective, Problem, cost, expected_cost
from .stochastic import Scenario
from .surrogate_opt import Bounds, InfillConfig, RunHistory, optimize, slhs

__version__ = "0.1.0"

__all__ = [
    "Bounds", "ControllerParams", "CostSpec", "ExpensiveObjective", "GAConfig",
    "InfillConfig", "KrigingRegressor", "MicrogridParams", "OustaloupSpec", "Plant",
    "Problem", "RunHistory", "Scenario", "SwitchingPolicy", "Topology",
    "build_controller", "cost", "expected_cost", "ga_optimize", "optimize", "oustaloup",
    "simulate", "slhs",
]
