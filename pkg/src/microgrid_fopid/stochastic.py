"""Wind, solar and load power profiles: uniform white noise shaped by
``1 - G(s)`` around a switched mean level."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numba
import numpy as np

from .lti import TransferFunction, lag, rk3_zoh, tf_to_ss

REPLICATE_STRIDE = 10**6


def replicate_seed(run_seed: int, replicate: int) -> int:
    return run_seed * REPLICATE_STRIDE + replicate


@dataclass(frozen=True)
class SwitchingSignal:
    """Sum of Heaviside steps ``gain * h(t - onset)``.

    With ``divide_by_chi`` the step sum is divided by the instantaneous
    noise factor and ``offset`` (itself a step at t=0) is added afterwards.
    """

    steps: tuple
    divide_by_chi: bool = False
    offset: float = 0.0

    def __post_init__(self):
        onsets = [o for _, o in self.steps]
        if any(o < 0 for o in onsets) or onsets != sorted(onsets):
            raise ValueError("onsets must be non-negative and sorted")

    @property
    def onsets(self) -> list:
        return [o for _, o in self.steps]

    def schedule(self, t):
        """Deterministic step sum at ``t`` (scalar or array)."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for gain, onset in self.steps:
            out = out + gain * (t >= onset)
        return out


def gamma_value(gamma: SwitchingSignal, t: float, chi: float = 1.0) -> float:
    total = float(gamma.schedule(t))
    if gamma.divide_by_chi:
        if chi == 0:
            raise ValueError("chi = 0 with a chi-divided switching signal")
        return total / chi + (gamma.offset if t >= 0 else 0.0)
    return total + (gamma.offset if t >= 0 else 0.0)


@dataclass(frozen=True)
class ExogenousProfile:
    kind: str
    eta: float
    beta: float
    G: TransferFunction
    gamma: SwitchingSignal

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if np.any(np.real(self.G.poles()) >= 0):
            raise ValueError("G must be stable")

    @property
    def noise_gain(self) -> float:
        return self.eta * math.sqrt(self.beta) / self.beta


def wind_profile() -> ExogenousProfile:
    return ExogenousProfile("wind", 0.8, 10.0, lag(1e4),
                            SwitchingSignal(((0.24, 0.0), (-0.04, 140.0))))


def solar_profile() -> ExogenousProfile:
    return ExogenousProfile("solar", 0.1, 10.0, lag(1e4),
                            SwitchingSignal(((0.05, 0.0), (0.02, 180.0))))


def load_profile() -> ExogenousProfile:
    steps = ((0.9, 0.0), (0.03, 110.0), (0.03, 130.0), (0.03, 150.0),
             (-0.15, 170.0), (0.1, 190.0))
    return ExogenousProfile("load", 0.9, 10.0, lag(300.0, 300.0) + lag(1800.0),
                            SwitchingSignal(steps, divide_by_chi=True, offset=0.02))


def standard_profiles():
    return wind_profile(), solar_profile(), load_profile()


@numba.njit(cache=True)
def _shape_noise(A, B, C, D, phi, dt):
    # v = phi - G[phi], G advanced with phi held over each step
    x = np.zeros(A.shape[0])
    v = np.empty(phi.shape[0])
    for i in range(phi.shape[0]):
        g = D * phi[i]
        for j in range(x.shape[0]):
            g += C[j] * x[j]
        v[i] = phi[i] - g
        rk3_zoh(A, B, x, phi[i], dt)
    return v


def time_grid(t_end: float, dt: float) -> np.ndarray:
    n = int(math.floor(t_end / dt + 1e-9)) + 1
    return np.arange(n) * dt


def noise_factor(profile: ExogenousProfile, t_end: float, dt: float,
                 seed: int) -> np.ndarray:
    """``chi(t)`` sampled on the grid for one seeded realization."""
    n = time_grid(t_end, dt).size
    phi = np.random.default_rng(seed).uniform(-1.0, 1.0, n)
    ss = tf_to_ss(profile.G)
    v = _shape_noise(ss.A, ss.B, ss.C, ss.D, phi, dt)
    return (profile.noise_gain * profile.beta * v + profile.beta) / profile.beta


def generate(profile: ExogenousProfile, t_end: float, dt: float, seed: int,
             noise: bool = True, return_chi: bool = False):
    """Power series ``P = chi * Gamma`` on ``0, dt, ..., t_end``."""
    if t_end <= 0 or dt <= 0:
        raise ValueError("t_end and dt must be positive")
    t = time_grid(t_end, dt)
    chi = noise_factor(profile, t_end, dt, seed) if noise else np.ones_like(t)
    g = profile.gamma
    sched = g.schedule(t)
    if g.divide_by_chi:
        p = sched + chi * g.offset
    else:
        p = chi * (sched + g.offset)
    return (p, chi) if return_chi else p


@dataclass(frozen=True)
class Scenario:
    """Exogenous inputs for one closed-loop run."""

    profiles: tuple = field(default_factory=standard_profiles)
    noise: bool = True
    t_end: float = 220.0
    dt: float = 0.01

    def inputs(self, seed: int):
        return _scenario_inputs(self, int(seed))


@lru_cache(maxsize=64)
def _scenario_inputs(scenario: Scenario, seed: int):
    # wind/solar/load draw from independent streams derived from one seed
    ss = np.random.SeedSequence(seed).spawn(len(scenario.profiles))
    out = []
    for prof, child in zip(scenario.profiles, ss):
        sub = int(child.generate_state(1, dtype=np.uint64)[0])
        p = generate(prof, scenario.t_end, scenario.dt, sub, noise=scenario.noise)
        p.setflags(write=False)
        out.append(p)
    return tuple(out)


def export_csv(path, t: Sequence[float], wind, solar, load) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "P_wind", "P_solar", "P_load"])
        for row in zip(t, wind, solar, load):
            w.writerow([repr(float(v)) for v in row])
