"""Islanded microgrid frequency model: generation/storage blocks with
output saturation and rate limits, swing dynamics, droop, and optional
on-off gating of the fuel cell and diesel units."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numba
import numpy as np

from .fopid import RealizedController
from .lti import TransferFunction, lag, tf_to_ss
from .stochastic import Scenario, time_grid

INF = math.inf


@dataclass(frozen=True)
class MicrogridParams:
    K_WTG: float = 1.0
    K_FESS: float = 1.0
    K_BESS: float = 1.0
    D: float = 0.015
    M: float = 0.1667  # 2H
    R: float = 3.0
    T_FESS: float = 0.1
    T_BESS: float = 0.1
    T_FC: float = 0.26
    T_WTG: float = 1.5
    T_g: float = 0.08
    T_t: float = 0.4
    T_IC: float = 0.004
    T_IN: float = 0.04

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"{f.name} must be positive")

    def perturbed(self, name: str, fraction: float) -> "MicrogridParams":
        """Copy with ``name`` scaled by ``1 + fraction`` (``2H`` is an alias
        for ``M``)."""
        key = "M" if name == "2H" else name
        return replace(self, **{key: getattr(self, key) * (1.0 + fraction)})


@dataclass(frozen=True)
class Limiter:
    lo: float
    hi: float
    rate: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("need lo < hi")
        if not self.rate > 0:
            raise ValueError("rate must be positive")


FC_LIMITER = Limiter(0.0, 0.48, 1.0)
DEG_LIMITER = Limiter(0.0, 0.45, 0.5)
FESS_LIMITER = Limiter(-0.11, 0.11, 0.05)
BESS_LIMITER = Limiter(-0.11, 0.11, 0.05)


def apply_limiter(lim: Limiter, requested: float, previous: float, dt: float) -> float:
    """Saturate, then bound the change from ``previous`` to ``rate * dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return _limit(requested, previous, lim.lo, lim.hi, lim.rate * dt)


@numba.njit(cache=True)
def _limit(y, prev, lo, hi, dmax):
    if y < lo:
        y = lo
    elif y > hi:
        y = hi
    if y > prev + dmax:
        y = prev + dmax
    elif y < prev - dmax:
        y = prev - dmax
    return y


@dataclass(frozen=True)
class SwitchingPolicy:
    enabled: bool = False
    deadband: float = 0.05
    min_on_time: float = 10.0

    def __post_init__(self):
        if not self.deadband > 0 or self.min_on_time < 0:
            raise ValueError("deadband must be positive and min_on_time non-negative")


@dataclass
class GateState:
    on: bool = False
    since: float = 0.0


def actuator_gate(policy: SwitchingPolicy, df: float, state: GateState, t: float) -> bool:
    """Update ``state`` in place and return whether FC/DEG are switched on."""
    if not state.on:
        if abs(df) >= policy.deadband:
            state.on, state.since = True, t
    elif abs(df) < policy.deadband and t - state.since >= policy.min_on_time:
        state.on = False
    return state.on


# input sources for component blocks
SRC_WIND, SRC_SOLAR, SRC_COMMAND, SRC_COMMAND_DROOP, SRC_FREQ = range(5)
_SOURCES = {"wind": SRC_WIND, "solar": SRC_SOLAR, "command": SRC_COMMAND,
            "command_droop": SRC_COMMAND_DROOP, "frequency": SRC_FREQ}


@dataclass(frozen=True)
class Component:
    """One generation/storage path: input source -> gain -> lag chain ->
    limiter, entering the power balance with ``sign``."""

    name: str
    source: str
    lags: tuple
    gain: str = ""
    limiter: Optional[Limiter] = None
    sign: float = 1.0
    enabled: bool = True

    def transfer_function(self, p: MicrogridParams) -> TransferFunction:
        tf = TransferFunction([getattr(p, self.gain) if self.gain else 1.0], [1.0])
        for name in self.lags:
            tf = tf * lag(getattr(p, name))
        return tf


def default_components() -> tuple:
    return (
        Component("P_WTG", "wind", ("T_WTG",), gain="K_WTG"),
        Component("P_PV", "solar", ("T_IN", "T_IC")),
        Component("P_FC", "command", ("T_FC", "T_IC", "T_IN"), limiter=FC_LIMITER),
        Component("P_DEG", "command_droop", ("T_g", "T_t"), limiter=DEG_LIMITER),
        Component("P_FESS", "frequency", ("T_FESS",), gain="K_FESS",
                  limiter=FESS_LIMITER, sign=-1.0),
        Component("P_BESS", "frequency", ("T_BESS",), gain="K_BESS",
                  limiter=BESS_LIMITER, sign=-1.0),
    )


@dataclass(frozen=True)
class Topology:
    """Wiring of the plant. The defaults are one reconstruction of the block
    diagram; alternatives can be swapped in per component."""

    components: tuple = field(default_factory=default_components)

    def without(self, *names: str) -> "Topology":
        return Topology(tuple(replace(c, enabled=False) if c.name in names else c
                              for c in self.components))

    @property
    def names(self) -> list:
        return [c.name for c in self.components]


TRACE_COLUMNS = ("t", "df", "u", "dP", "P_WTG", "P_PV", "P_FC", "P_DEG",
                 "P_FESS", "P_BESS", "P_L", "gate")


@dataclass
class SimulationTrace:
    t: np.ndarray
    df: np.ndarray
    u: np.ndarray
    dP: np.ndarray
    powers: dict
    gate: np.ndarray
    diverged: bool = False
    gate_events: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        if name in ("t", "df", "u", "dP", "gate"):
            return getattr(self, name)
        return self.powers[name]

    def to_csv(self, path) -> None:
        cols = [self.column(c) for c in TRACE_COLUMNS]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for row in zip(*cols):
                w.writerow([repr(float(v)) for v in row])


@dataclass
class _Packed:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    n: np.ndarray


def _pack(tfs) -> _Packed:
    filters = [tf_to_ss(tf) for tf in tfs]
    nmax = max(1, max(f.n_states for f in filters))
    nb = len(filters)
    A = np.zeros((nb, nmax, nmax))
    B = np.zeros((nb, nmax))
    C = np.zeros((nb, nmax))
    D = np.zeros(nb)
    n = np.zeros(nb, dtype=np.int64)
    for i, f in enumerate(filters):
        k = f.n_states
        A[i, :k, :k] = f.A
        B[i, :k] = f.B
        C[i, :k] = f.C
        D[i] = f.D
        n[i] = k
    return _Packed(A, B, C, D, n)


@numba.njit(cache=True, inline='always')
def _eval(A, B, C, D, nst, X, dX, src, sign, enabled, lo, hi, rate, prev, yout,
          frac, dt, wind, solar, load, gains, inv_R, gate_on):
    """Derivatives of every block at stage time ``t_n + frac*dt``. Limited
    outputs may move at most ``rate*frac*dt`` from the last major step.
    Returns (df, u, dP)."""
    nc = nst.shape[0] - 3
    dP = -load
    for c in range(nc):
        b = c + 3
        y = 0.0
        for j in range(nst[b]):
            y += C[b, j] * X[b, j]
        if rate[c] < np.inf:
            if y < lo[c]:
                y = lo[c]
            elif y > hi[c]:
                y = hi[c]
            dmax = rate[c] * frac * dt
            if y > prev[c] + dmax:
                y = prev[c] + dmax
            elif y < prev[c] - dmax:
                y = prev[c] - dmax
        if not enabled[c]:
            y = 0.0
        yout[c] = y
        dP += sign[c] * y
    df = 0.0
    dfdt = 0.0
    for j in range(nst[0]):
        df += C[0, j] * X[0, j]
        acc = B[0, j] * dP
        for k in range(nst[0]):
            acc += A[0, j, k] * X[0, k]
        dX[0, j] = acc
        dfdt += C[0, j] * acc
    e = -df
    yi = D[1] * e
    for j in range(nst[1]):
        yi += C[1, j] * X[1, j]
    yd = D[2] * e
    for j in range(nst[2]):
        yd += C[2, j] * X[2, j]
    u = gains[0] * e + gains[1] * yi + gains[2] * (yd - gains[3] * dfdt)
    cmd = u if gate_on else 0.0
    cmd_droop = (u - df * inv_R) if gate_on else 0.0
    for b in range(1, nst.shape[0]):
        if b < 3:
            v = e
        else:
            s = src[b - 3]
            if s == 0:
                v = wind
            elif s == 1:
                v = solar
            elif s == 2:
                v = cmd
            elif s == 3:
                v = cmd_droop
            else:
                v = df
        for j in range(nst[b]):
            acc = B[b, j] * v
            for k in range(nst[b]):
                acc += A[b, j, k] * X[b, k]
            dX[b, j] = acc
    return df, u, dP


@numba.njit(cache=True)
def _axpy(out, x, a, y):
    for b in range(x.shape[0]):
        for j in range(x.shape[1]):
            out[b, j] = x[b, j] + a * y[b, j]


@numba.njit(cache=True)
def _run(A, B, C, D, nst, x0, src, sign, enabled, lim_lo, lim_hi, lim_rate,
         wind, solar, load, gains, inv_R, dt,
         gate_enabled, deadband, min_on, record, i_min, i_max, w, Kn):
    # blocks: 0 swing, 1 integral branch, 2 derivative branch, 3.. components
    nsteps = wind.shape[0]
    nc = nst.shape[0] - 3
    X = x0.copy()
    K1 = np.zeros_like(X)
    K2 = np.zeros_like(X)
    K3 = np.zeros_like(X)
    Xs = np.zeros_like(X)
    nrec = nsteps if record else 1
    rec = np.zeros((11, nrec))
    prev = np.zeros(nc)
    yout = np.zeros(nc)
    inf_rate = np.full(nc, np.inf)
    gate_on = not gate_enabled
    gate_since = 0.0
    n_events = 0
    events = np.zeros((2, nsteps if gate_enabled else 1))
    J = 0.0
    last = 0.0
    u_ref = 0.0
    diverged = False
    for i in range(nsteps):
        t = i * dt
        if i == 0:
            # saturated initial outputs, no slew history
            _eval(A, B, C, D, nst, X, K1, src, sign, enabled, lim_lo, lim_hi, inf_rate,
                  prev, yout, 1.0, dt, wind[0], solar[0], load[0], gains, inv_R, gate_on)
            for c in range(nc):
                prev[c] = min(max(yout[c], lim_lo[c]), lim_hi[c])
        # major step: limiter moves at most rate*dt from the previous sample
        df, u, dP = _eval(A, B, C, D, nst, X, K1, src, sign, enabled, lim_lo, lim_hi,
                          lim_rate, prev, yout, 1.0 if i > 0 else 0.0, dt,
                          wind[i], solar[i], load[i], gains, inv_R, gate_on)
        for c in range(nc):
            prev[c] = yout[c]
        if gate_enabled:
            changed = False
            if not gate_on:
                if abs(df) >= deadband:
                    gate_on = True
                    gate_since = t
                    changed = True
            elif abs(df) < deadband and t - gate_since >= min_on:
                gate_on = False
                changed = True
            if changed:
                events[0, n_events] = t
                events[1, n_events] = 1.0 if gate_on else 0.0
                n_events += 1
                df, u, dP = _eval(A, B, C, D, nst, X, K1, src, sign, enabled, lim_lo,
                                  lim_hi, lim_rate, prev, yout, 0.0, dt, wind[i],
                                  solar[i], load[i], gains, inv_R, gate_on)
        if not (math.isfinite(u) and math.isfinite(df) and abs(df) < 1e10 and abs(u) < 1e10):
            diverged = True
            break
        if i == i_min:
            u_ref = u
        if i_min <= i <= i_max:
            du = u - u_ref
            val = w * df * df + (1.0 - w) / Kn * du * du
            if i > i_min:
                J += 0.5 * dt * (val + last)
            last = val
        if record:
            rec[0, i] = df
            rec[1, i] = u
            rec[2, i] = dP
            for c in range(nc):
                rec[3 + c, i] = yout[c]
            rec[9, i] = load[i]
            rec[10, i] = 1.0 if gate_on else 0.0
        if i == nsteps - 1:
            break
        # Bogacki-Shampine stages on the whole interconnection, inputs held
        _axpy(Xs, X, 0.5 * dt, K1)
        _eval(A, B, C, D, nst, Xs, K2, src, sign, enabled, lim_lo, lim_hi, lim_rate,
              prev, yout, 0.5, dt, wind[i], solar[i], load[i], gains, inv_R, gate_on)
        _axpy(Xs, X, 0.75 * dt, K2)
        _eval(A, B, C, D, nst, Xs, K3, src, sign, enabled, lim_lo, lim_hi, lim_rate,
              prev, yout, 0.75, dt, wind[i], solar[i], load[i], gains, inv_R, gate_on)
        for b in range(X.shape[0]):
            for j in range(nst[b]):
                X[b, j] += dt * (2.0 * K1[b, j] + 3.0 * K2[b, j] + 4.0 * K3[b, j]) / 9.0
    return rec, J, diverged, events[:, :n_events]


class Plant:
    """Compiled closed-loop model for fixed params, topology and controller."""

    def __init__(self, params: MicrogridParams = MicrogridParams(),
                 controller: Optional[RealizedController] = None,
                 policy: SwitchingPolicy = SwitchingPolicy(),
                 topology: Topology = Topology(),
                 initial: str = "equilibrium"):
        if len(topology.components) != 6:
            raise ValueError("topology must list six components")
        self.params = params
        self.controller = controller
        self.policy = policy
        self.topology = topology
        self.initial = initial
        swing = TransferFunction([1.0], [params.M, params.D])
        if controller is None:
            ctrl = [TransferFunction([0.0], [1.0]), TransferFunction([0.0], [1.0])]
            self.gains = np.zeros(4)
        else:
            ctrl = [controller.integral_tf, controller.derivative_tf]
            p = controller.params
            self.gains = np.array([p.Kp, p.Ki, p.Kd, controller.derivative_gain])
        comps = topology.components
        self.packed = _pack([swing, *ctrl] + [c.transfer_function(params) for c in comps])
        self.src = np.array([_SOURCES[c.source] for c in comps], dtype=np.int64)
        self.sign = np.array([c.sign for c in comps])
        self.enabled = np.array([c.enabled for c in comps])
        self.lim = np.array([[c.limiter.lo, c.limiter.hi, c.limiter.rate] if c.limiter
                             else [-INF, INF, INF] for c in comps])

    def _initial_state(self, wind, solar, load):
        P = self.packed
        x0 = np.zeros(P.B.shape)
        if self.initial == "equilibrium":
            return self._equilibrium(wind[0], solar[0], load[0])
        if self.initial == "steady":
            for c, s in enumerate(self.src):
                u0 = {SRC_WIND: wind[0], SRC_SOLAR: solar[0]}.get(int(s), 0.0)
                b, k = c + 3, P.n[c + 3]
                if k and u0:
                    x0[b, :k] = -np.linalg.solve(P.A[b, :k, :k], P.B[b, :k] * u0)
        elif self.initial != "zero":
            raise ValueError(f"unknown initial condition {self.initial!r}")
        return x0

    def _equilibrium(self, wind0, solar0, load0):
        """Closed-loop steady state for the t=0 inputs, limiters and gating
        ignored. Signals are affine in the stacked state: (row, const)."""
        P = self.packed
        nb = P.n.size
        offs = np.concatenate([[0], np.cumsum(P.n)])
        nz = int(offs[-1])

        def block_out(b, D=0.0, inp=None):
            row = np.zeros(nz)
            row[offs[b]:offs[b + 1]] = P.C[b, :P.n[b]]
            const = 0.0
            if inp is not None:
                row = row + D * inp[0]
                const = D * inp[1]
            return row, const

        df = block_out(0)
        e = (-df[0], -df[1])
        Kp, Ki, Kd, _ = self.gains
        yi = block_out(1, P.D[1], e)
        yd = block_out(2, P.D[2], e)
        u = (Kp * e[0] + Ki * yi[0] + Kd * yd[0], Kp * e[1] + Ki * yi[1] + Kd * yd[1])
        dP = (np.zeros(nz), -load0)
        for c in range(nb - 3):
            if self.enabled[c]:
                y = block_out(c + 3)
                dP = (dP[0] + self.sign[c] * y[0], dP[1] + self.sign[c] * y[1])
        inv_R = 1.0 / self.params.R
        sources = {SRC_WIND: (np.zeros(nz), wind0), SRC_SOLAR: (np.zeros(nz), solar0),
                   SRC_COMMAND: u, SRC_FREQ: df,
                   SRC_COMMAND_DROOP: (u[0] - inv_R * df[0], u[1] - inv_R * df[1])}
        inputs = [dP, e, e] + [sources[int(s)] for s in self.src]
        M = np.zeros((nz, nz))
        r = np.zeros(nz)
        for b in range(nb):
            k = P.n[b]
            sl = slice(offs[b], offs[b + 1])
            M[sl, sl] += P.A[b, :k, :k]
            M[sl] += np.outer(P.B[b, :k], inputs[b][0])
            r[sl] -= P.B[b, :k] * inputs[b][1]
        z = np.linalg.lstsq(M, r, rcond=None)[0]
        x0 = np.zeros(P.B.shape)
        for b in range(nb):
            x0[b, :P.n[b]] = z[offs[b]:offs[b + 1]]
        return x0

    def run(self, wind, solar, load, dt: float = 0.01, record: bool = True,
            cost_window=None):
        """Run on sampled exogenous inputs. ``cost_window`` is
        ``(i_min, i_max, w, Kn)`` for the inline cost accumulator."""
        wind = np.ascontiguousarray(wind, dtype=float)
        solar = np.ascontiguousarray(solar, dtype=float)
        load = np.ascontiguousarray(load, dtype=float)
        if not wind.shape == solar.shape == load.shape:
            raise ValueError("exogenous series must share one grid")
        i_min, i_max, w, Kn = cost_window or (0, -1, 0.0, 1.0)
        P = self.packed
        pol = self.policy
        return _run(P.A, P.B, P.C, P.D, P.n, self._initial_state(wind, solar, load),
                    self.src, self.sign, self.enabled,
                    self.lim[:, 0].copy(), self.lim[:, 1].copy(), self.lim[:, 2].copy(),
                    wind, solar, load, self.gains, 1.0 / self.params.R, dt,
                    pol.enabled, pol.deadband, pol.min_on_time, record,
                    int(i_min), int(i_max), float(w), float(Kn))

    def trace(self, wind, solar, load, dt: float = 0.01) -> SimulationTrace:
        rec, _, diverged, events = self.run(wind, solar, load, dt, record=True)
        n = wind.shape[0]
        t = np.arange(n) * dt
        names = self.topology.names
        powers = {name: rec[3 + c] for c, name in enumerate(names)}
        powers["P_L"] = rec[9]
        return SimulationTrace(t, rec[0], rec[1], rec[2], powers, rec[10], diverged,
                               [(float(a), "on" if b else "off") for a, b in events.T])


def simulate(params: MicrogridParams = MicrogridParams(),
             controller: Optional[RealizedController] = None,
             scenario: Scenario = Scenario(),
             policy: SwitchingPolicy = SwitchingPolicy(),
             seed: int = 0,
             topology: Topology = Topology(),
             initial: str = "equilibrium") -> SimulationTrace:
    """Closed-loop run over ``scenario`` with one seeded noise realization.
    ``controller=None`` runs open loop (u = 0)."""
    wind, solar, load = scenario.inputs(seed)
    plant = Plant(params, controller, policy, topology, initial)
    return plant.trace(wind, solar, load, scenario.dt)
