"""Linear SISO blocks: transfer functions, state-space realization and
fixed-step Bogacki-Shampine (RK3) time stepping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba
import numpy as np


class SimulationDiverged(RuntimeError):
    """Raised when a filter state becomes non-finite."""


def _trim(coeffs: Sequence[float]) -> np.ndarray:
    c = np.atleast_1d(np.asarray(coeffs, dtype=float))
    nz = np.flatnonzero(c)
    if nz.size == 0:
        return np.zeros(1)
    return c[nz[0]:]


@dataclass(frozen=True)
class TransferFunction:
    """Rational transfer function ``num(s)/den(s)``, coefficients in
    descending powers of ``s``."""

    num: tuple
    den: tuple

    def __init__(self, num, den):
        num = _trim(num)
        den = _trim(den)
        if den[0] == 0.0:
            raise ValueError("denominator must have a nonzero leading coefficient")
        object.__setattr__(self, "num", tuple(float(v) for v in num))
        object.__setattr__(self, "den", tuple(float(v) for v in den))

    @property
    def order(self) -> int:
        return len(self.den) - 1

    @property
    def is_proper(self) -> bool:
        return len(self.num) <= len(self.den)

    def __call__(self, s):
        return np.polyval(self.num, s) / np.polyval(self.den, s)

    def dc_gain(self) -> float:
        return float(self.num[-1] / self.den[-1])

    def __mul__(self, other: "TransferFunction | float") -> "TransferFunction":
        if not isinstance(other, TransferFunction):
            return TransferFunction(np.asarray(self.num) * float(other), self.den)
        return TransferFunction(np.polymul(self.num, other.num),
                                np.polymul(self.den, other.den))

    __rmul__ = __mul__

    def __add__(self, other: "TransferFunction") -> "TransferFunction":
        num = np.polyadd(np.polymul(self.num, other.den),
                         np.polymul(other.num, self.den))
        return TransferFunction(num, np.polymul(self.den, other.den))

    def poles(self) -> np.ndarray:
        return np.roots(self.den)

    def zeros(self) -> np.ndarray:
        return np.roots(self.num)


def lag(T: float, K: float = 1.0) -> TransferFunction:
    """First-order lag ``K/(T s + 1)``."""
    return TransferFunction([K], [T, 1.0])


@dataclass
class StateSpaceFilter:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float
    state: np.ndarray = field(default=None)

    def __post_init__(self):
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.shape != (n,) or self.C.shape != (n,):
            raise ValueError("inconsistent state-space dimensions")
        if self.state is None:
            self.state = np.zeros(n)

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    def output(self, u: float) -> float:
        return float(self.C @ self.state + self.D * u)

    def reset(self) -> None:
        self.state = np.zeros(self.n_states)

    def derivative(self, x: np.ndarray, u: float) -> np.ndarray:
        return self.A @ x + self.B * u


def tf_to_ss(tf: TransferFunction) -> StateSpaceFilter:
    """Controllable-canonical realization with zero initial state."""
    if not tf.is_proper:
        raise ValueError(
            f"improper transfer function: numerator degree {len(tf.num) - 1} "
            f"exceeds denominator degree {tf.order}")
    den = np.asarray(tf.den) / tf.den[0]
    n = len(den) - 1
    num = np.zeros(n + 1)
    num[n + 1 - len(tf.num):] = np.asarray(tf.num) / tf.den[0]
    D = num[0]
    A = np.zeros((n, n))
    if n:
        A[0, :] = -den[1:]
        A[1:, :-1] = np.eye(n - 1)
    B = np.zeros(n)
    if n:
        B[0] = 1.0
    C = num[1:] - D * den[1:]
    return StateSpaceFilter(A, B, C, float(D))


def freq_response(filt: StateSpaceFilter, omega: float) -> complex:
    """Complex gain ``C (jwI - A)^-1 B + D`` at ``omega`` rad/s."""
    if omega <= 0:
        raise ValueError("omega must be positive")
    n = filt.n_states
    if n == 0:
        return complex(filt.D)
    M = 1j * omega * np.eye(n) - filt.A
    if abs(np.linalg.det(M)) == 0.0 or np.linalg.cond(M) > 1e15:
        raise ValueError(f"pole on the imaginary axis at omega={omega}")
    return complex(filt.C @ np.linalg.solve(M, filt.B) + filt.D)


def rk3_step(filt: StateSpaceFilter, input_fn: Callable[[float], float],
             t: float, dt: float) -> float:
    """Advance ``filt`` one Bogacki-Shampine step and return the output at
    ``t + dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    x = filt.state
    if filt.n_states:
        k1 = filt.derivative(x, input_fn(t))
        k2 = filt.derivative(x + 0.5 * dt * k1, input_fn(t + 0.5 * dt))
        k3 = filt.derivative(x + 0.75 * dt * k2, input_fn(t + 0.75 * dt))
        x = x + dt * (2.0 * k1 + 3.0 * k2 + 4.0 * k3) / 9.0
        if not np.all(np.isfinite(x)):
            raise SimulationDiverged(f"non-finite filter state at t={t + dt:g}")
        filt.state = x
    return filt.output(input_fn(t + dt))


def simulate_filter(filt: StateSpaceFilter, u: np.ndarray, dt: float) -> np.ndarray:
    """Response to a sampled input held constant over each step."""
    u = np.asarray(u, dtype=float)
    y = np.empty_like(u)
    y[0] = filt.output(u[0])
    for i in range(1, len(u)):
        ui = u[i - 1]
        rk3_step(filt, lambda _t: ui, (i - 1) * dt, dt)
        y[i] = filt.output(u[i])
    return y


@numba.njit(cache=True)
def rk3_zoh(A, B, x, u, dt):
    """In-place Bogacki-Shampine step of ``x' = A x + B u`` with ``u`` held."""
    n = x.shape[0]
    k1 = np.empty(n)
    k2 = np.empty(n)
    tmp = np.empty(n)
    for i in range(n):
        acc = B[i] * u
        for j in range(n):
            acc += A[i, j] * x[j]
        k1[i] = acc
    for i in range(n):
        tmp[i] = x[i] + 0.5 * dt * k1[i]
    for i in range(n):
        acc = B[i] * u
        for j in range(n):
            acc += A[i, j] * tmp[j]
        k2[i] = acc
    for i in range(n):
        tmp[i] = x[i] + 0.75 * dt * k2[i]
    for i in range(n):
        acc = B[i] * u
        for j in range(n):
            acc += A[i, j] * tmp[j]
        x[i] += dt * (2.0 * k1[i] + 3.0 * k2[i] + 4.0 * acc) / 9.0
