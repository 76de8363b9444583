"""Fractional-order PID controller with band-limited Oustaloup realization
of the fractional integral and derivative operators."""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass
from typing import Optional

import numpy as np

from .lti import StateSpaceFilter, TransferFunction, rk3_step, tf_to_ss

LOWER_BOUNDS = (0.0, 0.0, 0.0, 0.0, 0.0)
UPPER_BOUNDS = (5.0, 5.0, 5.0, 2.0, 2.0)


@dataclass(frozen=True)
class ControllerParams:
    Kp: float
    Ki: float
    Kd: float
    lam: float = 1.0
    mu: float = 1.0

    @classmethod
    def from_vector(cls, x) -> "ControllerParams":
        x = [float(v) for v in x]
        if len(x) == 3:
            return cls(*x)
        if len(x) == 5:
            return cls(*x)
        raise ValueError(f"expected 3 (PID) or 5 (FOPID) parameters, got {len(x)}")

    def as_vector(self) -> np.ndarray:
        return np.array(astuple(self))

    @property
    def is_pid(self) -> bool:
        return self.lam == 1.0 and self.mu == 1.0

    def check_bounds(self) -> None:
        for name, v, lo, hi in zip(("Kp", "Ki", "Kd", "lam", "mu"), astuple(self),
                                   LOWER_BOUNDS, UPPER_BOUNDS):
            if not (lo <= v <= hi) or not math.isfinite(v):
                raise ValueError(f"{name}={v} outside [{lo}, {hi}]")


@dataclass(frozen=True)
class OustaloupSpec:
    """Fitting band ``[wb, wh]`` rad/s and half-order ``N`` (filter order
    ``2N+1``) for approximating ``s**alpha``."""

    alpha: float = 0.5
    wb: float = 1e-2
    wh: float = 1e2
    N: int = 2

    def __post_init__(self):
        if not 0 < self.wb < self.wh:
            raise ValueError("need 0 < wb < wh")
        if self.N < 1:
            raise ValueError("N must be >= 1")

    def with_alpha(self, alpha: float) -> "OustaloupSpec":
        return OustaloupSpec(alpha, self.wb, self.wh, self.N)


def oustaloup_zpk(alpha: float, wb: float, wh: float, N: int):
    """Zeros, poles (as positive corner frequencies) and gain of the
    recursive approximation. Valid for ``-1 <= alpha <= 1``."""
    k = np.arange(-N, N + 1)
    ratio = wh / wb
    poles = wb * ratio ** ((k + N + 0.5 * (1 + alpha)) / (2 * N + 1))
    zeros = wb * ratio ** ((k + N + 0.5 * (1 - alpha)) / (2 * N + 1))
    return zeros, poles, wh ** alpha


def oustaloup(spec: OustaloupSpec) -> TransferFunction:
    """Rational approximation of ``s**alpha`` over the spec's band."""
    if not -1.0 < spec.alpha < 1.0:
        raise ValueError(
            f"alpha={spec.alpha} outside (-1, 1); split off the integer part first")
    return _oustaloup_tf(spec.alpha, spec)


def _oustaloup_tf(alpha: float, spec: OustaloupSpec) -> TransferFunction:
    zeros, poles, gain = oustaloup_zpk(alpha, spec.wb, spec.wh, spec.N)
    return TransferFunction(gain * np.poly(-zeros), np.poly(-poles))


def _split_order(order: float):
    n_int = int(math.floor(order))
    frac = order - n_int
    # order 2 at the upper bound: one exact integer power plus a band-limited unit order
    if n_int == 2:
        n_int, frac = 1, 1.0
    return n_int, frac


def integral_branch(lam: float, template: OustaloupSpec) -> TransferFunction:
    """Realization of ``1/s**lam``; exact for integer orders."""
    n_int, frac = _split_order(lam)
    tf = TransferFunction([1.0], [1.0] + [0.0] * n_int)
    if frac > 0:
        tf = tf * _oustaloup_tf(-frac, template)
    return tf


def derivative_branch(mu: float, template: OustaloupSpec):
    """Split ``s**mu`` into ``(c, H)`` so that ``s**mu e ~ c*de/dt + H[e]``
    with ``H`` proper. ``c`` is nonzero only when ``mu >= 1``."""
    n_int, frac = _split_order(mu)
    if n_int == 0:
        if frac == 0:
            return 0.0, TransferFunction([1.0], [1.0])
        return 0.0, _oustaloup_tf(frac, template)
    if frac == 0:
        return 1.0, TransferFunction([0.0], [1.0])
    # s*H = s*(K + R) = K*s + s*R with R strictly proper, so s*R is proper
    ora = _oustaloup_tf(frac, template)
    K = ora.num[0] / ora.den[0]
    rem = np.polysub(ora.num, K * np.asarray(ora.den))
    return K, TransferFunction(np.polymul(rem, [1.0, 0.0]), ora.den)


class RealizedController:
    """State-space realization of ``Kp + Ki/s**lam + Kd*s**mu``.

    The controller is fed the regulation error ``e = -df``.
    """

    def __init__(self, params: ControllerParams, template: OustaloupSpec = OustaloupSpec()):
        params.check_bounds()
        self.params = params
        self.template = template
        self.integral_tf = integral_branch(params.lam, template)
        self.derivative_gain, self.derivative_tf = derivative_branch(params.mu, template)
        self.integral = tf_to_ss(self.integral_tf)
        self.derivative = tf_to_ss(self.derivative_tf)
        self._prev_error: Optional[float] = None

    def reset(self) -> None:
        self.integral.reset()
        self.derivative.reset()
        self._prev_error = None

    def transfer_function(self, s):
        """Frequency-domain gain of the realized controller at complex ``s``."""
        p = self.params
        return (p.Kp + p.Ki * self.integral_tf(s)
                + p.Kd * (self.derivative_gain * s + self.derivative_tf(s)))

    def step(self, e: float, dt: float, t: float = 0.0,
             dedt: Optional[float] = None) -> float:
        """Advance both branches one step with ``e`` held and return the
        control signal at ``t + dt``.

        ``dedt`` feeds the exact integer differentiator; when omitted it is
        replaced by a backward difference of ``e``.
        """
        if dedt is None:
            prev = e if self._prev_error is None else self._prev_error
            dedt = (e - prev) / dt
        self._prev_error = e
        p = self.params
        yi = rk3_step(self.integral, lambda _t: e, t, dt)
        yd = rk3_step(self.derivative, lambda _t: e, t, dt)
        return p.Kp * e + p.Ki * yi + p.Kd * (yd + self.derivative_gain * dedt)


def build_controller(params: ControllerParams,
                     template: OustaloupSpec = OustaloupSpec()) -> RealizedController:
    return RealizedController(params, template)


def control_output(controller: RealizedController, df: float, t: float, dt: float,
                   dfdt: Optional[float] = None) -> float:
    """Controller output for a frequency-deviation sample ``df`` (error is
    ``-df``)."""
    dedt = None if dfdt is None else -dfdt
    return controller.step(-df, dt, t, dedt)
