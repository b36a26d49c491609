"""Damped-oscillator surrogates for the 1-D lookahead dynamics.

Identifying the iterate sequence theta^(i) with a continuous path x(t)
turns the update rule into x'' + A x' + B x = 0, with coefficients that
depend on which finite-difference reading is used (forward, backward or
midpoint for the velocity).  This module builds the three coefficient
sets, solves the ODE in closed form, integrates it numerically (RK4)
and evaluates the critical-damping prediction for the optimal sigma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

ODE1 = "ode1"  # forward difference reading
ODE2 = "ode2"  # backward difference reading
ODE3 = "ode3"  # midpoint reading
_VARIANTS = (ODE1, ODE2, ODE3)

REGIME_UNDERDAMPED = "underdamped"
REGIME_CRITICAL = "critical"
REGIME_OVERDAMPED = "overdamped"

_REGIME_TOL = 1e-12


@dataclass(frozen=True)
class OdeCoeffs:
    """Damping (A) and stiffness (B) of x'' + A x' + B x = 0."""

    A: float
    B: float
    variant: str
    valid: bool


@dataclass(frozen=True)
class OscillatorSolution:
    """Closed-form solution classified by damping regime.

    underdamped: x = e^{-At/2} (c1 cos(omega t) + c2 sin(omega t))
    critical:    x = e^{-At/2} (c1 + c2 t)
    overdamped:  x = c1 e^{-rate_slow t} + c2 e^{-rate_fast t}

    timescale_initial is 2/A in the (under)critical regimes and
    1/rate_fast (the fast initial decay) in the overdamped regime.
    """

    regime: str
    omega: float
    rate_fast: float
    rate_slow: float
    c1: float
    c2: float
    timescale_initial: float
    A: float
    B: float

    def evaluate(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.regime == REGIME_UNDERDAMPED:
            return np.exp(-0.5 * self.A * t) * (
                self.c1 * np.cos(self.omega * t) + self.c2 * np.sin(self.omega * t)
            )
        if self.regime == REGIME_CRITICAL:
            return np.exp(-0.5 * self.A * t) * (self.c1 + self.c2 * t)
        return self.c1 * np.exp(-self.rate_slow * t) + self.c2 * np.exp(
            -self.rate_fast * t
        )


def ode_coeffs(variant: str, alpha: float, k_eta: float) -> OdeCoeffs:
    """Coefficients of the surrogate ODE for the given reading.

    ode1: A = -alpha,            B = k_eta
    ode2: A = -alpha/(1+alpha),  B = k_eta/(1+alpha)
    ode3: A = -alpha/(1+alpha/2), B = k_eta/(1+alpha/2)

    Returns valid=False (with zeroed coefficients) when the reading's
    denominator is non-positive or the result is not a damped
    oscillator (requires A > 0 and B > 0).
    """
    if variant not in _VARIANTS:
        raise ValueError(f"unknown ODE variant {variant!r}")
    if k_eta <= 0:
        raise ValueError("k_eta must be positive")
    if variant == ODE1:
        denom = 1.0
    elif variant == ODE2:
        denom = 1.0 + alpha
    else:
        denom = 1.0 + alpha / 2.0
    if denom <= 0:
        return OdeCoeffs(A=0.0, B=0.0, variant=variant, valid=False)
    a = -alpha / denom
    b = k_eta / denom
    valid = a > 0 and b > 0
    return OdeCoeffs(A=a, B=b, variant=variant, valid=valid)


def solve_closed_form(coeffs: OdeCoeffs, x0: float, v0: float) -> OscillatorSolution:
    """Closed-form solution with x(0)=x0, x'(0)=v0.

    The regime comes from the sign of B - A^2/4 (tolerance 1e-12).
    """
    if not coeffs.valid:
        raise ValueError("cannot solve: coefficients flagged invalid")
    a, b = coeffs.A, coeffs.B
    disc = b - a * a / 4.0
    tol = _REGIME_TOL * max(1.0, abs(b), a * a / 4.0)
    envelope_timescale = 2.0 / a if a > 0 else math.inf
    if abs(disc) <= tol:
        c1 = x0
        c2 = v0 + 0.5 * a * x0
        return OscillatorSolution(
            regime=REGIME_CRITICAL,
            omega=0.0,
            rate_fast=0.5 * a,
            rate_slow=0.5 * a,
            c1=c1,
            c2=c2,
            timescale_initial=envelope_timescale,
            A=a,
            B=b,
        )
    if disc > 0:
        omega = math.sqrt(disc)
        c1 = x0
        c2 = (v0 + 0.5 * a * x0) / omega
        return OscillatorSolution(
            regime=REGIME_UNDERDAMPED,
            omega=omega,
            rate_fast=0.0,
            rate_slow=0.0,
            c1=c1,
            c2=c2,
            timescale_initial=envelope_timescale,
            A=a,
            B=b,
        )
    omega2 = math.sqrt(-disc)
    rate_fast = 0.5 * a + omega2
    rate_slow = 0.5 * a - omega2
    # x = c1 e^{-rate_slow t} + c2 e^{-rate_fast t}
    c1 = (v0 + rate_fast * x0) / (rate_fast - rate_slow)
    c2 = x0 - c1
    return OscillatorSolution(
        regime=REGIME_OVERDAMPED,
        omega=0.0,
        rate_fast=rate_fast,
        rate_slow=rate_slow,
        c1=c1,
        c2=c2,
        timescale_initial=1.0 / rate_fast,
        A=a,
        B=b,
    )


def integrate_ode(
    coeffs: OdeCoeffs, x0: float, v0: float, t_end: float, dt: float = 0.01
):
    """Classical RK4 on (x, v), sampled at integer times 0..floor(t_end).

    The unit interval between samples is subdivided into round(1/dt)
    equal RK4 steps so samples land exactly on iteration counts.
    Returns (t, x, v) arrays.
    """
    if not coeffs.valid:
        raise ValueError("cannot integrate: coefficients flagged invalid")
    if dt <= 0 or t_end <= 0:
        raise ValueError("dt and t_end must be positive")
    a, b = coeffs.A, coeffs.B
    n_sub = max(1, round(1.0 / dt))
    h = 1.0 / n_sub
    n_samples = int(math.floor(t_end))

    def deriv(x: float, v: float):
        return v, -a * v - b * x

    ts = np.arange(n_samples + 1, dtype=float)
    xs = np.empty(n_samples + 1)
    vs = np.empty(n_samples + 1)
    x, v = float(x0), float(v0)
    xs[0] = x
    vs[0] = v
    for i in range(1, n_samples + 1):
        for _ in range(n_sub):
            k1x, k1v = deriv(x, v)
            k2x, k2v = deriv(x + 0.5 * h * k1x, v + 0.5 * h * k1v)
            k3x, k3v = deriv(x + 0.5 * h * k2x, v + 0.5 * h * k2v)
            k4x, k4v = deriv(x + h * k3x, v + h * k3v)
            x += (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
            v += (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        xs[i] = x
        vs[i] = v
    return ts, xs, vs


def initial_velocity(variant: str, k_eta: float, theta0: float = 1.0) -> float:
    """Initial x'(0) consistent with each reading, for a zero-momentum start.

    The forward reading (ode1) identifies the velocity at t=0 with the
    first update's momentum -k_eta*theta0; the backward reading (ode2)
    with the initial momentum 0; the midpoint reading (ode3) with their
    average.
    """
    if variant not in _VARIANTS:
        raise ValueError(f"unknown ODE variant {variant!r}")
    if variant == ODE1:
        return -k_eta * theta0
    if variant == ODE2:
        return 0.0
    return -0.5 * k_eta * theta0


def path_to_csv(ts, xs, path) -> None:
    """Write a sampled path as CSV (t, x) with exact float round-trip."""
    from .serialize import write_csv

    write_csv(path, ["t", "x"], zip(ts, xs))


def sigma_star_formula(variant: str, k_eta: float, g: float) -> float:
    """Critical-damping prediction of the optimal lookahead sigma.

    ode1: 2/sqrt(k_eta) - (1-g)/k_eta
    ode2: -2 + 2*sqrt(1 + 1/k_eta) - (1-g)/k_eta
    ode3: -1 + sqrt(1 + 4/k_eta) - (1-g)/k_eta

    A negative value means the lookahead brings no benefit at this
    k_eta (any sigma >= 0 is already overdamped).
    """
    if variant not in _VARIANTS:
        raise ValueError(f"unknown ODE variant {variant!r}")
    if k_eta <= 0:
        raise ValueError("k_eta must be positive")
    if variant == ODE1:
        return 2.0 / math.sqrt(k_eta) - (1.0 - g) / k_eta
    if variant == ODE2:
        return -2.0 + 2.0 * math.sqrt(1.0 + 1.0 / k_eta) - (1.0 - g) / k_eta
    return -1.0 + math.sqrt(1.0 + 4.0 / k_eta) - (1.0 - g) / k_eta
