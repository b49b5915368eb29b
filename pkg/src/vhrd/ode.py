"""Spatially homogeneous vector-host model: closed forms and RK4 integration.

Serves as the analytic oracle for PDE scenarios with constant coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .errors import StepRejected


@dataclass(frozen=True)
class OdeParams:
    lambda_: float
    sigma1: float
    sigma2: float
    beta: float
    mu: float
    h_u: float

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not value > 0:
                raise ValueError(f"{f.name} must be strictly positive, got {value}")

    @property
    def capacity(self) -> float:
        return self.beta / self.mu


@dataclass(frozen=True)
class OdeState:
    h_i: float
    v_u: float
    v_i: float
    t: float = 0.0

    @property
    def n(self) -> float:
        """Total vectors."""
        return self.v_u + self.v_i

    def as_array(self) -> np.ndarray:
        return np.array([self.h_i, self.v_u, self.v_i])

    def distance(self, other: "OdeState") -> float:
        return float(np.abs(self.as_array() - other.as_array()).max())


def ode_r0(p: OdeParams) -> float:
    return p.sigma1 * p.sigma2 * p.h_u / (p.lambda_ * p.mu)


def ode_equilibria(p: OdeParams) -> tuple[OdeState, OdeState, OdeState | None]:
    """``(ss0, ss1, ss2)``; ``ss2`` is ``None`` unless ``R0 > 1``."""
    r0 = ode_r0(p)
    ss0 = OdeState(0.0, 0.0, 0.0)
    ss1 = OdeState(0.0, p.beta / p.mu, 0.0)
    if r0 <= 1.0:
        return ss0, ss1, None
    ss2 = OdeState(p.beta * (r0 - 1.0) / p.sigma2,
                   p.beta / (r0 * p.mu),
                   p.lambda_ * p.beta * (r0 - 1.0) / (p.h_u * p.sigma1 * p.sigma2))
    return ss0, ss1, ss2


def ode_rhs(y: np.ndarray, p: OdeParams) -> np.ndarray:
    h, vu, vi = y
    n = vu + vi
    infection = p.sigma2 * vu * h
    return np.array([
        -p.lambda_ * h + p.sigma1 * p.h_u * vi,
        -infection + p.beta * n - p.mu * n * vu,
        infection - p.mu * n * vi,
    ])


def reduced_rhs(y: np.ndarray, p: OdeParams) -> np.ndarray:
    h, vi = y
    return np.array([
        -p.lambda_ * h + p.sigma1 * p.h_u * vi,
        p.sigma2 * max(p.capacity - vi, 0.0) * h - p.beta * vi,
    ])


def _rk4(rhs, y, dt, p):
    k1 = rhs(y, p)
    k2 = rhs(y + 0.5 * dt * k1, p)
    k3 = rhs(y + 0.5 * dt * k2, p)
    k4 = rhs(y + dt * k3, p)
    y_new = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    if y_new.min() < 0:
        raise StepRejected(f"RK4 step with dt={dt:g} produced a negative density",
                           suggested_dt=0.5 * dt)
    return y_new


def ode_step(state: OdeState, p: OdeParams, dt: float) -> OdeState:
    if not dt > 0:
        raise ValueError("dt must be positive")
    y = _rk4(ode_rhs, state.as_array(), dt, p)
    return OdeState(*y, t=state.t + dt)


def ode_reduced_step(h_i: float, v_i: float, p: OdeParams, dt: float) -> tuple[float, float]:
    if not dt > 0:
        raise ValueError("dt must be positive")
    h, v = _rk4(reduced_rhs, np.array([h_i, v_i], dtype=float), dt, p)
    return float(h), float(v)


def logistic_closed_form(n0: float, p: OdeParams, t):
    """Solution of ``N' = beta N - mu N^2`` from ``N(0) = n0``."""
    e = np.exp(p.beta * np.asarray(t, dtype=float))
    return p.beta * n0 * e / (p.beta + p.mu * n0 * (e - 1.0))


@dataclass
class OdeTrajectory:
    times: np.ndarray
    states: np.ndarray  # shape (samples, 3)
    settled: bool

    @property
    def final(self) -> OdeState:
        return OdeState(*self.states[-1], t=float(self.times[-1]))


def ode_run(state: OdeState, p: OdeParams, dt: float, horizon: float,
            settle_tol: float | None = None, sample_every: int = 1) -> OdeTrajectory:
    """Integrate with RK4 up to ``horizon`` or until ``|y'|_inf < settle_tol``."""
    n_steps = int(math.ceil(horizon / dt - 1e-9))
    y = state.as_array()
    times, states = [state.t], [y.copy()]
    settled = False
    t = state.t
    for k in range(1, n_steps + 1):
        y = _rk4(ode_rhs, y, dt, p)
        t = state.t + k * dt
        if k % sample_every == 0 or k == n_steps:
            times.append(t)
            states.append(y.copy())
        if settle_tol is not None and np.abs(ode_rhs(y, p)).max() < settle_tol:
            settled = True
            if times[-1] != t:
                times.append(t)
                states.append(y.copy())
            break
    return OdeTrajectory(np.array(times), np.array(states), settled)


def ode_verdict(state: OdeState, p: OdeParams, threshold: float) -> str:
    """Nearest steady state (``ss0``/``ss1``/``ss2``) within ``threshold``, else ``unsettled``."""
    candidates = dict(zip(("ss0", "ss1", "ss2"), ode_equilibria(p)))
    best, dist = "unsettled", math.inf
    for label, eq in candidates.items():
        if eq is None:
            continue
        d = state.distance(eq)
        if d < dist:
            best, dist = label, d
    return best if dist <= threshold else "unsettled"
