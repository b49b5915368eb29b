"""IMEX time integration of the full model, its limit system and the logistic equation.

Every step is ``u_new = (I - dt L)^{-1} (u + dt R(u))``: the reaction is taken
explicitly from the current state and diffusion implicitly. Steady states of
the discrete scheme are then exactly the discrete steady states computed in
:mod:`vhrd.equilibria`. The explicit reaction keeps densities nonnegative as
long as ``dt`` times the per-capita loss rate stays below one, and
``(I - dt L)^{-1}`` is a positive matrix, so no clamping is ever applied; a
negative value means the step is rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .errors import StepRejected
from .grid import Field, ModelCoefficients, assemble_diffusion
from .linalg import factorize
from .state import SimState


def box_bound(coeffs: ModelCoefficients, vhat) -> float:
    """Radius ``M`` of the absorbing box for all three densities."""
    v = float(np.max(vhat)) + 1.0
    host = (coeffs.sigma1.values * coeffs.h_u.values).max() * v / coeffs.lambda_.min() + 1.0
    return float(max(v, host))


def max_stable_dt(coeffs: ModelCoefficients, bound: float) -> float:
    """Largest step the explicit reaction tolerates when all densities are below ``bound``."""
    rate = (coeffs.lambda_.max() + coeffs.sigma2.max() * bound
            + 2 * coeffs.mu.max() * bound + coeffs.beta.max())
    return 0.5 / rate


class Integrator:
    """Fixed-step IMEX integrator; factorizes the implicit diffusion solves once."""

    def __init__(self, coeffs: ModelCoefficients, dt: float, vhat=None):
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.coeffs = coeffs
        self.dt = float(dt)
        grid = coeffs.grid
        self.w = grid.weights
        W = sp.diags(self.w)
        self._implicit1 = factorize(W - self.dt * assemble_diffusion(grid, coeffs.delta1))
        self._implicit2 = factorize(W - self.dt * assemble_diffusion(grid, coeffs.delta2))
        self.vhat = None if vhat is None else np.asarray(vhat, dtype=float)
        c = coeffs
        self._lam = c.lambda_.values
        self._inf = c.sigma1.values * c.h_u.values
        self._s2 = c.sigma2.values
        self._beta = c.beta.values
        self._mu = c.mu.values

    def diffuse_hosts(self, u):
        return self._implicit1(self.w * u)

    def diffuse_vectors(self, u):
        return self._implicit2(self.w * u)

    def _reject(self, what: str, rate: float):
        raise StepRejected(f"negative {what} after explicit reaction step with dt={self.dt:g}",
                           suggested_dt=0.5 / rate)

    def step_full(self, state: SimState) -> SimState:
        h, vu, vi = state.fields()
        dt = self.dt
        v = vu + vi
        infection = self._s2 * vu * h
        h_star = h + dt * (-self._lam * h + self._inf * vi)
        vu_star = vu + dt * (-infection + self._beta * v - self._mu * v * vu)
        vi_star = vi + dt * (infection - self._mu * v * vi)
        if h_star.min() < 0 or vu_star.min() < 0 or vi_star.min() < 0:
            rate = float(max(self._lam.max(), (self._s2 * h + self._mu * v).max()))
            self._reject("density", rate)
        return SimState(self.diffuse_hosts(h_star), self.diffuse_vectors(vu_star),
                        self.diffuse_vectors(vi_star), state.t + dt)

    def step_limit(self, h: np.ndarray, vi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self.vhat is None:
            raise ValueError("limit system needs vhat")
        dt = self.dt
        gap = np.clip(self.vhat - vi, 0.0, None)
        h_star = h + dt * (-self._lam * h + self._inf * vi)
        vi_star = vi + dt * (self._s2 * gap * h - self._mu * self.vhat * vi)
        if h_star.min() < 0 or vi_star.min() < 0:
            rate = float(max(self._lam.max(), (self._s2 * h + self._mu * self.vhat).max()))
            self._reject("density", rate)
        return self.diffuse_hosts(h_star), self.diffuse_vectors(vi_star)

    def step_logistic(self, v: np.ndarray) -> np.ndarray:
        v_star = v + self.dt * (self._beta * v - self._mu * v * v)
        if v_star.min() < 0:
            self._reject("vector density", float((self._mu * v).max()))
        return self.diffuse_vectors(v_star)


def step_full(state: SimState, coeffs: ModelCoefficients, dt: float) -> SimState:
    return Integrator(coeffs, dt).step_full(state)


def step_limit(state2: tuple[np.ndarray, np.ndarray], coeffs: ModelCoefficients, vhat,
               dt: float) -> tuple[np.ndarray, np.ndarray]:
    h, vi = state2
    return Integrator(coeffs, dt, vhat).step_limit(np.asarray(h, float), np.asarray(vi, float))


def step_logistic(v, coeffs: ModelCoefficients, dt: float) -> np.ndarray:
    return Integrator(coeffs, dt).step_logistic(np.asarray(v, dtype=float))


@dataclass
class TrajectoryRecord:
    """Sampled sup-norms of a run; ``v_dev`` is ``||V_u + V_i - vhat||_inf``."""

    dt: float
    times: list[float] = field(default_factory=list)
    steps: list[int] = field(default_factory=list)
    h_i: list[float] = field(default_factory=list)
    v_u: list[float] = field(default_factory=list)
    v_i: list[float] = field(default_factory=list)
    v_dev: list[float] = field(default_factory=list)
    snapshots: dict[int, SimState] = field(default_factory=dict)
    final: SimState | None = None
    settled: bool = False

    COLUMNS = ("t", "h_i_max", "v_u_max", "v_i_max", "v_dev")

    def add(self, step: int, state: SimState, vhat, keep: bool):
        if self.steps and step <= self.steps[-1]:
            return
        self.steps.append(step)
        self.times.append(state.t)
        self.h_i.append(float(np.abs(state.h_i).max()))
        self.v_u.append(float(np.abs(state.v_u).max()))
        self.v_i.append(float(np.abs(state.v_i).max()))
        dev = np.nan if vhat is None else float(np.abs(state.v_u + state.v_i - vhat).max())
        self.v_dev.append(dev)
        if keep:
            self.snapshots[step] = SimState(state.h_i.copy(), state.v_u.copy(), state.v_i.copy(), state.t)

    def rows(self):
        return zip(self.times, self.h_i, self.v_u, self.v_i, self.v_dev)

    def column(self, selector: str) -> np.ndarray:
        if selector == "infected":
            return np.asarray(self.h_i) + np.asarray(self.v_i)
        if selector in ("h_i", "v_u", "v_i", "v_dev"):
            return np.asarray(getattr(self, selector))
        raise ValueError(f"unknown selector {selector!r}")


def classify(state: SimState, equilibria, threshold: float) -> tuple[str, float]:
    """Nearest equilibrium label and distance; ``unsettled`` beyond ``threshold``."""
    best, dist = "unsettled", math.inf
    for label, eq in equilibria.candidates().items():
        d = state.distance(eq)
        if d < dist:
            best, dist = label, d
    return (best if dist <= threshold else "unsettled"), dist


def run_until_steady(initial: SimState, coeffs: ModelCoefficients, dt: float | None = None,
                     horizon: float = 100.0, settle_tol: float = 1e-8, equilibria=None,
                     sample_every: int | None = None, keep_snapshots: bool = False,
                     classify_tol: float | None = None,
                     progress: Callable[[SimState], None] | None = None):
    """Integrate until the max nodewise rate of change drops below ``settle_tol``.

    Returns ``(record, verdict)``. The verdict labels the terminal state by
    its nearest equilibrium if that lies within ``classify_tol`` (default
    ``20 settle_tol``) in sup norm, else ``"unsettled"``. Stopping is decided
    by rate of change only, so a slowly converging run that stops early is
    reported as unsettled rather than near an equilibrium.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if equilibria is None:
        from .equilibria import enumerate_equilibria
        equilibria = enumerate_equilibria(coeffs)
    vhat = equilibria.vhat.values
    if dt is None:
        bound = max(box_bound(coeffs, vhat), max(float(f.max()) for f in initial.fields()))
        dt = max_stable_dt(coeffs, bound)
    n_steps = int(math.ceil(horizon / dt - 1e-9))
    if sample_every is None:
        sample_every = max(1, n_steps // 2000)
    integ = Integrator(coeffs, dt, vhat)
    record = TrajectoryRecord(dt=dt)
    state = SimState(initial.h_i, initial.v_u, initial.v_i, initial.t)
    if not state.is_nonnegative():
        raise ValueError("initial state must be nonnegative")
    record.add(0, state, vhat, keep_snapshots)
    for k in range(1, n_steps + 1):
        new = integ.step_full(state)
        rate = max(float(np.abs(a - b).max()) for a, b in zip(new.fields(), state.fields())) / dt
        state = new
        if k % sample_every == 0:
            record.add(k, state, vhat, keep_snapshots)
            if progress is not None:
                progress(state)
        if rate < settle_tol:
            record.settled = True
            break
    record.add(k, state, vhat, keep_snapshots)
    record.final = state
    threshold = 20 * settle_tol if classify_tol is None else classify_tol
    verdict, _ = classify(state, equilibria, threshold)
    return record, verdict


def verify_logistic_reduction(record: TrajectoryRecord, coeffs: ModelCoefficients,
                              initial: SimState) -> float:
    """Max over recorded snapshots of ``||(V_u + V_i) - V||_inf``.

    ``V`` is integrated on its own from ``V_u(0) + V_i(0)`` with the same step.
    """
    if not record.snapshots:
        raise ValueError("trajectory has no snapshots; rerun with keep_snapshots=True")
    integ = Integrator(coeffs, record.dt)
    v = initial.v_u + initial.v_i
    worst = 0.0
    step = 0
    for target in sorted(record.snapshots):
        while step < target:
            v = integ.step_logistic(v)
            step += 1
        snap = record.snapshots[target]
        worst = max(worst, float(np.abs(snap.v_u + snap.v_i - v).max()))
    return worst


def run_logistic(v0, coeffs: ModelCoefficients, dt: float, horizon: float, vhat=None,
                 sample_every: int = 1) -> TrajectoryRecord:
    """Logistic run recorded in the ``v_u`` column (``h_i`` and ``v_i`` are zero)."""
    integ = Integrator(coeffs, dt)
    n = coeffs.grid.size
    v = np.array(v0, dtype=float)
    record = TrajectoryRecord(dt=dt)
    zeros = np.zeros(n)
    vh = None if vhat is None else np.asarray(vhat, dtype=float)
    record.add(0, SimState(zeros, v, zeros, 0.0), vh, False)
    n_steps = int(math.ceil(horizon / dt - 1e-9))
    for k in range(1, n_steps + 1):
        v = integ.step_logistic(v)
        if k % sample_every == 0 or k == n_steps:
            record.add(k, SimState(zeros, v, zeros, k * dt), vh, False)
    record.final = SimState(zeros, v, zeros, n_steps * dt)
    return record


def run_limit(h0, v0, coeffs: ModelCoefficients, vhat, dt: float, horizon: float,
              sample_every: int = 1) -> TrajectoryRecord:
    """Limit-system run; ``v_u`` holds ``vhat - V_i`` so ``v_dev`` is zero."""
    vhat = np.asarray(vhat, dtype=float)
    integ = Integrator(coeffs, dt, vhat)
    h, vi = np.array(h0, dtype=float), np.array(v0, dtype=float)
    record = TrajectoryRecord(dt=dt)
    record.add(0, SimState(h, vhat - vi, vi, 0.0), vhat, False)
    n_steps = int(math.ceil(horizon / dt - 1e-9))
    for k in range(1, n_steps + 1):
        h, vi = integ.step_limit(h, vi)
        if k % sample_every == 0 or k == n_steps:
            record.add(k, SimState(h, vhat - vi, vi, k * dt), vhat, False)
    record.final = SimState(h, vhat - vi, vi, n_steps * dt)
    return record


def measure_decay_rate(record: TrajectoryRecord, selector: str, window: tuple[float, float]) -> float:
    """Least-squares slope of ``log`` of the selected norm over ``window``.

    Raises ``ValueError`` if the norms in the window are not strictly
    positive and nonincreasing.
    """
    t = np.asarray(record.times)
    y = record.column(selector)
    mask = (t >= window[0]) & (t <= window[1])
    if mask.sum() < 2:
        raise ValueError("window holds fewer than two samples")
    t, y = t[mask], y[mask]
    if np.any(~(y > 0)):
        raise ValueError("non-positive norm inside the window")
    if np.any(np.diff(y) > 0):
        raise ValueError("norm is not monotonically decaying inside the window")
    slope, _ = np.polyfit(t, np.log(y), 1)
    return float(slope)


def initial_state(h_i: Field, v_u: Field, v_i: Field) -> SimState:
    for f in (h_i, v_u, v_i):
        if f.min() < 0:
            raise ValueError("initial densities must be nonnegative")
    return SimState(h_i.values, v_u.values, v_i.values, 0.0)
