"""Steady states: vector carrying capacity, disease-free and endemic equilibria."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import ConvergenceError
from .grid import Field, ModelCoefficients, assemble_diffusion, diffusion_operator
from .linalg import EIG_TOL, Resolvent, cooperative_principal_eigenvalue
from .state import SimState

log = logging.getLogger(__name__)

EQ_TOL = 1e-10
_EPS = np.finfo(float).eps


def _roundoff_floor(L, scale: float) -> float:
    return 100 * _EPS * float(abs(L).sum(axis=1).max()) * max(scale, 1.0)


def logistic_residual(delta2: Field, beta: Field, mu: Field, v) -> np.ndarray:
    """Nodewise ``-L2 V - beta V + mu V^2``."""
    v = np.asarray(v, dtype=float)
    L = diffusion_operator(delta2.grid, delta2)
    return -(L @ v) - beta.values * v + mu.values * v * v


def compute_vhat(delta2: Field, beta: Field, mu: Field, tol: float = EQ_TOL,
                 maxiter: int = 100) -> Field:
    """Positive steady state of the logistic reaction-diffusion equation.

    Damped Newton from ``beta / mu``. The tolerance is on the sup-norm of
    :func:`logistic_residual`, floored at the roundoff level of the operator.
    """
    grid = delta2.grid
    b, m = beta.values, mu.values
    w = grid.weights
    K = assemble_diffusion(grid, delta2)
    L = diffusion_operator(grid, delta2)

    def residual(v):
        return -(L @ v) - b * v + m * v * v

    v = b / m
    r = residual(v)
    rnorm = np.abs(r).max()
    floor = _roundoff_floor(L, v.max())
    for it in range(maxiter):
        if rnorm <= tol:
            return Field(grid, v)
        # weighted symmetric Jacobian: W (-L - beta + 2 mu V) = -K + W diag(2 mu V - beta)
        J = (sp.diags(w * (2 * m * v - b)) - K).tocsc()
        step = spsolve(J, w * r)
        damping = 1.0
        while damping > 1e-8:
            trial = v - damping * step
            if trial.min() > 0:
                r_trial = residual(trial)
                if np.abs(r_trial).max() < rnorm:
                    break
            damping *= 0.5
        else:
            if rnorm <= floor:
                return Field(grid, v)  # stalled at roundoff
            raise ConvergenceError(f"Newton line search failed (residual {rnorm:.3e})",
                                   iterations=it, residual=rnorm)
        previous = rnorm
        v, r = trial, r_trial
        rnorm = np.abs(r).max()
        if rnorm <= floor and rnorm > 0.5 * previous:
            return Field(grid, v)
    if rnorm <= max(tol, floor):
        return Field(grid, v)
    raise ConvergenceError(f"Newton did not converge in {maxiter} steps (residual {rnorm:.3e})",
                           iterations=maxiter, residual=rnorm)


def steady_residual(coeffs: ModelCoefficients, state: SimState) -> np.ndarray:
    """Sup-norm residuals of the three steady-state equations, in equation order."""
    grid = coeffs.grid
    L1 = diffusion_operator(grid, coeffs.delta1)
    L2 = diffusion_operator(grid, coeffs.delta2)
    h, vu, vi = state.fields()
    v = vu + vi
    c = coeffs
    r1 = L1 @ h - c.lambda_.values * h + c.sigma1.values * c.h_u.values * vi
    r2 = L2 @ vu - c.sigma2.values * vu * h + c.beta.values * v - c.mu.values * v * vu
    r3 = L2 @ vi + c.sigma2.values * vu * h - c.mu.values * v * vi
    return np.array([np.abs(r1).max(), np.abs(r2).max(), np.abs(r3).max()])


class EndemicMap:
    """Monotone map whose nontrivial fixed point is the endemic infected-vector density.

    ``f(v) = (c2 - L2)^{-1} [sigma2 (V - v)^+ (lambda - L1)^{-1}(sigma1 H_u v) + (c2 - mu V) v]``
    """

    def __init__(self, coeffs: ModelCoefficients, vhat, c2: float):
        self.vhat = np.asarray(vhat, dtype=float)
        self.c2 = float(c2)
        self.mu_v = coeffs.mu.values * self.vhat
        if self.c2 <= self.mu_v.max():
            raise ValueError("c2 must exceed max(mu * vhat)")
        self.sigma2 = coeffs.sigma2.values
        self.infection = coeffs.sigma1.values * coeffs.h_u.values
        self._host = Resolvent(coeffs.delta1, coeffs.lambda_.values)
        self._vector = Resolvent(coeffs.delta2, self.c2)

    def host_response(self, v_i: np.ndarray) -> np.ndarray:
        """Infected hosts in balance with ``v_i``: ``(lambda - L1)^{-1}(sigma1 H_u v_i)``."""
        return self._host(self.infection * v_i)

    def __call__(self, v_i) -> np.ndarray:
        v_i = np.asarray(v_i, dtype=float)
        h = self.host_response(v_i)
        g = self.sigma2 * np.clip(self.vhat - v_i, 0.0, None) * h + (self.c2 - self.mu_v) * v_i
        return self._vector(g)


def default_c2(coeffs: ModelCoefficients, vhat, bound) -> float:
    """Shift making :class:`EndemicMap` monotone on ``0 <= v <= bound``.

    Uses ``||(lambda - L1)^{-1} g||_inf <= ||g||_inf / min(lambda)``.
    """
    vhat = np.asarray(vhat, dtype=float)
    rho = (coeffs.sigma1.values * coeffs.h_u.values).max() * float(np.max(bound)) / coeffs.lambda_.min()
    return float((coeffs.mu.values * vhat).max() + coeffs.sigma2.max() * rho + 1.0)


def endemic_fixed_point_map(v_i, coeffs: ModelCoefficients, vhat, c2: float) -> np.ndarray:
    """One application of :class:`EndemicMap` (builds the solvers each call)."""
    return EndemicMap(coeffs, vhat, c2)(v_i)


@dataclass
class EndemicSolution:
    h_i: Field
    v_u: Field
    v_i: Field
    sub: np.ndarray
    super: np.ndarray
    iterations: int
    c2: float
    residual: float


def compute_endemic(coeffs: ModelCoefficients, vhat, tol: float = EQ_TOL, r0: float | None = None,
                    c2: float | None = None, super_scale: float = 2.0,
                    maxiter: int = 500000, r0_margin: float = 10 * EIG_TOL) -> EndemicSolution | None:
    """Endemic equilibrium by monotone iteration from a sub- and a super-solution.

    Returns ``None`` when ``R0 <= 1 + r0_margin``: the endemic branch leaves
    ``E1`` with amplitude proportional to ``R0 - 1``, so it cannot be resolved
    when ``R0`` is 1 to within eigenvalue tolerance. The sub-solution is ``eps * psi0`` with
    ``psi0`` the vector block of the principal eigenvector of the
    linearization at the disease-free state and ``eps`` the largest power of
    1/2 that one map application increases; the super-solution is
    ``super_scale * vhat``. Both sequences are iterated until they agree within
    ``tol`` and the steady-state residual is within ``10 tol`` (roundoff
    floored). A bracket violation means ``c2`` is too small and raises.
    """
    grid = coeffs.grid
    vhat = np.asarray(vhat, dtype=float)
    if r0 is None:
        from .r0 import compute_r0_direct
        r0 = compute_r0_direct(coeffs, Field(grid, vhat))
    if r0 <= 1.0 + r0_margin:
        return None
    if super_scale < 1.0:
        raise ValueError("super_scale must be >= 1")
    upper = super_scale * vhat
    if c2 is None:
        c2 = default_c2(coeffs, vhat, upper)
    fmap = EndemicMap(coeffs, vhat, c2)

    eig = cooperative_principal_eigenvalue(coeffs, vhat)
    psi0 = eig.vector[grid.size:]
    eps = 1.0
    for _ in range(80):
        lower = eps * psi0
        if np.all(lower <= upper) and np.any(lower < vhat) and np.all(fmap(lower) >= lower):
            break
        eps *= 0.5
    else:
        raise ConvergenceError("no sub-solution found along the principal eigenvector")

    L1 = diffusion_operator(grid, coeffs.delta1)
    L2 = diffusion_operator(grid, coeffs.delta2)
    res_target = 10 * tol + _roundoff_floor(L1 + L2, float(upper.max()) + float(coeffs.h_u.max()))
    slack = 1e-12 * float(upper.max())
    sub, sup = lower, upper
    for k in range(1, maxiter + 1):
        new_sub, new_sup = fmap(sub), fmap(sup)
        if (np.any(new_sub < sub - slack) or np.any(new_sup > sup + slack)
                or np.any(new_sub > new_sup + slack)):
            raise ConvergenceError(
                f"sub/super iterates lost their ordering at step {k}; c2={c2:g} is too small",
                iterations=k)
        sub, sup = new_sub, new_sup
        if np.abs(sup - sub).max() <= tol:
            v_i = 0.5 * (sub + sup)
            h_i = fmap.host_response(v_i)
            state = SimState(h_i, vhat - v_i, v_i)
            residual = float(steady_residual(coeffs, state).max())
            if residual <= res_target:
                return EndemicSolution(Field(grid, h_i), Field(grid, vhat - v_i), Field(grid, v_i),
                                       sub, sup, k, c2, residual)
    raise ConvergenceError(f"monotone iteration not converged after {maxiter} steps "
                           f"(gap {np.abs(sup - sub).max():.3e})", iterations=maxiter)


@dataclass
class EquilibriumSet:
    e0: SimState
    e1: SimState
    e2: SimState | None
    r0_context: float
    vhat: Field

    def candidates(self) -> dict[str, SimState]:
        out = {"E0": self.e0, "E1": self.e1}
        if self.e2 is not None:
            out["E2"] = self.e2
        return out


def enumerate_equilibria(coeffs: ModelCoefficients, tol: float = EQ_TOL) -> EquilibriumSet:
    from .r0 import compute_r0_direct

    n = coeffs.grid.size
    vhat = compute_vhat(coeffs.delta2, coeffs.beta, coeffs.mu, tol=tol)
    r0 = compute_r0_direct(coeffs, vhat)
    endemic = compute_endemic(coeffs, vhat, tol=tol, r0=r0)
    e2 = None
    if endemic is not None:
        e2 = SimState(endemic.h_i.values, endemic.v_u.values, endemic.v_i.values)
    return EquilibriumSet(SimState.zeros(n), SimState(np.zeros(n), vhat.values, np.zeros(n)),
                          e2, r0, vhat)
