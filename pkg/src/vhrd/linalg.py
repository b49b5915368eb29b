"""Sparse solves, principal eigenvalues and spectral radii of positive operators."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ConvergenceError, PositivityError
from .grid import Field, ModelCoefficients, assemble_diffusion, diffusion_operator

log = logging.getLogger(__name__)

EIG_TOL = 1e-9
LINEAR_TOL = 1e-11
_EPS = np.finfo(float).eps


@dataclass
class EigenResult:
    """Principal eigenpair; ``vector`` is positive with unit max-norm."""

    value: float
    vector: np.ndarray
    residual: float
    iterations: int


def solve_linear(A, b, tol: float = LINEAR_TOL, maxiter: int | None = None,
                 x0: np.ndarray | None = None) -> np.ndarray:
    """Jacobi-preconditioned conjugate gradients for SPD ``A``.

    Stops once ``||A x - b||_2 <= tol * ||b||_2``. Raises
    :class:`ConvergenceError` after ``maxiter`` (default ``10 N``) iterations.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = b.size
    maxiter = 10 * n if maxiter is None else maxiter
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise ValueError("matrix is not positive definite (nonpositive diagonal)")
    inv_diag = 1.0 / diag

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    target = tol * bnorm
    for k in range(maxiter + 1):
        rnorm = np.linalg.norm(r)
        if rnorm <= target:
            return x
        if k == maxiter:
            break
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            raise ValueError("matrix is not positive definite (p^T A p <= 0)")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = inv_diag * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(f"CG did not converge in {maxiter} iterations "
                           f"(relative residual {rnorm / bnorm:.3e})",
                           iterations=maxiter, residual=rnorm / bnorm)


def factorize(A) -> Callable[[np.ndarray], np.ndarray]:
    """Sparse LU of ``A``; returns a reusable solve function."""
    lu = splu(sp.csc_matrix(A))
    return lu.solve


class Resolvent:
    """Solver for ``(shift - L_delta) x = b`` with ``L_delta`` the model diffusion operator.

    Multiplying by the node weights turns the system into the SPD problem
    ``(diag(w * shift) - K) x = w * b``. ``method="direct"`` factorizes it once
    (for repeated applications); ``method="cg"`` calls :func:`solve_linear`.
    """

    def __init__(self, delta: Field, shift, method: str = "direct", tol: float = LINEAR_TOL):
        grid = delta.grid
        shift = np.broadcast_to(np.asarray(shift, dtype=float), (grid.size,))
        if shift.min() <= 0:
            raise ValueError("resolvent shift must be strictly positive")
        self.weights = grid.weights
        self.matrix = (sp.diags(self.weights * shift) - assemble_diffusion(grid, delta)).tocsr()
        self.method = method
        self.tol = tol
        if method == "direct":
            self._solve = factorize(self.matrix)
        elif method == "cg":
            self._solve = lambda rhs: solve_linear(self.matrix, rhs, tol=self.tol)
        else:
            raise ValueError(f"unknown method {method!r}")

    def __call__(self, b: np.ndarray) -> np.ndarray:
        return self._solve(self.weights * np.asarray(b, dtype=float))


def _residual_floor(A) -> float:
    return 100 * _EPS * float(abs(A).sum(axis=1).max())


def _inverse_power(apply_A, solve_shifted, shift, x0, tol, maxiter, rayleigh=None, floor=0.0):
    """Power iteration on the positive resolvent ``(shift - A)^{-1}``.

    The iterate stays strictly positive, so the Collatz-Wielandt ratios
    ``min/max (R x)_i / x_i`` bracket the Perron root of the resolvent.
    Converged when that bracket, mapped to eigenvalues of ``A``, is narrower
    than ``tol``, or when the eigenvalue estimate has stalled and the residual
    is at tolerance.
    """
    x = np.array(x0, dtype=float)
    if np.any(x <= 0):
        raise ValueError("initial iterate must be strictly positive")
    x /= x.max()
    kappa_prev = np.inf
    res_tol = max(tol, floor)
    for k in range(1, maxiter + 1):
        y = solve_shifted(x)
        if np.any(y <= 0):
            raise PositivityError("resolvent of a cooperative operator produced a nonpositive entry")
        ratios = y / x
        rho_lo, rho_hi = ratios.min(), ratios.max()
        bracket = (shift - 1.0 / rho_hi) - (shift - 1.0 / rho_lo)
        x = y / y.max()
        Ax = apply_A(x)
        if rayleigh is not None:
            kappa = rayleigh(x, Ax)
        else:
            kappa = shift - 2.0 / (rho_lo + rho_hi)
        residual = float(np.abs(Ax - kappa * x).max())
        if bracket < tol or (abs(kappa - kappa_prev) < 0.1 * tol and residual <= res_tol * max(1.0, abs(kappa))):
            return EigenResult(float(kappa), x, residual, k)
        kappa_prev = kappa
    raise ConvergenceError(f"principal eigenvalue not converged after {maxiter} iterations "
                           f"(bracket {bracket:.3e})", iterations=maxiter, residual=residual)


def principal_eigenvalue(delta: Field, f, tol: float = EIG_TOL, maxiter: int = 20000,
                         x0: np.ndarray | None = None) -> EigenResult:
    """Principal eigenpair of ``L_delta + diag(f)`` with zero-flux walls.

    Uses inverse power iteration with shift ``max f + 1``, which exceeds the
    principal eigenvalue, so the resolvent is a positive matrix.
    """
    grid = delta.grid
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.size,):
        raise ValueError("f does not match grid")
    K = assemble_diffusion(grid, delta)
    w = grid.weights
    L = diffusion_operator(grid, delta)
    shift = float(f.max()) + 1.0
    lu = factorize(sp.diags(w * (shift - f)) - K)

    def apply_A(x):
        return L @ x + f * x

    def rayleigh(x, Ax):
        return float(np.dot(w * x, Ax) / np.dot(w * x, x))

    x0 = np.ones(grid.size) if x0 is None else x0
    return _inverse_power(apply_A, lambda x: lu(w * x), shift, x0, tol, maxiter,
                          rayleigh=rayleigh, floor=_residual_floor(L))


def cooperative_operator(coeffs: ModelCoefficients, vhat) -> sp.csr_matrix:
    """The 2N x 2N operator of the linearization at the disease-free state.

    Block form ``[[L1 - lambda, sigma1 H_u], [sigma2 V, L2 - mu V]]`` acting on
    the stacked pair ``(phi, psi)``.
    """
    grid = coeffs.grid
    v = np.asarray(vhat, dtype=float)
    L1 = diffusion_operator(grid, coeffs.delta1)
    L2 = diffusion_operator(grid, coeffs.delta2)
    D = sp.diags
    return sp.bmat([
        [L1 - D(coeffs.lambda_.values), D(coeffs.sigma1.values * coeffs.h_u.values)],
        [D(coeffs.sigma2.values * v), L2 - D(coeffs.mu.values * v)],
    ], format="csr")


def cooperative_principal_eigenvalue(coeffs: ModelCoefficients, vhat, tol: float = EIG_TOL,
                                     maxiter: int = 20000) -> EigenResult:
    """Principal eigenvalue and positive eigenvector of :func:`cooperative_operator`.

    The stored vector stacks ``(phi0, psi0)``.
    """
    v = np.asarray(vhat, dtype=float)
    if v.min() <= 0:
        raise ValueError("vhat must be strictly positive")
    A = cooperative_operator(coeffs, v)
    a = coeffs.sigma1.values * coeffs.h_u.values
    b = coeffs.sigma2.values * v
    # row sums bound the spectral abscissa of an essentially nonnegative matrix
    shift = float(max((a - coeffs.lambda_.values).max(), (b - coeffs.mu.values * v).max())) + 1.0
    n = A.shape[0]
    lu = factorize(shift * sp.identity(n, format="csr") - A)
    return _inverse_power(lambda x: A @ x, lu, shift, np.ones(n), tol, maxiter,
                          floor=_residual_floor(A))


def spectral_radius_positive(apply: Callable[[np.ndarray], np.ndarray], n: int,
                             tol: float = EIG_TOL, maxiter: int = 200000) -> float:
    """Spectral radius of a positivity-preserving linear map given by its action.

    Power iteration from the all-ones vector using the max-norm growth ratio.
    Stops when successive estimates differ by less than ``tol``, the
    geometric extrapolation of the remaining error is also below ``tol`` and
    the l1 growth ratio agrees with the max-norm one.
    A collapse to the zero vector returns 0.0 with a logged warning.
    """
    x = np.ones(n)
    rho_prev = None
    step_prev = None
    for k in range(1, maxiter + 1):
        y = np.asarray(apply(x), dtype=float)
        ymax = np.abs(y).max() if y.size else 0.0
        if y.min() < -1e-12 * ymax:
            raise PositivityError("operator mapped a nonnegative vector to one with negative entries")
        if ymax == 0.0:
            log.warning("power iterate collapsed to zero after %d steps; reporting radius 0", k)
            return 0.0
        rho = ymax  # x has unit max-norm
        y = np.clip(y, 0.0, None)
        # at an eigenvector the l1 growth ratio agrees with the max-norm one
        agree = abs(y.sum() / x.sum() - rho) <= max(tol, 4 * _EPS * rho)
        x = y / ymax
        if rho_prev is not None and agree:
            step = abs(rho - rho_prev)
            if step <= max(1e-3 * tol, 4 * _EPS * rho):
                return float(rho)
            if step < tol and step_prev is not None:
                q = step / step_prev
                if q < 1.0 and step * q / (1.0 - q) < tol:
                    return float(rho)
            step_prev = step
        rho_prev = rho
    raise ConvergenceError(f"power iteration did not converge in {maxiter} steps",
                           iterations=maxiter)
