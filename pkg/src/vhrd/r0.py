"""Basic reproduction number: next-generation operator, factorized form, diffusion limits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .equilibria import compute_vhat
from .grid import Field, ModelCoefficients, diffusion_operator, integrate_field
from .linalg import EIG_TOL, LINEAR_TOL, Resolvent, cooperative_principal_eigenvalue, spectral_radius_positive


def assemble_B_C(coeffs: ModelCoefficients, vhat) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Transition operator ``B`` and new-infection operator ``C`` on stacked ``(phi, psi)``."""
    grid = coeffs.grid
    v = np.asarray(vhat, dtype=float)
    D = sp.diags
    L1 = diffusion_operator(grid, coeffs.delta1)
    L2 = diffusion_operator(grid, coeffs.delta2)
    B = sp.bmat([
        [L1 - D(coeffs.lambda_.values), D(coeffs.sigma1.values * coeffs.h_u.values)],
        [None, L2 - D(coeffs.mu.values * v)],
    ], format="csr")
    n = grid.size
    Z = sp.csr_matrix((n, n))
    C = sp.bmat([[Z, Z], [D(coeffs.sigma2.values * v), Z]], format="csr")
    return B, C


class NextGeneration:
    """Action of ``-C B^{-1}`` through two SPD solves.

    ``-B`` is block upper triangular: solve ``(mu V - L2) psi = v2`` first, then
    ``(lambda - L1) phi = v1 + sigma1 H_u psi``; the result is
    ``(0, sigma2 V phi)``.
    """

    def __init__(self, coeffs: ModelCoefficients, vhat, method: str = "direct", tol: float = LINEAR_TOL):
        v = np.asarray(vhat, dtype=float)
        self.n = coeffs.grid.size
        self.infection = coeffs.sigma1.values * coeffs.h_u.values
        self.transmission = coeffs.sigma2.values * v
        self._hosts = Resolvent(coeffs.delta1, coeffs.lambda_.values, method=method, tol=tol)
        self._vectors = Resolvent(coeffs.delta2, coeffs.mu.values * v, method=method, tol=tol)

    def neg_B_inverse(self, x: np.ndarray) -> np.ndarray:
        x1, x2 = x[:self.n], x[self.n:]
        psi = self._vectors(x2)
        phi = self._hosts(x1 + self.infection * psi)
        return np.concatenate([phi, psi])

    def __call__(self, x: np.ndarray) -> np.ndarray:
        phi = self.neg_B_inverse(x)[:self.n]
        return np.concatenate([np.zeros(self.n), self.transmission * phi])


def compute_r0_direct(coeffs: ModelCoefficients, vhat, tol: float = EIG_TOL,
                      method: str = "direct") -> float:
    """``R0 = r(-C B^{-1})`` by power iteration on the stacked 2N space."""
    ng = NextGeneration(coeffs, vhat, method=method)
    return spectral_radius_positive(ng, 2 * ng.n, tol=tol)


class FactoredOperator:
    """The composition ``L1 R1 L2 R2`` with resolvent-weighted averaging operators.

    ``L1 = (lambda - L_delta1)^{-1} lambda``, ``L2 = (mu V - L_delta2)^{-1} mu V``,
    ``R1 = sigma1 H_u / lambda``, ``R2 = sigma2 / mu``.
    """

    def __init__(self, coeffs: ModelCoefficients, vhat, method: str = "direct"):
        v = np.asarray(vhat, dtype=float)
        self.lam = coeffs.lambda_.values
        self.mu_v = coeffs.mu.values * v
        self.r1 = coeffs.sigma1.values * coeffs.h_u.values / self.lam
        self.r2 = coeffs.sigma2.values / coeffs.mu.values
        self._res1 = Resolvent(coeffs.delta1, self.lam, method=method)
        self._res2 = Resolvent(coeffs.delta2, self.mu_v, method=method)

    def apply_L1(self, x):
        return self._res1(self.lam * x)

    def apply_L2(self, x):
        return self._res2(self.mu_v * x)

    def __call__(self, x):
        return self.apply_L1(self.r1 * self.apply_L2(self.r2 * x))


def compute_r0_factored(coeffs: ModelCoefficients, vhat, tol: float = EIG_TOL,
                        method: str = "direct") -> float:
    op = FactoredOperator(coeffs, vhat, method=method)
    return spectral_radius_positive(op, coeffs.grid.size, tol=tol)


def averaging_radii(coeffs: ModelCoefficients, vhat, tol: float = EIG_TOL) -> tuple[float, float, float]:
    """Spectral radii of ``L1``, ``L2`` and ``L1 L2`` (each is 1 in exact arithmetic)."""
    op = FactoredOperator(coeffs, vhat)
    n = coeffs.grid.size
    return (spectral_radius_positive(op.apply_L1, n, tol=tol),
            spectral_radius_positive(op.apply_L2, n, tol=tol),
            spectral_radius_positive(lambda x: op.apply_L1(op.apply_L2(x)), n, tol=tol))


def local_reproduction_number(coeffs: ModelCoefficients) -> Field:
    """Nodewise ``sigma1 H_u sigma2 / (lambda mu)``."""
    c = coeffs
    values = c.sigma1.values * c.h_u.values * c.sigma2.values / (c.lambda_.values * c.mu.values)
    return Field(coeffs.grid, values)


def diffusion_limit_references(coeffs: ModelCoefficients) -> tuple[float, float]:
    """R0 limits for constant diffusion: ``(large, small)``.

    ``large`` is the product of the lambda-weighted mean of ``R1`` and the
    mu-weighted mean of ``R2``; ``small`` is the maximum of the local
    reproduction number.
    """
    grid = coeffs.grid
    c = coeffs
    r1 = Field(grid, c.sigma1.values * c.h_u.values / c.lambda_.values)
    r2 = Field(grid, c.sigma2.values / c.mu.values)
    large = (integrate_field(r1, c.lambda_) / integrate_field(c.lambda_)
             * integrate_field(r2, c.mu) / integrate_field(c.mu))
    small = local_reproduction_number(coeffs).max()
    return float(large), float(small)


@dataclass
class SpectralReport:
    r0_direct: float
    r0_factored: float
    kappa0: float
    local_r: Field
    limit_large_diffusion: float
    limit_small_diffusion: float

    def as_row(self) -> dict[str, float]:
        return {
            "r0_direct": self.r0_direct,
            "r0_factored": self.r0_factored,
            "kappa0": self.kappa0,
            "local_r_min": self.local_r.min(),
            "local_r_max": self.local_r.max(),
            "limit_large_diffusion": self.limit_large_diffusion,
            "limit_small_diffusion": self.limit_small_diffusion,
        }


def spectral_report(coeffs: ModelCoefficients, vhat: Field | None = None,
                    tol: float = EIG_TOL) -> SpectralReport:
    if vhat is None:
        vhat = compute_vhat(coeffs.delta2, coeffs.beta, coeffs.mu)
    large, small = diffusion_limit_references(coeffs)
    return SpectralReport(
        r0_direct=compute_r0_direct(coeffs, vhat, tol=tol),
        r0_factored=compute_r0_factored(coeffs, vhat, tol=tol),
        kappa0=cooperative_principal_eigenvalue(coeffs, vhat, tol=tol).value,
        local_r=local_reproduction_number(coeffs),
        limit_large_diffusion=large,
        limit_small_diffusion=small,
    )
