"""Shared scenario builders and dense (numpy.linalg) oracles."""

import numpy as np
import pytest
import scipy.sparse as sp

from vhrd.grid import Bump, ModelCoefficients, Ramp, build_grid, diffusion_operator, field_from_profile

REFERENCE = dict(lam=1.0, sigma1=1.0, h_u=4.0, sigma2=0.5, beta=1.0, mu=1.0)


def constant_coeffs(grid, delta=0.1, **overrides):
    values = dict(REFERENCE, delta1=delta, delta2=delta)
    values.update(overrides)
    return ModelCoefficients.constant(grid, **values)


def random_heterogeneous(grid, rng, delta_range=(0.01, 1.0)):
    """Random smooth positive coefficients with R(x) spread around 1."""
    def bump(lo, hi):
        return field_from_profile(grid, Bump(rng.uniform(lo, hi), rng.uniform(0, hi), rng.uniform(0, 1), rng.uniform(0.1, 0.4))).values

    def ramp(lo, hi):
        return field_from_profile(grid, Ramp(rng.uniform(lo, hi), rng.uniform(lo, hi))).values

    d_lo, d_hi = np.log10(delta_range)
    return ModelCoefficients.constant(grid, **dict(REFERENCE, delta1=1, delta2=1)).replace(
        delta1=ramp(10 ** d_lo, 10 ** d_hi), delta2=bump(10 ** d_lo, 10 ** d_hi),
        lambda_=ramp(0.5, 2.0), beta=bump(0.5, 2.0), sigma1=bump(0.2, 1.5),
        sigma2=ramp(0.2, 1.5), mu=ramp(0.5, 2.0), h_u=bump(0.5, 3.0))


def dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A)


def dense_r0(coeffs, vhat):
    """r(-C B^{-1}) from dense matrices."""
    g = coeffs.grid
    L1 = dense(diffusion_operator(g, coeffs.delta1))
    L2 = dense(diffusion_operator(g, coeffs.delta2))
    v = np.asarray(vhat, dtype=float)
    n = g.size
    Z = np.zeros((n, n))
    B = np.block([[L1 - np.diag(coeffs.lambda_.values), np.diag(coeffs.sigma1.values * coeffs.h_u.values)],
                  [Z, L2 - np.diag(coeffs.mu.values * v)]])
    C = np.block([[Z, Z], [np.diag(coeffs.sigma2.values * v), Z]])
    return float(np.abs(np.linalg.eigvals(-C @ np.linalg.inv(B))).max()), B


def dense_kappa0(coeffs, vhat):
    g = coeffs.grid
    L1 = dense(diffusion_operator(g, coeffs.delta1))
    L2 = dense(diffusion_operator(g, coeffs.delta2))
    v = np.asarray(vhat, dtype=float)
    A = np.block([[L1 - np.diag(coeffs.lambda_.values), np.diag(coeffs.sigma1.values * coeffs.h_u.values)],
                  [np.diag(coeffs.sigma2.values * v), L2 - np.diag(coeffs.mu.values * v)]])
    return float(np.linalg.eigvals(A).real.max())


def dense_kappa1(delta, f):
    L = dense(diffusion_operator(delta.grid, delta))
    return float(np.linalg.eigvals(L + np.diag(np.asarray(f, dtype=float))).real.max())


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def grid51():
    return build_grid(1, 51)
