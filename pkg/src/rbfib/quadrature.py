"""Meshless quadrature on the unit sphere and its mapping to deformed surfaces."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

from .rbf import RCOND_FLOOR, IllPosedSiteSet, phs_kernel
from .sphere import as_sites

SPHERE_AREA = 4.0 * np.pi


class DegenerateSurface(ValueError):
    """A surface Jacobian is non-positive (collapsed or inverted parametrization)."""


@dataclass(frozen=True, eq=False)
class SphereWeights:
    """Weights ``omega`` on the sphere and ``sigma = sec(phi) * omega`` in parameter space."""

    sites: np.ndarray
    omega: np.ndarray
    sigma: np.ndarray
    kernel_integral: float  # approximates the sphere integral of r, i.e. -I_phi

    def integrate(self, values) -> np.ndarray:
        return np.tensordot(self.omega, np.asarray(values, dtype=float), axes=(0, 0))


def sphere_weights(sample_sites) -> SphereWeights:
    """Quadrature weights from the bordered linear system with kernel ``phi(r) = r``.

    The weights sum to the sphere area; the Lagrange multiplier approximates
    the (constant) integral of the kernel over the sphere.
    """
    sites = as_sites(sample_sites).copy()
    if np.any(np.abs(np.cos(sites[:, 1])) < 1e-14):
        raise ValueError("quadrature sites must avoid the poles")
    n = sites.shape[0]
    A = np.empty((n + 1, n + 1))
    phi = phs_kernel(sites, sites, 1)
    A[:n, :n] = 0.5 * (phi + phi.T)
    A[:n, n] = 1.0
    A[n, :n] = 1.0
    A[n, n] = 0.0
    anorm = np.abs(A).sum(axis=0).max()
    ldu, ipiv, info = lapack.dsytrf(A, overwrite_a=True)
    del A
    if info > 0:
        raise IllPosedSiteSet("quadrature system is singular; sample sites contain duplicates")
    rcond, _ = lapack.dsycon(ldu, ipiv, anorm)
    if rcond < RCOND_FLOOR:
        raise IllPosedSiteSet(f"quadrature system is numerically singular (rcond={rcond:.3e})")
    rhs = np.zeros(n + 1)
    rhs[n] = SPHERE_AREA
    sol, info = lapack.dsytrs(ldu, ipiv, rhs)
    if info != 0:
        raise np.linalg.LinAlgError(f"dsytrs failed with info={info}")
    omega = sol[:n]
    # one refinement pass tightens the sum constraint to roundoff
    omega = omega + (SPHERE_AREA - omega.sum()) / n
    sigma = omega / np.cos(sites[:, 1])
    return SphereWeights(sites, omega, sigma, float(-sol[n]))


def surface_weights(sigma, jacobians) -> np.ndarray:
    """Area weights ``w_j = sigma_j * J_j`` on the current surface."""
    J = np.asarray(jacobians, dtype=float)
    if np.any(J <= 0.0):
        bad = int(np.count_nonzero(J <= 0.0))
        raise DegenerateSurface(f"{bad} sites have non-positive surface Jacobian")
    return np.asarray(sigma, dtype=float) * J


def product_rule(n_theta: int, n_phi: int):
    """Tensor Gauss-Legendre (latitude) x trapezoid (longitude) rule in parameter space.

    Returns ``(sites, weights)`` with weights for ``d theta d phi``; multiply by
    ``cos(phi)`` to integrate against the sphere measure.  Used as a brute-force
    reference for smooth integrands.
    """
    x, wx = np.polynomial.legendre.leggauss(n_phi)
    phi = 0.5 * np.pi * x
    wphi = 0.5 * np.pi * wx
    theta = -np.pi + (np.arange(n_theta) + 1.0) * (2.0 * np.pi / n_theta)
    T, P = np.meshgrid(theta, phi, indexing="ij")
    W = np.broadcast_to(wphi[None, :] * (2.0 * np.pi / n_theta), T.shape)
    return np.column_stack([T.ravel(), P.ravel()]), W.ravel().copy()
