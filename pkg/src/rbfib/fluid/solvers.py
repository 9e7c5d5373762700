"""Preconditioned conjugate gradients with Chebyshev and multigrid preconditioners."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)


class SolverDivergence(RuntimeError):
    """An iterative solve failed to reach its tolerance.

    ``history`` holds the residual norm after every iteration.
    """

    def __init__(self, message: str, history):
        super().__init__(message)
        self.history = list(history)


@dataclass(frozen=True)
class SolverConfig:
    helmholtz_tol: float = 1e-10
    poisson_tol: float = 1e-9
    cheby_order: int = 4
    mg_levels: int = 8
    max_iters: int = 200
    # absolute residual floors, in the units of the right-hand side
    helmholtz_atol: float = 0.0
    poisson_atol: float = 0.0
    mg_smoothing_order: int = 3
    mg_coarse_size: int = 4096

    def __post_init__(self):
        for name in ("helmholtz_tol", "poisson_tol"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.cheby_order < 1 or self.max_iters < 1 or self.mg_levels < 1:
            raise ValueError("solver orders and iteration caps must be positive")


def pcg(A, b, M=None, x0=None, rtol=1e-10, atol=0.0, max_iters=200, project=None, name="pcg"):
    """Preconditioned conjugate gradients on a symmetric (semi)definite ``A``.

    ``project`` (optional) maps vectors onto the range of a singular ``A`` and
    is applied to the right-hand side and to every preconditioned residual.
    Returns ``(x, history)``; raises :class:`SolverDivergence` on failure.
    """
    matvec = A.dot if hasattr(A, "dot") else A
    b = np.asarray(b, dtype=float)
    if project is not None:
        b = project(b)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - matvec(x) if x0 is not None else b.copy()
    bnorm = np.linalg.norm(b)
    target = max(rtol * bnorm, atol)
    history = [np.linalg.norm(r)]
    if history[0] <= target:
        return x, history
    z = M(r) if M is not None else r.copy()
    if project is not None:
        z = project(z)
    d = z.copy()
    rz = float(np.dot(r, z))
    for _ in range(max_iters):
        Ad = matvec(d)
        dAd = float(np.dot(d, Ad))
        if dAd <= 0.0:
            raise SolverDivergence(f"{name}: operator not positive definite (d.Ad={dAd:.3e})", history)
        alpha = rz / dAd
        x += alpha * d
        Ad *= alpha
        r -= Ad
        history.append(float(np.sqrt(np.dot(r, r))))
        if history[-1] <= target:
            return x, history
        z = M(r) if M is not None else r.copy()
        if project is not None:
            z = project(z)
        rz_new = float(np.dot(r, z))
        d *= rz_new / rz
        d += z
        rz = rz_new
    raise SolverDivergence(
        f"{name}: no convergence in {max_iters} iterations "
        f"(residual {history[-1]:.3e}, target {target:.3e})", history)


def gershgorin_scaled(A: sp.csr_matrix):
    """Gershgorin interval of ``D^-1 A`` for a symmetric matrix with positive diagonal."""
    d = A.diagonal()
    off = np.asarray(abs(A).sum(axis=1)).ravel() - np.abs(d)
    return float(np.min(1.0 - off / d)), float(np.max(1.0 + off / d))


def power_estimate(A: sp.csr_matrix, dinv: np.ndarray, iters: int = 10, seed: int = 0) -> float:
    """Largest eigenvalue of ``D^-1 A`` by power iteration (a lower estimate)."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(A.shape[0])
    lam = 0.0
    for _ in range(iters):
        y = dinv * (A @ x)
        lam = np.linalg.norm(y) / np.linalg.norm(x)
        x = y / np.linalg.norm(y)
    return float(lam)


class ChebyshevSmoother:
    """Fixed-degree Chebyshev iteration for ``A x = b`` with Jacobi scaling.

    As a map ``b -> x`` (zero initial guess) it is a symmetric polynomial in
    ``D^-1 A`` times ``D^-1``, so it can precondition CG.
    """

    def __init__(self, A: sp.csr_matrix, order: int, lower: float, upper: float):
        if not 0.0 < lower < upper:
            raise ValueError(f"invalid Chebyshev interval [{lower}, {upper}]")
        self.A = A
        self.dinv = 1.0 / A.diagonal()
        self.order = int(order)
        self.theta = 0.5 * (upper + lower)
        self.delta = 0.5 * (upper - lower)

    @classmethod
    def for_operator(cls, A, order, power_iters=10, lower_fraction=None):
        lo_g, hi_g = gershgorin_scaled(A)
        hi = min(hi_g, 1.2 * power_estimate(A, 1.0 / A.diagonal(), power_iters))
        if lower_fraction is not None:
            lo = hi * lower_fraction
        else:
            lo = lo_g
        return cls(A, order, lo, max(hi, lo * (1 + 1e-12)))

    def smooth(self, b: np.ndarray, x: np.ndarray | None = None) -> np.ndarray:
        A, dinv = self.A, self.dinv
        sigma = self.theta / self.delta
        rho = 1.0 / sigma
        if x is None:
            d = dinv * b
            d *= 1.0 / self.theta
            x = d.copy()
        else:
            r = b - A @ x
            r *= dinv
            r *= 1.0 / self.theta
            d = r
            x = x + d
        for _ in range(self.order - 1):
            r = A @ x
            np.subtract(b, r, out=r)
            r *= dinv
            rho_new = 1.0 / (2.0 * sigma - rho)
            d *= rho_new * rho
            r *= 2.0 * rho_new / self.delta
            d += r
            x += d
            rho = rho_new
        return x

    __call__ = smooth


# ---------------------------------------------------------------------------
# geometric multigrid for the cell-centered pressure Laplacian


def prolongation_1d(n_coarse: int, periodic: bool) -> sp.csr_matrix:
    """Cell-centered linear prolongation from ``n_coarse`` to ``2 n_coarse`` cells."""
    rows, cols, vals = [], [], []
    for J in range(n_coarse):
        for fine, nb in ((2 * J, J - 1), (2 * J + 1, J + 1)):
            if periodic or 0 <= nb < n_coarse:
                rows += [fine, fine]
                cols += [J, nb % n_coarse]
                vals += [0.75, 0.25]
            else:
                rows.append(fine)
                cols.append(J)
                vals.append(1.0)
    return sp.csr_matrix((vals, (rows, cols)), shape=(2 * n_coarse, n_coarse))


class Multigrid:
    """V-cycle for a singular (Neumann/periodic) cell-centered Laplacian.

    Coarse operators are Galerkin products ``P^T A P``; the coarsest level is
    solved by a sparse LU factorization with one unknown pinned to remove the
    constant null space.
    """

    def __init__(self, A: sp.csr_matrix, shape, periodic, order: int = 3,
                 max_levels: int = 8, coarse_size: int = 4096):
        self.levels = []
        shape = tuple(shape)
        A = A.tocsr()
        while True:
            can = [n % 2 == 0 and n >= 8 for n in shape]
            n = int(np.prod(shape))
            if len(self.levels) + 1 >= max_levels or not any(can) or n <= 512:
                break
            parts = [prolongation_1d(m // 2, per) if c else sp.identity(m, format="csr")
                     for m, per, c in zip(shape, periodic, can)]
            P = sp.kron(sp.kron(parts[0], parts[1]), parts[2], format="csr")
            smoother = ChebyshevSmoother.for_operator(A, order, lower_fraction=0.125)
            self.levels.append((A, P, smoother))
            A = (P.T @ A @ P).tocsr()
            shape = tuple(m // 2 if c else m for m, c in zip(shape, can))
        n = A.shape[0]
        if n > coarse_size:
            raise ValueError(f"coarsest multigrid level has {n} unknowns; grid sizes need "
                             f"more factors of two (limit {coarse_size})")
        # pin the first unknown; restricted residuals keep zero sum, so the
        # pinned system is consistent and the mean is removed afterwards
        A = A.tolil()
        A[0, :] = 0.0
        A[:, 0] = 0.0
        A[0, 0] = 1.0
        self.coarse = spla.splu(A.tocsc())
        self.coarse_shape = shape

    def _cycle(self, level: int, b: np.ndarray) -> np.ndarray:
        if level == len(self.levels):
            rhs = b.copy()
            rhs[0] = 0.0
            x = self.coarse.solve(rhs)
            return x - x.mean()
        A, P, smoother = self.levels[level]
        x = smoother.smooth(b)
        r = b - A @ x
        x = x + P @ self._cycle(level + 1, P.T @ r)
        return smoother.smooth(b, x)

    def __call__(self, b: np.ndarray) -> np.ndarray:
        return self._cycle(0, b)


def zero_mean(v: np.ndarray) -> np.ndarray:
    return v - v.mean()
