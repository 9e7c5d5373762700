"""Semi-implicit projection timestepping (PmII) for the staggered-grid fluid."""
from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp

from .advection import advection
from .grid import MacGrid
from .operators import (boundary_term, divergence, gradient, modified_identity,
                        pressure_laplacian, velocity_laplacian, wall_data)
from .solvers import ChebyshevSmoother, Multigrid, SolverConfig, pcg, zero_mean

log = logging.getLogger(__name__)


class FluidSolver:
    """Owns the operators and preconditioners for one grid and advances it.

    Parameters
    ----------
    grid : MacGrid
        Advanced in place by :meth:`pmii_step` and :meth:`rk2_step`.
    corrected : bool
        Apply the near-wall modified identity and modified Laplacian.
    """

    def __init__(self, grid: MacGrid, config: SolverConfig | None = None, corrected: bool = True):
        self.grid = grid
        self.config = config or SolverConfig()
        self.corrected = corrected
        self.lap = [velocity_laplacian(grid, c, corrected) for c in range(3)]
        self.itilde = [modified_identity(grid, c, corrected) for c in range(3)]
        self.L = pressure_laplacian(grid)
        self._neg_L = (-self.L).tocsr()
        self.mg = Multigrid(self._neg_L, grid.shape, [b.periodic for b in grid.bc],
                            order=self.config.mg_smoothing_order,
                            max_levels=self.config.mg_levels,
                            coarse_size=self.config.mg_coarse_size)
        self._helmholtz = {}
        self.q_half = np.zeros(grid.shape)
        self.last_iterations = {}

    # -- linear solves -----------------------------------------------------

    def helmholtz_operator(self, c: int, coef: float):
        """``(I~ - coef * Lap~, preconditioner)`` for component ``c``, cached by coefficient."""
        key = (c, float(coef))
        if key not in self._helmholtz:
            A = (sp.diags(self.itilde[c].ravel()) - coef * self.lap[c]).tocsr()
            M = ChebyshevSmoother.for_operator(A, self.config.cheby_order) if coef > 0 else None
            if len(self._helmholtz) > 12:
                self._helmholtz.clear()
            self._helmholtz[key] = (A, M)
        return self._helmholtz[key]

    def helmholtz_solve(self, c: int, coef: float, rhs: np.ndarray, x0=None) -> np.ndarray:
        shape = rhs.shape
        if coef == 0.0:
            return rhs / self.itilde[c]
        A, M = self.helmholtz_operator(c, coef)
        x, hist = pcg(A, rhs.ravel(), M, None if x0 is None else x0.ravel(),
                      rtol=self.config.helmholtz_tol, atol=self.config.helmholtz_atol,
                      max_iters=self.config.max_iters, name=f"helmholtz[{c}]")
        self.last_iterations[f"helmholtz{c}"] = len(hist) - 1
        return x.reshape(shape)

    def poisson_solve(self, rhs: np.ndarray, x0=None, atol: float = 0.0) -> np.ndarray:
        """Solve ``Lap q = rhs`` with homogeneous Neumann/periodic ends, zero-mean ``q``."""
        b = np.asarray(rhs, dtype=float).ravel()
        scale = max(np.abs(b).max(), 1e-300)
        if abs(b.mean()) > 1e-8 * scale:
            raise ValueError(f"incompatible Poisson right-hand side (mean {b.mean():.3e})")
        x, hist = pcg(self._neg_L, -b, self.mg, None if x0 is None else x0.ravel(),
                      rtol=self.config.poisson_tol, atol=atol,
                      max_iters=self.config.max_iters, project=zero_mean, name="poisson")
        self.last_iterations["poisson"] = len(hist) - 1
        return zero_mean(x).reshape(self.grid.shape)

    # -- timestepping ------------------------------------------------------

    def _walls(self, c: int, grad_q=None, dt: float = 0.0) -> dict:
        g = self.grid
        return {a: wall_data(g, c, a, grad_q, dt) for a in range(3) if not g.bc[a].periodic}

    def _stage(self, u_old, adv, p_base, force, dt: float, alpha: float, q_lag):
        """One projected stage: returns ``(u_new, p_new, q_new)``."""
        g = self.grid
        k = dt * g.mu / g.rho
        gp = gradient(g, p_base)
        gq = gradient(g, q_lag)
        u_star = [a.copy() for a in u_old]
        for c in range(3):
            sl = g.unknown_slice(c)
            explicit = u_old[c][sl] - dt * adv[c] - (dt / g.rho) * gp[c]
            if force is not None:
                explicit = explicit + (dt / g.rho) * force[c][sl]
            rhs = self.itilde[c] * explicit
            walls_new = self._walls(c, gq, dt)
            rhs = rhs + alpha * k * boundary_term(g, c, walls_new, self.corrected)
            if alpha < 1.0:
                lap_old = (self.lap[c] @ u_old[c][sl].ravel()).reshape(rhs.shape)
                lap_old += boundary_term(g, c, self._walls(c), self.corrected)
                rhs = rhs + (1.0 - alpha) * k * lap_old
            u_star[c][sl] = self.helmholtz_solve(c, alpha * k, rhs, u_old[c][sl])
        g.apply_wall_values(u_star)
        div = divergence(g, u_star)
        cfg = self.config
        q = self.poisson_solve(div / dt, x0=q_lag, atol=cfg.poisson_atol / dt if cfg.poisson_atol else 0.0)
        gq_new = gradient(g, q)
        for c in range(3):
            u_star[c][g.unknown_slice(c)] -= dt * gq_new[c]
        Lq = (self.L @ q.ravel()).reshape(g.shape)
        p_new = p_base + g.rho * q - alpha * dt * g.mu * Lq
        return u_star, p_new, q

    def pmii_step(self, force, dt: float) -> None:
        """Backward-forward Euler step with the PmII projection."""
        g = self.grid
        adv = advection(g)
        g.u, g.p, g.q = self._stage(g.u, adv, g.p, force, dt, 1.0, g.q)
        g.time += dt

    def rk2_step(self, force, dt: float) -> None:
        """Two-stage step: a half-step of the Euler scheme, then a
        Crank-Nicolson step with midpoint advection and pressure."""
        g = self.grid
        u_half, p_half, self.q_half = self._stage(g.u, advection(g), g.p, force,
                                                  0.5 * dt, 1.0, self.q_half)
        adv = advection(g, u_half)
        g.u, g.p, g.q = self._stage(g.u, adv, p_half, force, dt, 0.5, g.q)
        g.time += dt

    def step(self, force, dt: float, scheme: str = "rk2") -> None:
        if scheme == "rk2":
            self.rk2_step(force, dt)
        elif scheme == "pmii":
            self.pmii_step(force, dt)
        else:
            raise ValueError(f"unknown timestepping scheme {scheme!r}")

    def divergence_norm(self) -> float:
        return float(np.abs(divergence(self.grid, self.grid.u)).max())
