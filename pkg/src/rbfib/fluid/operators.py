"""Discrete operators on the staggered grid.

Velocity unknowns of component ``c`` are the non-wall faces, flattened in C
order.  Laplacians are assembled as Kronecker sums of one-dimensional second
differences:

* periodic axis: circulant ``[1, -2, 1] / h^2``;
* Dirichlet axis, tangential component: a ghost value ``2 gamma - u`` behind the
  wall, giving ``-3`` on the end diagonals and an affine term ``2 gamma / h^2``;
* Dirichlet axis, normal component: the wall face is known, giving an affine
  term ``gamma / h^2``;
* pressure on a Dirichlet axis: homogeneous Neumann, ``-1`` on the end diagonals.

The near-wall rows of tangential components are the ones the ghost stencil gets
wrong by a factor ``3/4``; the modified identity scales every other term of
those equations by ``3/4`` so that the Helmholtz matrix stays symmetric.
"""
from __future__ import annotations

from functools import reduce

import numpy as np
import scipy.sparse as sp

from .grid import MacGrid

NEAR_WALL_FACTOR = 0.75


def second_difference_1d(n: int, h: float, kind: str) -> sp.csr_matrix:
    """One-dimensional second difference for ``kind`` in
    ``{"periodic", "tangential", "normal", "neumann"}``."""
    if kind == "normal":
        n = n - 1
    main = np.full(n, -2.0)
    off = np.ones(n - 1)
    if kind == "tangential":
        main[0] = main[-1] = -3.0
    elif kind == "neumann":
        main[0] = main[-1] = -1.0
    elif kind not in ("periodic", "normal"):
        raise ValueError(f"unknown stencil kind {kind!r}")
    D = sp.diags([off, main, off], [-1, 0, 1], shape=(n, n), format="lil")
    if kind == "periodic":
        D[0, n - 1] += 1.0
        D[n - 1, 0] += 1.0
    return (D.tocsr() / (h * h)).astype(float)


def ghost_fill(interior, gamma):
    """Ghost value behind a wall for a tangential component: the linear
    extrapolation ``2 gamma - u`` through the wall value ``gamma``."""
    if gamma is None:
        raise ValueError("a Dirichlet wall needs boundary data")
    return 2.0 * np.asarray(gamma, dtype=float) - np.asarray(interior, dtype=float)


def _axis_kind(grid: MacGrid, c: int | None, a: int) -> str:
    if grid.bc[a].periodic:
        return "periodic"
    if c is None:
        return "neumann"
    return "normal" if a == c else "tangential"


def _kron_axis(mats_or_sizes) -> sp.csr_matrix:
    parts = [m if sp.issparse(m) else sp.identity(m, format="csr") for m in mats_or_sizes]
    return reduce(lambda A, B: sp.kron(A, B, format="csr"), parts)


def near_wall_factors(grid: MacGrid, c: int) -> list[np.ndarray]:
    """Per-axis diagonal factors of the modified identity for component ``c``."""
    shape = grid.unknown_shape(c)
    out = []
    for a in range(3):
        f = np.ones(shape[a])
        if _axis_kind(grid, c, a) == "tangential":
            f[0] = f[-1] = NEAR_WALL_FACTOR
        out.append(f)
    return out


def modified_identity(grid: MacGrid, c: int, corrected: bool = True) -> np.ndarray:
    """Diagonal of the modified identity, shaped like the unknowns of ``c``."""
    shape = grid.unknown_shape(c)
    if not corrected:
        return np.ones(shape)
    f = near_wall_factors(grid, c)
    return f[0][:, None, None] * f[1][None, :, None] * f[2][None, None, :]


def velocity_laplacian(grid: MacGrid, c: int, corrected: bool = True) -> sp.csr_matrix:
    """Linear part of the (modified) Laplacian acting on the unknowns of ``c``.

    With ``corrected`` the second difference along each axis is multiplied by
    the near-wall factors of the other axes.
    """
    shape = grid.unknown_shape(c)
    factors = near_wall_factors(grid, c) if corrected else [np.ones(n) for n in shape]
    total = None
    for a in range(3):
        parts = []
        for b in range(3):
            if b == a:
                parts.append(second_difference_1d(grid.shape[a], grid.h, _axis_kind(grid, c, a)))
            else:
                parts.append(sp.diags(factors[b], format="csr"))
        term = _kron_axis(parts)
        total = term if total is None else total + term
    return total.tocsr()


def wall_data(grid: MacGrid, c: int, a: int, grad_q=None, dt: float = 0.0):
    """Boundary values of component ``c`` on the two walls normal to axis ``a``.

    Tangential components receive the wall velocity plus ``dt`` times the
    tangential pseudo-pressure gradient in the adjacent layer of cells (the
    lagged PmII boundary condition).  Returns ``(lower, upper)`` arrays shaped
    like the unknowns of ``c`` with axis ``a`` of length one.
    """
    bc = grid.bc[a]
    shape = list(grid.unknown_shape(c))
    shape[a] = 1
    lo = np.full(shape, bc.lower[c])
    hi = np.full(shape, bc.upper[c])
    if a != c and grad_q is not None and dt != 0.0:
        g = grad_q[c]
        lo = lo + dt * np.take(g, [0], axis=a)
        hi = hi + dt * np.take(g, [-1], axis=a)
    return lo, hi


def boundary_term(grid: MacGrid, c: int, walls: dict, corrected: bool = True) -> np.ndarray:
    """Affine part of the Laplacian of component ``c`` given wall data.

    ``walls`` maps each Dirichlet axis to ``(lower, upper)`` as returned by
    :func:`wall_data`.
    """
    shape = grid.unknown_shape(c)
    out = np.zeros(shape)
    factors = near_wall_factors(grid, c) if corrected else [np.ones(n) for n in shape]
    h2 = grid.h ** 2
    for a, (lo, hi) in walls.items():
        scale = 2.0 if a != c else 1.0
        w = np.ones(shape)
        for b in range(3):
            if b != a:
                shp = [1, 1, 1]
                shp[b] = -1
                w = w * factors[b].reshape(shp)
        idx_lo = [slice(None)] * 3
        idx_hi = [slice(None)] * 3
        idx_lo[a], idx_hi[a] = slice(0, 1), slice(-1, None)
        out[tuple(idx_lo)] += scale * lo * w[tuple(idx_lo)] / h2
        out[tuple(idx_hi)] += scale * hi * w[tuple(idx_hi)] / h2
    return out


def pressure_laplacian(grid: MacGrid) -> sp.csr_matrix:
    """Cell-centered Laplacian with periodic or homogeneous Neumann ends;
    equals ``divergence(gradient(.))`` exactly."""
    total = None
    for a in range(3):
        parts = list(grid.shape)
        parts[a] = second_difference_1d(grid.shape[a], grid.h, _axis_kind(grid, None, a))
        term = _kron_axis(parts)
        total = term if total is None else total + term
    return total.tocsr()


def gradient(grid: MacGrid, q: np.ndarray) -> list[np.ndarray]:
    """Cell-to-face gradient at the unknown faces of each component."""
    out = []
    for c in range(3):
        if grid.bc[c].periodic:
            out.append((q - np.roll(q, 1, axis=c)) / grid.h)
        else:
            out.append(np.diff(q, axis=c) / grid.h)
    return out


def divergence(grid: MacGrid, u) -> np.ndarray:
    """Face-to-cell divergence of full component arrays (wall faces included)."""
    div = np.zeros(grid.shape)
    for c in range(3):
        if grid.bc[c].periodic:
            div += np.roll(u[c], -1, axis=c) - u[c]
        else:
            div += np.diff(u[c], axis=c)
    return div / grid.h
