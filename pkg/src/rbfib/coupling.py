"""Regularized-delta interpolation and spreading between points and the staggered grid."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fluid.grid import MacGrid


def roma3(r):
    """Three-point kernel of Roma, Peskin and Berger."""
    a = np.abs(np.asarray(r, dtype=float))
    inner = (1.0 + np.sqrt(np.maximum(1.0 - 3.0 * a * a, 0.0))) / 3.0
    outer = (5.0 - 3.0 * a - np.sqrt(np.maximum(1.0 - 3.0 * (1.0 - a) ** 2, 0.0))) / 6.0
    return np.where(a <= 0.5, inner, np.where(a <= 1.5, outer, 0.0))


def cosine4(r):
    """Four-point cosine kernel."""
    a = np.abs(np.asarray(r, dtype=float))
    return np.where(a <= 2.0, 0.25 * (1.0 + np.cos(0.5 * np.pi * a)), 0.0)


def bspline4(r):
    """Cubic B-spline (four-point support)."""
    a = np.abs(np.asarray(r, dtype=float))
    return np.where(a < 1.0, 2.0 / 3.0 - a * a + 0.5 * a ** 3,
                    np.where(a < 2.0, (2.0 - a) ** 3 / 6.0, 0.0))


@dataclass(frozen=True)
class DeltaKernel:
    kind: str
    support_radius: float
    width: int

    def __call__(self, r):
        return _KERNEL_FUNCS[self.kind](r)


def linear_hat(r):
    """Two-point hat; as a tensor product it is trilinear interpolation."""
    a = np.abs(np.asarray(r, dtype=float))
    return np.maximum(1.0 - a, 0.0)


_KERNEL_FUNCS = {"roma3": roma3, "cosine4": cosine4, "bspline4": bspline4, "linear": linear_hat}
KERNELS = {
    "roma3": DeltaKernel("roma3", 1.5, 3),
    "cosine4": DeltaKernel("cosine4", 2.0, 4),
    "bspline4": DeltaKernel("bspline4", 2.0, 4),
}
# used for probing grid fields, not for fluid-structure coupling
TRILINEAR = DeltaKernel("linear", 1.0, 2)


def get_kernel(kind) -> DeltaKernel:
    if isinstance(kind, DeltaKernel):
        return kind
    try:
        return KERNELS[str(kind).lower()]
    except KeyError:
        raise ValueError(f"unknown delta kernel {kind!r}; choose from {sorted(KERNELS)}") from None


def kernel_eval(kind, r):
    return get_kernel(kind)(r)


# ---------------------------------------------------------------------------
# stencils


_PAD = 2  # ghost layers along Dirichlet axes, enough for the widest kernel


def _stencil(grid: MacGrid, kernel: DeltaKernel, c: int, points: np.ndarray):
    """Flat indices into the padded component array and tensor weights.

    Returns ``(flat, weights, padded_shape)`` with ``flat`` and ``weights`` of
    shape ``(n_points, w**3)``.
    """
    origin = grid.face_origin(c)
    shape = grid.component_shape(c)
    L = grid.lengths
    w = kernel.width
    offs = np.arange(w)
    idx, wts, pshape = [], [], []
    for a in range(3):
        x = points[:, a]
        if grid.bc[a].periodic:
            x = np.mod(x, L[a])
        elif np.any((x < 0.0) | (x > L[a])):
            raise ValueError(f"points lie outside the wall-bounded extent along axis {a}")
        s = (x - origin[a]) / grid.h
        i0 = np.floor(s - kernel.support_radius).astype(np.int64) + 1
        nodes = i0[:, None] + offs[None, :]
        wts.append(kernel(s[:, None] - nodes))
        if grid.bc[a].periodic:
            nodes = np.mod(nodes, shape[a])
            pshape.append(shape[a])
        else:
            nodes = nodes + _PAD
            pshape.append(shape[a] + 2 * _PAD)
        idx.append(nodes)
    flat = ((idx[0][:, :, None, None] * pshape[1] + idx[1][:, None, :, None]) * pshape[2]
            + idx[2][:, None, None, :])
    weights = wts[0][:, :, None, None] * wts[1][:, None, :, None] * wts[2][:, None, None, :]
    n = points.shape[0]
    return flat.reshape(n, -1), weights.reshape(n, -1), tuple(pshape)


def _padded_values(grid: MacGrid, c: int, arr: np.ndarray) -> np.ndarray:
    """Component array extended across Dirichlet walls by odd reflection about
    the wall value, matching the ghost values used by the fluid solver."""
    out = arr
    for a in range(3):
        bc = grid.bc[a]
        if bc.periodic:
            continue
        pad = [(_PAD, _PAD) if b == a else (0, 0) for b in range(3)]
        out = np.pad(out, pad, mode="edge")
        n = out.shape[a]
        for m in range(_PAD):
            ghost_lo, ghost_hi = _PAD - 1 - m, n - _PAD + m
            if a == c:
                # wall faces stored at _PAD and n-_PAD-1; mirror about them
                src_lo, src_hi = _PAD + 1 + m, n - _PAD - 2 - m
                wall_lo, wall_hi = bc.lower[c], bc.upper[c]
            else:
                src_lo, src_hi = _PAD + m, n - _PAD - 1 - m
                wall_lo, wall_hi = bc.lower[c], bc.upper[c]
            sel = lambda i: tuple(i if b == a else slice(None) for b in range(3))
            out[sel(ghost_lo)] = 2.0 * wall_lo - out[sel(src_lo)]
            out[sel(ghost_hi)] = 2.0 * wall_hi - out[sel(src_hi)]
    return out


def _crop_padded(grid: MacGrid, arr: np.ndarray) -> np.ndarray:
    sl = tuple(slice(None) if grid.bc[a].periodic else slice(_PAD, -_PAD) for a in range(3))
    return arr[sl]


def interpolate_velocity(grid: MacGrid, kernel, points, u=None) -> np.ndarray:
    """Velocity at ``points`` (n, 3), each component from its own face lattice."""
    kernel = get_kernel(kernel)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    u = grid.u if u is None else u
    out = np.empty_like(pts)
    for c in range(3):
        flat, wts, _ = _stencil(grid, kernel, c, pts)
        vals = _padded_values(grid, c, u[c]).ravel()
        out[:, c] = np.einsum("nk,nk->n", vals[flat], wts)
    return out


def spread_force(grid: MacGrid, kernel, points, forces, weights) -> list[np.ndarray]:
    """Force density on the full face arrays from weighted point forces.

    Contributions landing beyond a wall are discarded; wall faces themselves
    receive values but are ignored by the fluid solver.
    """
    kernel = get_kernel(kernel)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    wF = np.asarray(forces, dtype=float) * np.asarray(weights, dtype=float).reshape(-1, 1)
    inv_vol = 1.0 / grid.h ** 3
    out = []
    for c in range(3):
        flat, wts, pshape = _stencil(grid, kernel, c, pts)
        acc = np.bincount(flat.ravel(), weights=(wts * wF[:, c:c + 1]).ravel(),
                          minlength=int(np.prod(pshape)))
        out.append(_crop_padded(grid, acc.reshape(pshape)) * inv_vol)
    return out


def spread_points(grid: MacGrid, kernel, points, forces) -> list[np.ndarray]:
    """Spread per-point forces (weights already absorbed), e.g. tethers."""
    return spread_force(grid, kernel, points, forces, np.ones(len(np.atleast_2d(points))))


@dataclass(frozen=True)
class StabilityStatus:
    passed: bool
    threshold: float
    dt: float
    force_max: float


def stability_check(dt: float, h: float, rho: float, force) -> StabilityStatus:
    """``dt <= (1/4) sqrt(h rho / max|f|)``, the run-stopping condition."""
    if isinstance(force, (list, tuple)):
        fmax = max((float(np.abs(f).max()) if np.size(f) else 0.0) for f in force)
    else:
        fmax = float(np.abs(np.asarray(force)).max()) if np.size(force) else 0.0
    thr = np.inf if fmax == 0.0 else 0.25 * np.sqrt(h * rho / fmax)
    return StabilityStatus(bool(dt <= thr), float(thr), float(dt), fmax)
