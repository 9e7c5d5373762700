"""Analysis quantities computed from runs: convergence orders, norms, shapes and profiles."""
from __future__ import annotations

import numpy as np
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from ..coupling import TRILINEAR, interpolate_velocity
from ..fluid.grid import MacGrid
from ..quadrature import sphere_weights
from ..sphere import bauer_spiral

PROBE_SITES = 1000
PROBE_CELLS = 20


class NoConvergenceOrderError(ValueError):
    """The ratio of successive differences admits no order in the search bracket."""


def _order_ratio(p: float, r: float) -> float:
    return abs(((r + 1.0) / r) ** p - 1.0) / abs(((r + 2.0) / (r + 1.0)) ** (-p) - 1.0)


def observed_order(eps_a: float, eps_b: float, r: float, bracket=(0.0, 20.0), xtol=1e-12) -> float:
    """Order ``p`` for which successive differences ``eps_a`` (grids r, r+1) and
    ``eps_b`` (grids r+1, r+2) are consistent with ``eps ~ h^p``.

    The ratio tends to ``log((r+1)/r) / log((r+2)/(r+1))`` as ``p -> 0`` and
    grows without bound, so there is a root only when ``eps_a/eps_b`` exceeds
    that limit.
    """
    if not (eps_a > 0 and eps_b > 0):
        raise ValueError("differences must be positive")
    if r < 1:
        raise ValueError(f"refinement index must be at least 1, got {r}")
    target = eps_a / eps_b
    lo, hi = bracket
    eps = 1e-12

    def f(p):
        if p < eps:  # removable singularity at p = 0
            return np.log((r + 1.0) / r) / np.log((r + 2.0) / (r + 1.0)) - target
        return _order_ratio(p, r) - target

    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        raise NoConvergenceOrderError(
            f"no convergence order in [{lo}, {hi}] for ratio {target:.6g} at r={r}")
    if flo == 0.0:
        return float(lo)
    return float(brentq(f, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps))


# ---------------------------------------------------------------------------
# probes and norms


def probe_sites(n: int = PROBE_SITES):
    """Bauer probe sites with their sphere quadrature weights."""
    sites = bauer_spiral(n)
    return sites, sphere_weights(sites).omega


def probe_lattice(lengths, n: int = PROBE_CELLS) -> np.ndarray:
    """Cell centers of a regular ``n^3`` lattice over the box, shape ``(n^3, 3)``."""
    axes = [(np.arange(n) + 0.5) * (L / n) for L in lengths]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])


def probe_velocity(grid: MacGrid, n: int = PROBE_CELLS) -> np.ndarray:
    """Velocity at the ``n^3`` probe cell centers by trilinear interpolation on
    each face lattice, shape ``(n^3, 3)``."""
    return interpolate_velocity(grid, TRILINEAR, probe_lattice(grid.lengths, n))


def grid_difference_norms(field_a, field_b, kind: str = "L2", weights=None) -> float:
    """Norm of the pointwise difference of two vector fields sampled at common probes.

    ``L2`` is ``sqrt(sum_j w_j |a_j - b_j|^2)`` (unit weights when ``weights``
    is omitted); ``Linf`` is ``max_j |a_j - b_j|``.
    """
    a = np.asarray(field_a, dtype=float)
    b = np.asarray(field_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"fields differ in shape: {a.shape} vs {b.shape}")
    d = (a - b).reshape(a.shape[0], -1) if a.ndim > 1 else (a - b)[:, None]
    sq = np.einsum("ij,ij->i", d, d)
    if kind == "L2":
        w = np.ones(len(sq)) if weights is None else np.asarray(weights, dtype=float)
        if w.shape != sq.shape:
            raise ValueError("weights must have one entry per probe")
        return float(np.sqrt(np.dot(w, sq)))
    if kind == "Linf":
        return float(np.sqrt(sq.max())) if sq.size else 0.0
    raise ValueError(f"norm kind must be 'L2' or 'Linf', got {kind!r}")


def convergence_table(fields, weights=None, r0: int = 1) -> dict:
    """Successive differences and observed orders for fields on refinements ``r0, r0+1, ...``.

    Returns ``{"L2": [...], "Linf": [...], "order_L2": [...], "order_Linf": [...]}``;
    the orders use consecutive difference pairs, ``None`` where no order exists.
    """
    out = {}
    for kind in ("L2", "Linf"):
        eps = [grid_difference_norms(a, b, kind, weights if kind == "L2" else None)
               for a, b in zip(fields[:-1], fields[1:])]
        orders = []
        for i in range(len(eps) - 1):
            try:
                orders.append(observed_order(eps[i], eps[i + 1], r0 + i))
            except (NoConvergenceOrderError, ValueError):
                orders.append(None)
        out[kind] = eps
        out[f"order_{kind}"] = orders
    return out


# ---------------------------------------------------------------------------
# shape diagnostics


def second_moment_axes(points, weights=None):
    """Eigenvalues (ascending) and eigenvectors (columns) of the weighted
    covariance of ``points``, plus the weighted centroid."""
    X = np.asarray(points, dtype=float)
    w = np.ones(len(X)) if weights is None else np.asarray(weights, dtype=float)
    c = (w[:, None] * X).sum(axis=0) / w.sum()
    Y = X - c
    C = (w[:, None] * Y).T @ Y / w.sum()
    vals, vecs = np.linalg.eigh(C)
    return vals, vecs, c


def short_axis(points, weights=None) -> np.ndarray:
    return second_moment_axes(points, weights)[1][:, 0]


def inclination(points, weights=None, plane=(1, 2)) -> float:
    """Angle of the short (symmetry) axis in the ``plane`` of two coordinate axes.

    For the shear preset the plane is (y, z): the angle is ``atan2(n_z, n_y)``
    wrapped to ``(-pi/2, pi/2]``, since the axis has no sign.
    """
    n = short_axis(points, weights)
    a = np.arctan2(n[plane[1]], n[plane[0]])
    if a <= -np.pi / 2:
        a += np.pi
    elif a > np.pi / 2:
        a -= np.pi
    return float(a)


def marker_angle(points, marker: int, centroid=None, plane=(1, 2)) -> float:
    """Polar angle of one membrane marker about the centroid in ``plane``."""
    X = np.asarray(points, dtype=float)
    c = X.mean(axis=0) if centroid is None else centroid
    d = X[marker] - c
    return float(np.arctan2(d[plane[1]], d[plane[0]]))


def circulation(marker_angles, inclinations) -> float:
    """Net rotation of a marker relative to the body orientation (radians).

    A tank-treading membrane moves its markers around a nearly fixed shape,
    so this grows steadily; for a tumbling cell markers ride with the body.
    """
    m = np.unwrap(np.asarray(marker_angles, dtype=float))
    # inclination is an axis angle with period pi
    inc = 0.5 * np.unwrap(2.0 * np.asarray(inclinations, dtype=float))
    return float((m[-1] - m[0]) - (inc[-1] - inc[0]))


def sign_changes(series) -> int:
    s = np.sign(np.asarray(series, dtype=float))
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def _wrap(points, lengths, periodic):
    """Wrap periodic coordinates into the box; shift the others to start at zero."""
    X = np.array(points, dtype=float)
    for a in range(3):
        if periodic[a]:
            X[:, a] = np.mod(X[:, a], lengths[a])
        else:
            X[:, a] -= X[:, a].min()
    return X


def min_intercell_distance(point_sets, lengths=None, periodic=(True, False, True)) -> float:
    """Smallest distance between points of different objects.

    With ``lengths`` given, distances use the nearest periodic image along
    the ``periodic`` axes.
    """
    sets = [np.asarray(p, dtype=float) for p in point_sets]
    box = None
    if lengths is not None:
        allp = _wrap(np.vstack(sets), lengths, periodic)
        # non-periodic axes get a box wide enough that no image is ever closer
        span = allp.max(axis=0)
        box = [lengths[a] if periodic[a] else 3.0 * span[a] + 1.0 for a in range(3)]
        sizes = np.cumsum([0] + [len(p) for p in sets])
        sets = [allp[sizes[i]:sizes[i + 1]] for i in range(len(sets))]
    best = np.inf
    for i in range(len(sets)):
        tree = cKDTree(sets[i], boxsize=box)
        for j in range(i + 1, len(sets)):
            d, _ = tree.query(sets[j], k=1)
            best = min(best, float(d.min()))
    return best


def flow_profile(snapshots, axis: int = 1) -> np.ndarray:
    """Mean speed per layer along ``axis``, averaged over the other two axes and all snapshots.

    Each snapshot is a :class:`MacGrid` or a cell-centered velocity array of shape
    ``(nx, ny, nz, 3)``.
    """
    snaps = list(snapshots)
    if not snaps:
        raise ValueError("need at least one snapshot")
    acc = None
    for s in snaps:
        if isinstance(s, MacGrid):
            v = np.moveaxis(s.cell_center_velocity(), 0, -1)
        else:
            v = np.asarray(s, dtype=float)
        speed = np.linalg.norm(v, axis=-1)
        others = tuple(a for a in range(3) if a != axis)
        prof = speed.mean(axis=others)
        acc = prof if acc is None else acc + prof
    return acc / len(snaps)


ASPECT_FLAG = 0.04
ANGLE_FLAG = np.pi / 4


def aspect_ratio(points, weights=None) -> float:
    vals = second_moment_axes(points, weights)[0]
    return float(np.sqrt(vals[-1] / max(vals[0], np.finfo(float).tiny)))


def platelet_diagnostics(positions, reference_positions, wall, vorticity=(0.0, 0.0, 1.0),
                         wall_axis: int = 1) -> dict:
    """Wall distance, relative aspect-ratio change and short-axis/vorticity angle.

    ``wall`` is either a height along ``wall_axis`` (flat wall) or an array of
    wall points.  The aspect ratio comes from the second-moment ellipsoid.
    """
    X = np.asarray(positions, dtype=float)
    if np.ndim(wall) == 0:
        dist = float(np.min(X[:, wall_axis]) - float(wall))
    else:
        dist = min_intercell_distance([X, np.asarray(wall, dtype=float)])
    ar = aspect_ratio(X)
    ar0 = aspect_ratio(reference_positions)
    change = ar / ar0 - 1.0
    w = np.asarray(vorticity, dtype=float)
    w = w / np.linalg.norm(w)
    angle = float(np.arccos(np.clip(abs(np.dot(short_axis(X), w)), 0.0, 1.0)))
    return {"wall_distance": dist, "aspect_change": float(change), "angle": angle,
            "aspect_flag": bool(abs(change) > ASPECT_FLAG), "angle_flag": bool(angle > ANGLE_FLAG)}


def track_energy(sim) -> dict:
    """Kinetic and elastic energy (erg) of a running simulation."""
    k, e = sim.energy()
    return {"kinetic": k, "elastic": e, "total": k + e}
