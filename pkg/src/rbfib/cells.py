"""Reference shapes and assembly of cells into simulation-ready objects.

Positions are in centimetres internally; the shape functions below take and
return micrometres, matching how the shapes are usually quoted.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .membrane import (MaterialParams, SurfaceOperators, bending_force_density,
                       compute_geometry, dissipative_force_density, get_law, strain_state,
                       tension_energy_density, tension_force_density)
from .quadrature import product_rule, sphere_weights, surface_weights
from .rbf import OperatorCache, build_system
from .sphere import as_sites, bauer_spiral

UM = 1e-4  # centimetres per micrometre

RBC_RADIUS_UM = 3.91
RBC_PROFILE = (0.105, 1.0, -0.56)
PLATELET_AXES_UM = (1.55, 0.5)


def rbc_reference(sites, radius=RBC_RADIUS_UM, profile=RBC_PROFILE) -> np.ndarray:
    """Biconcave disk: ``R0 (cos t cos p, sin t cos p, z(cos p) sin p)`` in um."""
    s = as_sites(sites)
    t, p = s[:, 0], s[:, 1]
    r = np.cos(p)
    z = profile[0] + profile[1] * r ** 2 + profile[2] * r ** 4
    return radius * np.column_stack([np.cos(t) * r, np.sin(t) * r, z * np.sin(p)])


def platelet_reference(sites, axes=PLATELET_AXES_UM) -> np.ndarray:
    """Oblate spheroid with equatorial radius ``axes[0]`` and half-height ``axes[1]`` (um)."""
    s = as_sites(sites)
    t, p = s[:, 0], s[:, 1]
    return np.column_stack([axes[0] * np.cos(t) * np.cos(p), axes[0] * np.sin(t) * np.cos(p),
                            axes[1] * np.sin(p)])


def brute_force_area(shape, n: int = 400, step: float = 1e-6) -> float:
    """Area of a parametric surface ``shape(sites)`` on an ``n x n`` product rule.

    Tangents come from central differences in the parameters; the result
    serves as an independent reference for the meshless quadrature.
    """
    sites, w = product_rule(n, n)
    dt = np.array([step, 0.0])
    dp = np.array([0.0, step])
    Xt = (shape(sites + dt) - shape(sites - dt)) / (2 * step)
    Xp = (shape(sites + dp) - shape(sites - dp)) / (2 * step)
    return float(np.dot(w, np.linalg.norm(np.cross(Xt, Xp), axis=1)))


def endothelium_points(n: int, shape: str = "flat", y0: float = 1.0,
                       lengths=(16.0, 16.0)) -> np.ndarray:
    """Spiral discretization of the wall surface, in um.

    The point parameters are ``phi_i = 2 pi (i-1)/n`` and
    ``theta_i = mod(ceil(sqrt(n)) phi_i, 2 pi)``, mapped to ``x`` and ``z`` over
    ``lengths``.  The height is ``y0`` for a flat wall and
    ``0.75 + cos^2(theta - phi) sin^2(phi/2)`` for the bumpy wall.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"number of endothelium points must be a positive integer, got {n!r}")
    n = int(n)
    phi = 2.0 * np.pi * np.arange(n) / n
    theta = np.mod(np.ceil(np.sqrt(n)) * phi, 2.0 * np.pi)
    if shape == "flat":
        y = np.full(n, float(y0))
    elif shape == "bumpy":
        y = 0.75 + np.cos(theta - phi) ** 2 * np.sin(0.5 * phi) ** 2
    else:
        raise ValueError(f"endothelium shape must be 'flat' or 'bumpy', got {shape!r}")
    return np.column_stack([lengths[0] * theta / (2 * np.pi), y, lengths[1] * phi / (2 * np.pi)])


def endothelium_height(x, z, shape: str = "flat", y0: float = 1.0, lengths=(16.0, 16.0)):
    """Wall height (um) above ``(x, z)`` and its gradient ``(dy/dx, dy/dz)``."""
    theta = 2 * np.pi * np.asarray(x, dtype=float) / lengths[0]
    phi = 2 * np.pi * np.asarray(z, dtype=float) / lengths[1]
    if shape == "flat":
        zero = np.zeros_like(theta)
        return np.full_like(theta, float(y0)), zero, zero
    if shape != "bumpy":
        raise ValueError(f"endothelium shape must be 'flat' or 'bumpy', got {shape!r}")
    s2 = np.sin(2 * (theta - phi))
    half = np.sin(0.5 * phi) ** 2
    y = 0.75 + np.cos(theta - phi) ** 2 * half
    y_theta = -s2 * half
    y_phi = s2 * half + 0.5 * np.cos(theta - phi) ** 2 * np.sin(phi)
    return y, y_theta * 2 * np.pi / lengths[0], y_phi * 2 * np.pi / lengths[1]


def endothelium_normals(points_um, shape: str = "flat", y0: float = 1.0,
                        lengths=(16.0, 16.0)) -> np.ndarray:
    """Unit normals pointing into the fluid at wall points given in um."""
    P = np.atleast_2d(points_um)
    _, gx, gz = endothelium_height(P[:, 0], P[:, 2], shape, y0, lengths)
    n = np.column_stack([-gx, np.ones_like(gx), -gz])
    return n / np.linalg.norm(n, axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# specifications


RBC_MATERIAL = MaterialParams(E=2.5e-3, G=2.5e-1, kappa=2e-12, H_spont=0.0, nu=2.5e-7)
PLATELET_MATERIAL = MaterialParams(E=1e-1, G=1.0, kappa=2e-11)
ENDOTHELIUM_MATERIAL = MaterialParams(k_spring=2.5, eta_spring=2.5e-7)


@dataclass(frozen=True)
class CellSpec:
    kind: str
    n_data: int
    n_sample: int
    kernel_exponent: int = 7
    max_degree: int = 5
    material: MaterialParams = field(default_factory=MaterialParams)
    law: str = "skalak"
    forces: tuple = ("tension", "bending", "dissipation")

    def __post_init__(self):
        if self.kind not in ("rbc", "platelet"):
            raise ValueError(f"cell kind must be 'rbc' or 'platelet', got {self.kind!r}")
        get_law(self.law)
        unknown = set(self.forces) - {"tension", "bending", "dissipation"}
        if unknown:
            raise ValueError(f"unknown force kinds {sorted(unknown)}")

    @classmethod
    def rbc(cls, n_data=2500, n_sample=10000, **kw):
        kw.setdefault("material", RBC_MATERIAL)
        return cls("rbc", n_data, n_sample, **kw)

    @classmethod
    def platelet(cls, n_data=900, n_sample=900, **kw):
        kw.setdefault("material", PLATELET_MATERIAL)
        kw.setdefault("forces", ("tension", "bending"))
        return cls("platelet", n_data, n_sample, **kw)

    def with_(self, **kw) -> "CellSpec":
        return replace(self, **kw)


@dataclass(frozen=True)
class Placement:
    """Affine placement ``X = A X_ref + t`` with ``A = stretch @ rotation`` (cm)."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    stretch: np.ndarray = field(default_factory=lambda: np.eye(3))

    @property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.stretch, dtype=float) @ np.asarray(self.rotation, dtype=float)

    def apply(self, X) -> np.ndarray:
        return np.asarray(X) @ self.matrix.T + np.asarray(self.translation, dtype=float)


def rotation_about(axis: int, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    i, j = [(1, 2), (2, 0), (0, 1)][axis]
    R = np.eye(3)
    R[i, i], R[i, j], R[j, i], R[j, j] = c, -s, s, c
    return R


# ---------------------------------------------------------------------------
# assembly


@dataclass(frozen=True, eq=False)
class CellTemplate:
    """Everything about a cell that does not depend on its placement."""

    spec: CellSpec
    data_sites: np.ndarray
    sample_sites: np.ndarray
    system: object
    ops_data: SurfaceOperators
    ops_sample: SurfaceOperators
    weights: object
    reference_positions: np.ndarray  # cm, data sites
    ref_data: object
    ref_sample: object
    ref_weights: np.ndarray  # sample sites, constant in time
    spont_data: np.ndarray
    spont_sample: np.ndarray


def _reference_shape(kind: str, sites) -> np.ndarray:
    return UM * (rbc_reference(sites) if kind == "rbc" else platelet_reference(sites))


@lru_cache(maxsize=16)
def _cached_template(spec: CellSpec, cache_dir: str | None) -> CellTemplate:
    cache = OperatorCache(cache_dir) if cache_dir else None
    sd = bauer_spiral(spec.n_data)
    ss = bauer_spiral(spec.n_sample)
    system = build_system(sd, spec.kernel_exponent, spec.max_degree)
    ops_d = SurfaceOperators.build(system, sd, cache)
    ops_s = SurfaceOperators.build(system, ss, cache)
    weights = sphere_weights(ss)
    Xr = _reference_shape(spec.kind, sd)
    ref_d = compute_geometry(ops_d, Xr)
    ref_s = compute_geometry(ops_s, Xr)
    w_ref = surface_weights(weights.sigma, ref_s.sqrt_g)
    if spec.kind == "platelet":
        spont_d, spont_s = ref_d.H.copy(), ref_s.H.copy()
    else:
        spont_d = np.full(spec.n_data, spec.material.H_spont)
        spont_s = np.full(spec.n_sample, spec.material.H_spont)
    return CellTemplate(spec, sd, ss, system, ops_d, ops_s, weights, Xr, ref_d, ref_s,
                        w_ref, spont_d, spont_s)


def cell_template(spec: CellSpec, cache_dir=None) -> CellTemplate:
    return _cached_template(spec, None if cache_dir is None else str(cache_dir))


@dataclass(eq=False)
class AssembledCell:
    template: CellTemplate
    positions: np.ndarray  # (n_d, 3) movement points, cm
    velocities: np.ndarray = None  # last interpolated fluid velocity at the movement points

    def __post_init__(self):
        if self.velocities is None:
            self.velocities = np.zeros_like(self.positions)

    @property
    def spec(self) -> CellSpec:
        return self.template.spec

    def sample_positions(self) -> np.ndarray:
        return self.template.ops_sample.apply("evaluate", self.positions)

    def geometry(self):
        """Current geometry at the sample sites and at the data sites."""
        t = self.template
        return compute_geometry(t.ops_sample, self.positions), compute_geometry(t.ops_data, self.positions)

    def weighted_forces(self):
        """``(spreading points, w_j F_j)`` for all active force kinds.

        Tension is a force per reference area and is weighted with the fixed
        reference weights; bending and dissipation use current-area weights.
        """
        t = self.template
        spec, p = t.spec, t.spec.material
        gs, gd = self.geometry()
        w = surface_weights(t.weights.sigma, gs.sqrt_g)
        total = np.zeros_like(gs.X)
        if "tension" in spec.forces and (p.E or p.G):
            total += t.ref_weights[:, None] * tension_force_density(gs, t.ref_sample, spec.law, p)
        per_area = np.zeros_like(gs.X)
        if "bending" in spec.forces and p.kappa:
            per_area += bending_force_density(gs, gd.H, t.ops_sample, p, t.spont_data, t.spont_sample)
        if "dissipation" in spec.forces and p.nu:
            per_area += dissipative_force_density(gs, self.velocities, t.ops_sample, p)
        total += w[:, None] * per_area
        return gs.X, total

    def energy(self) -> float:
        """Tension plus bending energy (erg)."""
        t = self.template
        spec, p = t.spec, t.spec.material
        gs, _ = self.geometry()
        e = 0.0
        if "tension" in spec.forces:
            W = tension_energy_density(strain_state(gs, t.ref_sample), spec.law, p)
            e += float(np.dot(t.ref_weights, W))
        if "bending" in spec.forces and p.kappa:
            w = surface_weights(t.weights.sigma, gs.sqrt_g)
            e += float(np.dot(w, 2.0 * p.kappa * (gs.H - t.spont_sample) ** 2))
        return e

    def area(self) -> float:
        gs, _ = self.geometry()
        return float(np.sum(surface_weights(self.template.weights.sigma, gs.sqrt_g)))

    def centroid(self) -> np.ndarray:
        gs, _ = self.geometry()
        w = surface_weights(self.template.weights.sigma, gs.sqrt_g)
        return (w[:, None] * gs.X).sum(axis=0) / w.sum()

    def evaluate_at(self, sites) -> np.ndarray:
        """Positions of the reconstructed surface at arbitrary parameter sites."""
        from .rbf import RbfCoefficients, interpolate
        coef: RbfCoefficients = interpolate(self.template.system, self.positions)
        return coef.evaluate(self.template.system, sites)


def assemble_cell(spec: CellSpec, placement: Placement | None = None, cache_dir=None) -> AssembledCell:
    """Build (or reuse) the cell's operators and place its movement points."""
    t = cell_template(spec, cache_dir)
    placement = placement or Placement()
    return AssembledCell(t, placement.apply(t.reference_positions))


@dataclass(eq=False)
class Endothelium:
    """Point-only wall tethered to its initial position by damped springs."""

    positions: np.ndarray  # cm
    tethers: np.ndarray
    material: MaterialParams = ENDOTHELIUM_MATERIAL
    velocities: np.ndarray = None

    def __post_init__(self):
        if self.velocities is None:
            self.velocities = np.zeros_like(self.positions)

    @classmethod
    def build(cls, n: int, shape: str = "flat", y0: float = 1.0, lengths_um=(16.0, 16.0),
              material: MaterialParams = ENDOTHELIUM_MATERIAL) -> "Endothelium":
        X = UM * endothelium_points(n, shape, y0, lengths_um)
        return cls(X, X.copy(), material)

    def weighted_forces(self):
        from .membrane import spring_force_density
        F = spring_force_density(self.positions, self.tethers, self.velocities, 0.0, self.material)
        return self.positions, F
