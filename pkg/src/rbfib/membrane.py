"""Differential geometry of reconstructed surfaces and membrane force densities.

Every divergence-form force is evaluated in expanded form, using only first
and second parametric derivatives at the target sites:

    (1/sqrt(a)) (sqrt(a) T^{ab} X_b)_{,a}
        = T^{ab} X_{,ab} + (T^{ab}_{,a} + T^{ab} (ln sqrt(a))_{,a}) X_{,b}

where ``a`` is the determinant of whichever metric carries the area factor.
Derivatives of metric quantities follow from ``g_{ab,c} = X_{,ac}.X_{,b} +
X_{,a}.X_{,bc}``, so nothing beyond the operator matrices is needed.

Index layout: first derivatives are stored as ``d1[n, a, :]`` and second
derivatives as ``d2[n, a, b, :]`` with ``a, b`` in ``(theta, phi)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .quadrature import DegenerateSurface
from .rbf import OP_KINDS, OperatorCache, RbfSystem, build_operator_matrix
from .sphere import as_sites


class CollapsedArea(ValueError):
    """The area invariant reached ``I2 <= -1`` where the neo-Hookean law is undefined."""


# ---------------------------------------------------------------------------
# parameters and operators


@dataclass(frozen=True)
class MaterialParams:
    """Membrane constants in CGS units.

    ``E`` and ``G`` are the shear and bulk moduli (dyn/cm), ``kappa`` the bending
    modulus (erg), ``H_spont`` a constant spontaneous curvature (1/cm), ``nu``
    the membrane viscosity (dyn s/cm), and ``k_spring``/``eta_spring`` the
    tether stiffness and damping used only for point-only surfaces.
    """

    E: float = 0.0
    G: float = 0.0
    kappa: float = 0.0
    H_spont: float = 0.0
    nu: float = 0.0
    k_spring: float = 0.0
    eta_spring: float = 0.0

    def __post_init__(self):
        for name in ("E", "G", "kappa", "nu", "k_spring", "eta_spring"):
            if getattr(self, name) < 0:
                raise ValueError(f"material parameter {name} must be nonnegative")


@dataclass(frozen=True, eq=False)
class SurfaceOperators:
    """The six operator matrices (value and five derivatives) for one target set."""

    target_sites: np.ndarray
    matrices: dict = field(repr=False)

    @classmethod
    def build(cls, system: RbfSystem, target_sites, cache: OperatorCache | None = None):
        targets = as_sites(target_sites).copy()
        mats = {}
        for kind in OP_KINDS:
            op = cache.get(system, kind, targets) if cache is not None else \
                build_operator_matrix(system, kind, targets)
            mats[kind] = op.entries
        return cls(targets, mats)

    @property
    def n_targets(self) -> int:
        return self.target_sites.shape[0]

    def apply(self, kind: str, values) -> np.ndarray:
        return self.matrices[kind] @ values

    def derivatives(self, values):
        """Return ``(value, d1, d2)`` of a field sampled at the data sites.

        ``values`` has shape ``(n_d,)`` or ``(n_d, m)``; the derivative arrays gain
        the index axes after the site axis.
        """
        v = np.asarray(values, dtype=float)
        m = self.matrices
        val = m["evaluate"] @ v
        d1 = np.stack([m["theta"] @ v, m["phi"] @ v], axis=1)
        tp = m["theta_phi"] @ v
        d2 = np.stack([np.stack([m["theta_theta"] @ v, tp], axis=1),
                       np.stack([tp, m["phi_phi"] @ v], axis=1)], axis=1)
        return val, d1, d2


# ---------------------------------------------------------------------------
# geometry


def _inv2(m: np.ndarray):
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    inv = np.empty_like(m)
    inv[..., 0, 0] = m[..., 1, 1]
    inv[..., 1, 1] = m[..., 0, 0]
    inv[..., 0, 1] = -m[..., 0, 1]
    inv[..., 1, 0] = -m[..., 1, 0]
    return inv / det[..., None, None], det


@dataclass(frozen=True, eq=False)
class SurfaceGeometry:
    X: np.ndarray        # (n, 3)
    d1: np.ndarray       # (n, 2, 3)
    d2: np.ndarray       # (n, 2, 2, 3)
    g: np.ndarray        # (n, 2, 2)
    g_inv: np.ndarray
    sqrt_g: np.ndarray   # (n,)
    n: np.ndarray        # (n, 3)
    b: np.ndarray        # (n, 2, 2)
    H: np.ndarray
    K: np.ndarray

    @property
    def X_theta(self):
        return self.d1[:, 0]

    @property
    def X_phi(self):
        return self.d1[:, 1]

    @property
    def jacobian(self):
        return self.sqrt_g

    def metric_derivatives(self) -> np.ndarray:
        """``dg[n, c, a, b] = g_{ab,c}``."""
        t = np.einsum("naci,nbi->ncab", self.d2, self.d1)
        return t + t.transpose(0, 1, 3, 2)

    def christoffel(self) -> np.ndarray:
        """``G[n, l, a, b]`` = Christoffel symbol of the second kind."""
        return np.einsum("nlm,nmi,nabi->nlab", self.g_inv, self.d1, self.d2)


def geometry_from_derivatives(X, d1, d2) -> SurfaceGeometry:
    X = np.asarray(X, dtype=float)
    g = np.einsum("nai,nbi->nab", d1, d1)
    g_inv, det = _inv2(g)
    if np.any(det <= 0.0):
        raise DegenerateSurface(f"{int(np.count_nonzero(det <= 0))} sites have a singular metric")
    sqrt_g = np.sqrt(det)
    n = np.cross(d1[:, 0], d1[:, 1]) / sqrt_g[:, None]
    b = np.einsum("nabi,ni->nab", d2, n)
    shape = np.einsum("nam,nmb->nab", b, g_inv)
    H = 0.5 * (shape[:, 0, 0] + shape[:, 1, 1])
    K = (b[:, 0, 0] * b[:, 1, 1] - b[:, 0, 1] * b[:, 1, 0]) / det
    return SurfaceGeometry(X, d1, d2, g, g_inv, sqrt_g, n, b, H, K)


def compute_geometry(ops: SurfaceOperators, positions) -> SurfaceGeometry:
    """Geometry at the operator targets of the surface through ``positions`` (n_d, 3)."""
    X, d1, d2 = ops.derivatives(positions)
    return geometry_from_derivatives(X, d1, d2)


# ---------------------------------------------------------------------------
# strain and constitutive laws


@dataclass(frozen=True, eq=False)
class StrainState:
    I1: np.ndarray
    I2: np.ndarray
    eps: np.ndarray  # mixed tensor eps_a^b, (n, 2, 2)


def strain_state(geometry: SurfaceGeometry, reference: SurfaceGeometry) -> StrainState:
    """Green-Lagrange strain relative to the reference metric."""
    C = np.einsum("nam,nmb->nab", geometry.g, reference.g_inv)
    eps = 0.5 * (C - np.eye(2))
    I1 = C[:, 0, 0] + C[:, 1, 1] - 2.0
    # 4 det(eps) + I1 equals det(g)/det(g_ref) - 1; the ratio form avoids cancellation
    I2 = (geometry.sqrt_g / reference.sqrt_g) ** 2 - 1.0
    return StrainState(I1, I2, eps)


class TensionLaw:
    """Strain-energy density ``W(I1, I2)`` with hand-derived partial derivatives."""

    name = ""

    def energy(self, I1, I2, p: MaterialParams):
        raise NotImplementedError

    def first(self, I1, I2, p):
        """``(W_1, W_2)``."""
        raise NotImplementedError

    def second(self, I1, I2, p):
        """``(W_11, W_12, W_22)``."""
        raise NotImplementedError


class SkalakLaw(TensionLaw):
    name = "skalak"

    def energy(self, I1, I2, p):
        return 0.25 * p.E * (I1 ** 2 + 2.0 * I1 - 2.0 * I2) + 0.25 * p.G * I2 ** 2

    def first(self, I1, I2, p):
        return 0.5 * p.E * (I1 + 1.0), -0.5 * p.E + 0.5 * p.G * I2

    def second(self, I1, I2, p):
        one = np.ones_like(I1)
        return 0.5 * p.E * one, 0.0 * one, 0.5 * p.G * one


class NeoHookeanLaw(TensionLaw):
    name = "neohookean"

    @staticmethod
    def _area(I2):
        J = I2 + 1.0
        if np.any(J <= 0.0):
            raise CollapsedArea("neo-Hookean energy undefined for I2 <= -1")
        return J

    def energy(self, I1, I2, p):
        J = self._area(I2)
        sJ = np.sqrt(J)
        return 0.5 * p.E * ((I1 + 2.0) / sJ - 2.0) + 0.5 * p.G * (sJ - 1.0) ** 2

    def first(self, I1, I2, p):
        J = self._area(I2)
        sJ = np.sqrt(J)
        return (0.5 * p.E / sJ,
                -0.25 * p.E * (I1 + 2.0) / (J * sJ) + 0.5 * p.G * (1.0 - 1.0 / sJ))

    def second(self, I1, I2, p):
        J = self._area(I2)
        sJ = np.sqrt(J)
        return (0.0 * J, -0.25 * p.E / (J * sJ),
                0.375 * p.E * (I1 + 2.0) / (J * J * sJ) + 0.25 * p.G / (J * sJ))


LAWS = {"skalak": SkalakLaw(), "neohookean": NeoHookeanLaw()}


def get_law(law) -> TensionLaw:
    if isinstance(law, TensionLaw):
        return law
    try:
        return LAWS[str(law).lower().replace("-", "").replace("_", "")]
    except KeyError:
        raise ValueError(f"unknown tension law {law!r}; choose from {sorted(LAWS)}") from None


def tension_energy_density(strain: StrainState, law, params: MaterialParams) -> np.ndarray:
    return get_law(law).energy(strain.I1, strain.I2, params)


# ---------------------------------------------------------------------------
# forces


def _expanded_divergence(T, dT_div, dlog_area, d1, d2):
    """``T^{ab} X_{,ab} + (div_b + T^{ab} (ln sqrt a)_{,a}) X_{,b}``."""
    coef = dT_div + np.einsum("nab,na->nb", T, dlog_area)
    return np.einsum("nab,nabi->ni", T, d2) + np.einsum("nb,nbi->ni", coef, d1)


def tension_stress(geometry, reference, strain, law, params):
    """Second Piola-Kirchhoff stress ``s^{ab}``."""
    law = get_law(law)
    W1, W2 = law.first(strain.I1, strain.I2, params)
    J = strain.I2 + 1.0
    return (2.0 * W1[:, None, None] * reference.g_inv
            + 2.0 * (J * W2)[:, None, None] * geometry.g_inv)


def tension_force_density(geometry: SurfaceGeometry, reference: SurfaceGeometry,
                          law, params: MaterialParams, strain: StrainState | None = None
                          ) -> np.ndarray:
    """Tension force per unit reference area at the geometry's sites.

    The stress carries ``2 (I2 + 1) W_2`` on the current dual metric, the factor
    produced by differentiating ``I2 = det(g)/det(g_ref) - 1``.
    """
    law = get_law(law)
    if strain is None:
        strain = strain_state(geometry, reference)
    I1, I2 = strain.I1, strain.I2
    J = I2 + 1.0
    W1, W2 = law.first(I1, I2, params)
    W11, W12, W22 = law.second(I1, I2, params)

    gi, ri = geometry.g_inv, reference.g_inv
    dg = geometry.metric_derivatives()
    dr = reference.metric_derivatives()
    dgi = -np.einsum("nam,ncmk,nkb->ncab", gi, dg, gi)
    dri = -np.einsum("nam,ncmk,nkb->ncab", ri, dr, ri)

    dI1 = np.einsum("ncab,nba->nc", dg, ri) + np.einsum("nab,ncba->nc", geometry.g, dri)
    tr_g = np.einsum("nab,ncba->nc", gi, dg)
    tr_r = np.einsum("nab,ncba->nc", ri, dr)
    dJ = J[:, None] * (tr_g - tr_r)
    dW1 = W11[:, None] * dI1 + W12[:, None] * dJ
    dW2 = W12[:, None] * dI1 + W22[:, None] * dJ

    s = 2.0 * W1[:, None, None] * ri + 2.0 * (J * W2)[:, None, None] * gi
    ds = (2.0 * dW1[:, :, None, None] * ri[:, None]
          + 2.0 * W1[:, None, None, None] * dri
          + 2.0 * (dJ * W2[:, None] + J[:, None] * dW2)[:, :, None, None] * gi[:, None]
          + 2.0 * (J * W2)[:, None, None, None] * dgi)
    div = np.einsum("naab->nb", ds)
    return _expanded_divergence(s, div, 0.5 * tr_r, geometry.d1, geometry.d2)


def laplace_beltrami(geometry: SurfaceGeometry, field_values, ops: SurfaceOperators) -> np.ndarray:
    """Surface Laplacian of a scalar field sampled at the data sites.

    ``geometry`` must be evaluated at the same targets as ``ops``; the result
    is ``g^{ab} (f_{,ab} - Gamma^l_{ab} f_{,l})`` at those targets.
    """
    _, f1, f2 = ops.derivatives(np.asarray(field_values, dtype=float))
    G = geometry.christoffel()
    hess = f2 - np.einsum("nlab,nl->nab", G, f1)
    return np.einsum("nab,nab->n", geometry.g_inv, hess)


def bending_force_density(geometry: SurfaceGeometry, H_data, ops: SurfaceOperators,
                          params: MaterialParams, spont_data=None, spont_target=None
                          ) -> np.ndarray:
    """Canham-Helfrich force per unit current area.

    ``H_data`` is the pointwise mean curvature at the data sites, whose discrete
    surface Laplacian supplies the fourth-order term.  The spontaneous curvature
    defaults to ``params.H_spont`` and may instead be given as fields at the data
    and target sites.
    """
    Hp_d = params.H_spont if spont_data is None else np.asarray(spont_data)
    Hp_t = params.H_spont if spont_target is None else np.asarray(spont_target)
    dH = np.asarray(H_data) - Hp_d
    lap = laplace_beltrami(geometry, dH * np.ones(ops.matrices["evaluate"].shape[1]), ops)
    H, K = geometry.H, geometry.K
    e = H - Hp_t
    mag = -2.0 * params.kappa * (lap + 2.0 * e * (H * H - K + H * Hp_t))
    return mag[:, None] * geometry.n


def metric_rate(geometry: SurfaceGeometry, U_d1) -> np.ndarray:
    t = np.einsum("nai,nbi->nab", U_d1, geometry.d1)
    return t + t.transpose(0, 2, 1)


def dissipation_power_density(geometry: SurfaceGeometry, U_d1, params: MaterialParams):
    """``(nu/2) sum (dlambda_i/lambda_i)^2`` written as ``(nu/8) tr((g^-1 gdot)^2)``."""
    D = np.einsum("nam,nmb->nab", geometry.g_inv, metric_rate(geometry, U_d1))
    return 0.125 * params.nu * np.einsum("nab,nba->n", D, D)


def dissipative_force_density(geometry: SurfaceGeometry, U_data, ops: SurfaceOperators,
                              params: MaterialParams) -> np.ndarray:
    """Viscous membrane force per unit current area, the negative U-gradient of
    the dissipation power."""
    _, u1, u2 = ops.derivatives(np.asarray(U_data, dtype=float))
    gi = geometry.g_inv
    d1, d2 = geometry.d1, geometry.d2
    gdot = metric_rate(geometry, u1)
    t = (np.einsum("naci,nbi->ncab", u2, d1) + np.einsum("nai,nbci->ncab", u1, d2))
    dgdot = t + t.transpose(0, 1, 3, 2)
    dg = geometry.metric_derivatives()
    dgi = -np.einsum("nam,ncmk,nkb->ncab", gi, dg, gi)
    A = np.einsum("nam,nmk,nkb->nab", gi, gdot, gi)
    dA = (np.einsum("ncam,nmk,nkb->ncab", dgi, gdot, gi)
          + np.einsum("nam,ncmk,nkb->ncab", gi, dgdot, gi)
          + np.einsum("nam,nmk,nckb->ncab", gi, gdot, dgi))
    div = np.einsum("naab->nb", dA)
    dlog = 0.5 * np.einsum("nab,ncba->nc", gi, dg)
    return 0.5 * params.nu * _expanded_divergence(A, div, dlog, d1, d2)


def spring_force_density(X, X_tether, U, U_tether, params: MaterialParams) -> np.ndarray:
    """Damped Hookean tether force per point (weights absorbed into k and eta)."""
    X, Xt = np.asarray(X, dtype=float), np.asarray(X_tether, dtype=float)
    out = -params.k_spring * (X - Xt)
    if params.eta_spring:
        out = out - params.eta_spring * (np.asarray(U, dtype=float) - np.asarray(U_tether, dtype=float))
    return out


# ---------------------------------------------------------------------------
# energies


def tension_energy(geometry, reference, reference_weights, law, params) -> float:
    """Tension energy, integrated with weights of the reference configuration."""
    W = tension_energy_density(strain_state(geometry, reference), law, params)
    return float(np.dot(reference_weights, W))


def bending_energy(geometry, weights, params, spont=None) -> float:
    Hp = params.H_spont if spont is None else np.asarray(spont)
    return float(np.dot(weights, 2.0 * params.kappa * (geometry.H - Hp) ** 2))


def total_energy(geometry, reference, sigma, law, params, spont=None) -> float:
    """Tension plus bending energy of one closed surface (erg)."""
    w_ref = np.asarray(sigma) * reference.sqrt_g
    w = np.asarray(sigma) * geometry.sqrt_g
    e = tension_energy(geometry, reference, w_ref, law, params) if (params.E or params.G) else 0.0
    if params.kappa:
        e += bending_energy(geometry, w, params, spont)
    return e
