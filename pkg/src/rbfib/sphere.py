"""Parametrization of the unit sphere.

Sites are stored as arrays of shape ``(..., 2)`` holding ``(theta, phi)``
with ``theta`` the longitude in ``(-pi, pi]`` and ``phi`` the latitude in
``[-pi/2, pi/2]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial
from typing import NamedTuple

import numpy as np

MAX_HARMONIC_DEGREE = 10

DERIVATIVE_KINDS = ("theta", "phi", "theta_theta", "theta_phi", "phi_phi")


class ParametricSite(NamedTuple):
    theta: float
    phi: float


def as_sites(sites) -> np.ndarray:
    """Coerce a site or sequence of sites to a float array of shape ``(n, 2)``."""
    arr = np.asarray(sites, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"sites must have shape (n, 2), got {arr.shape}")
    return arr


def bauer_spiral(n: int) -> np.ndarray:
    """Quasi-uniform, pole-free spiral of ``n`` sites on the sphere."""
    if int(n) != n or n < 1:
        raise ValueError(f"number of sites must be a positive integer, got {n!r}")
    n = int(n)
    k = np.arange(1, n + 1, dtype=float)
    phi = np.arcsin(-1.0 + (2.0 * k - 1.0) / n)
    theta = np.mod(np.sqrt(n * np.pi) * phi + np.pi, 2.0 * np.pi) - np.pi
    # mod can land exactly on -pi; shift onto the (-pi, pi] branch
    theta = np.where(theta <= -np.pi, theta + 2.0 * np.pi, theta)
    return np.column_stack([theta, phi])


def sphere_embed(sites) -> np.ndarray:
    """Map sites to points on the unit sphere in R^3."""
    s = np.asarray(sites, dtype=float)
    theta, phi = s[..., 0], s[..., 1]
    cp = np.cos(phi)
    return np.stack([np.cos(theta) * cp, np.sin(theta) * cp, np.sin(phi)], axis=-1)


def chord_distance(a, b) -> np.ndarray:
    """Euclidean distance between the embeddings of sites ``a`` and ``b``.

    Broadcasts over leading dimensions, so ``chord_distance(x[:, None], y[None])``
    yields the full distance matrix.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    u = (np.cos(a[..., 1]) * np.cos(b[..., 1]) * np.cos(a[..., 0] - b[..., 0])
         + np.sin(a[..., 1]) * np.sin(b[..., 1]))
    return np.sqrt(np.maximum(2.0 * (1.0 - u), 0.0))


@dataclass(frozen=True)
class HarmonicBasis:
    """Real, fully normalized spherical harmonics up to ``max_degree``.

    Columns are ordered by degree ``l`` and then order ``m = -l..l``; negative
    orders carry ``sin(|m| theta)`` and positive orders ``cos(m theta)``.
    """

    max_degree: int

    def __post_init__(self):
        if self.max_degree < 0 or self.max_degree > MAX_HARMONIC_DEGREE:
            raise ValueError(
                f"harmonic degree must lie in [0, {MAX_HARMONIC_DEGREE}], got {self.max_degree}")

    @property
    def count(self) -> int:
        return (self.max_degree + 1) ** 2

    def degrees_orders(self) -> list[tuple[int, int]]:
        return [(l, m) for l in range(self.max_degree + 1) for m in range(-l, l + 1)]


def _legendre_table(max_degree: int, t: np.ndarray, c: np.ndarray):
    """Unnormalized associated Legendre values ``P[l][m]`` at ``t = sin(phi)``.

    ``c = cos(phi)`` is passed separately so ``P_m^m`` carries ``c**m`` exactly.
    No Condon-Shortley phase.
    """
    P = [[None] * (max_degree + 1) for _ in range(max_degree + 1)]
    for m in range(max_degree + 1):
        double_fact = float(np.prod(np.arange(2 * m - 1, 0, -2))) if m > 0 else 1.0
        P[m][m] = double_fact * c ** m
        if m + 1 <= max_degree:
            P[m + 1][m] = (2 * m + 1) * t * P[m][m]
        for l in range(m + 2, max_degree + 1):
            P[l][m] = ((2 * l - 1) * t * P[l - 1][m] - (l + m - 1) * P[l - 2][m]) / (l - m)
    return P


def eval_harmonics(basis: HarmonicBasis, sites, kind: str | None = None) -> np.ndarray:
    """Evaluate the basis (or one parametric derivative of it) at ``sites``.

    ``kind`` is ``None`` for plain values or one of :data:`DERIVATIVE_KINDS`.
    Latitude derivatives divide by ``cos(phi)``, so poles are excluded.
    Returns an array of shape ``(n_sites, basis.count)``.
    """
    s = as_sites(sites)
    if kind is not None and kind not in DERIVATIVE_KINDS:
        raise ValueError(f"unknown derivative kind {kind!r}")
    theta, phi = s[:, 0], s[:, 1]
    t, c = np.sin(phi), np.cos(phi)
    L = basis.max_degree
    P = _legendre_table(L, t, c)
    need_phi = kind in ("phi", "theta_phi", "phi_phi")
    out = np.empty((s.shape[0], basis.count))
    col = 0
    for l in range(L + 1):
        for m in range(-l, l + 1):
            am = abs(m)
            norm = np.sqrt((2 * l + 1) / (4 * np.pi) * factorial(l - am) / factorial(l + am))
            if m != 0:
                norm *= np.sqrt(2.0)
            if m > 0:
                trig, dtrig = np.cos(am * theta), -am * np.sin(am * theta)
            elif m < 0:
                trig, dtrig = np.sin(am * theta), am * np.cos(am * theta)
            else:
                trig, dtrig = np.ones_like(theta), np.zeros_like(theta)
            p = P[l][am]
            if need_phi:
                prev = P[l - 1][am] if l - 1 >= am else 0.0
                p_phi = ((l + am) * prev - l * t * p) / c
            if kind is None:
                val = p * trig
            elif kind == "theta":
                val = p * dtrig
            elif kind == "theta_theta":
                val = -(am ** 2) * p * trig
            elif kind == "phi":
                val = p_phi * trig
            elif kind == "theta_phi":
                val = p_phi * dtrig
            else:
                p_phiphi = (t / c) * p_phi - l * (l + 1) * p + (am ** 2) * p / c ** 2
                val = p_phiphi * trig
            out[:, col] = norm * val
            col += 1
    return out
