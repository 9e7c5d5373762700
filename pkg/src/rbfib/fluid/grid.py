"""Staggered (marker-and-cell) grid storage.

Component ``c`` of the velocity lives on faces normal to axis ``c``: face index
``i`` along axis ``c`` sits at ``x_c = i h`` and the other coordinates are
cell-centered.  Along a periodic axis a component has ``N`` entries; along a
Dirichlet axis the normal component has ``N + 1`` entries, the first and last
being the wall faces, whose values are boundary data rather than unknowns.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class AxisBC:
    """Boundary condition along one axis.

    For a Dirichlet axis ``lower``/``upper`` hold the constant wall velocity
    (3-vectors, cm/s) on the walls at coordinate 0 and ``L``.
    """

    kind: str = "periodic"
    lower: tuple = (0.0, 0.0, 0.0)
    upper: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.kind not in ("periodic", "dirichlet"):
            raise ValueError(f"boundary kind must be 'periodic' or 'dirichlet', got {self.kind!r}")
        object.__setattr__(self, "lower", tuple(float(x) for x in self.lower))
        object.__setattr__(self, "upper", tuple(float(x) for x in self.upper))
        if len(self.lower) != 3 or len(self.upper) != 3:
            raise ValueError("wall velocities must be 3-vectors")

    @property
    def periodic(self) -> bool:
        return self.kind == "periodic"

    @classmethod
    def wall(cls, lower=(0.0, 0.0, 0.0), upper=(0.0, 0.0, 0.0)) -> "AxisBC":
        return cls("dirichlet", lower, upper)


PERIODIC = AxisBC()


@dataclass(eq=False)
class MacGrid:
    """Velocity, pressure and pseudo-pressure on a uniform staggered grid."""

    shape: tuple
    h: float
    bc: tuple = (PERIODIC, PERIODIC, PERIODIC)
    rho: float = 1.0
    mu: float = 1.2e-2
    u: list = field(default=None, repr=False)
    p: np.ndarray = field(default=None, repr=False)
    q: np.ndarray = field(default=None, repr=False)
    time: float = 0.0

    def __post_init__(self):
        self.shape = tuple(int(n) for n in self.shape)
        if len(self.shape) != 3 or min(self.shape) < 2:
            raise ValueError(f"grid shape must be three sizes >= 2, got {self.shape}")
        if self.h <= 0:
            raise ValueError("grid spacing must be positive")
        self.bc = tuple(self.bc)
        if len(self.bc) != 3:
            raise ValueError("need one boundary condition per axis")
        if self.u is None:
            self.u = [np.zeros(self.component_shape(c)) for c in range(3)]
            self.apply_wall_values()
        if self.p is None:
            self.p = np.zeros(self.shape)
        if self.q is None:
            self.q = np.zeros(self.shape)

    @property
    def lengths(self) -> np.ndarray:
        return self.h * np.asarray(self.shape, dtype=float)

    @property
    def cell_volume(self) -> float:
        return self.h ** 3

    def component_shape(self, c: int) -> tuple:
        s = list(self.shape)
        if not self.bc[c].periodic:
            s[c] += 1
        return tuple(s)

    def unknown_slice(self, c: int) -> tuple:
        """Index of the unknown (non-wall) entries of component ``c``."""
        sl = [slice(None)] * 3
        if not self.bc[c].periodic:
            sl[c] = slice(1, -1)
        return tuple(sl)

    def unknown_shape(self, c: int) -> tuple:
        s = list(self.shape)
        if not self.bc[c].periodic:
            s[c] -= 1
        return tuple(s)

    def face_origin(self, c: int) -> np.ndarray:
        """Coordinates of entry ``(0, 0, 0)`` of component ``c`` (stored array)."""
        o = np.full(3, 0.5 * self.h)
        o[c] = 0.0
        return o

    def apply_wall_values(self, u=None) -> None:
        """Write the normal wall velocity into the wall faces."""
        u = self.u if u is None else u
        for c in range(3):
            bc = self.bc[c]
            if not bc.periodic:
                lo = [slice(None)] * 3
                hi = [slice(None)] * 3
                lo[c], hi[c] = 0, -1
                u[c][tuple(lo)] = bc.lower[c]
                u[c][tuple(hi)] = bc.upper[c]

    def copy(self) -> "MacGrid":
        return MacGrid(self.shape, self.h, self.bc, self.rho, self.mu,
                       [a.copy() for a in self.u], self.p.copy(), self.q.copy(), self.time)

    def kinetic_energy(self) -> float:
        """``(rho/2) sum |u|^2 h^3`` with wall faces counted at half weight."""
        total = 0.0
        for c in range(3):
            a = self.u[c] ** 2
            if not self.bc[c].periodic:
                w = np.ones(a.shape[c])
                w[0] = w[-1] = 0.5
                shape = [1, 1, 1]
                shape[c] = -1
                a = a * w.reshape(shape)
            total += a.sum()
        return 0.5 * self.rho * total * self.h ** 3

    def cell_center_velocity(self) -> np.ndarray:
        """Average face velocities to cell centers, shape ``(3, Nx, Ny, Nz)``."""
        out = np.empty((3,) + self.shape)
        for c in range(3):
            a = self.u[c]
            if self.bc[c].periodic:
                out[c] = 0.5 * (a + np.roll(a, -1, axis=c))
            else:
                lo = [slice(None)] * 3
                hi = [slice(None)] * 3
                lo[c], hi[c] = slice(0, -1), slice(1, None)
                out[c] = 0.5 * (a[tuple(lo)] + a[tuple(hi)])
        return out
