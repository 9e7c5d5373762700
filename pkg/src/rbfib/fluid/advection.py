"""Conservative (divergence-form) advection on the staggered grid.

Component ``c`` of ``div(u u)`` is ``sum_a D_a[(A_a u_c)(A_c u_a)]`` with ``A``
a centered two-point average and ``D`` a centered difference.  Arrays carry a
one-cell ghost layer and a record of where their first entry sits, measured in
half cells, so that averages, products and differences line up automatically.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import MacGrid


@dataclass
class _Staggered:
    data: np.ndarray
    start: tuple  # position of data[0, 0, 0] in half-cell units

    def avg(self, axis: int) -> "_Staggered":
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis], hi[axis] = slice(0, -1), slice(1, None)
        start = list(self.start)
        start[axis] += 1
        return _Staggered(0.5 * (self.data[tuple(lo)] + self.data[tuple(hi)]), tuple(start))

    def diff(self, axis: int, h: float) -> "_Staggered":
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis], hi[axis] = slice(0, -1), slice(1, None)
        start = list(self.start)
        start[axis] += 1
        return _Staggered((self.data[tuple(hi)] - self.data[tuple(lo)]) / h, tuple(start))

    def crop(self, start, shape) -> np.ndarray:
        sl = []
        for a in range(3):
            off = start[a] - self.start[a]
            if off % 2 or off < 0:
                raise ValueError("misaligned staggered crop")
            i0 = off // 2
            if i0 + shape[a] > self.data.shape[a]:
                raise ValueError("staggered crop out of range")
            sl.append(slice(i0, i0 + shape[a]))
        return self.data[tuple(sl)]

    def __mul__(self, other: "_Staggered") -> "_Staggered":
        start = tuple(max(s, o) for s, o in zip(self.start, other.start))
        shape = tuple(
            min(s0 + 2 * n, o0 + 2 * m) - st
            for s0, n, o0, m, st in zip(self.start, self.data.shape, other.start,
                                        other.data.shape, start))
        shape = tuple((s + 1) // 2 for s in shape)
        return _Staggered(self.crop(start, shape) * other.crop(start, shape), start)


def padded_component(grid: MacGrid, c: int, u=None) -> _Staggered:
    """Component ``c`` with a ghost layer on every side."""
    a_ = (grid.u if u is None else u)[c]
    out = a_
    for a in range(3):
        bc = grid.bc[a]
        if bc.periodic:
            out = np.pad(out, [(1, 1) if b == a else (0, 0) for b in range(3)], mode="wrap")
            continue
        out = np.pad(out, [(1, 1) if b == a else (0, 0) for b in range(3)], mode="edge")
        first = [slice(None)] * 3
        last = [slice(None)] * 3
        in1 = [slice(None)] * 3
        in2 = [slice(None)] * 3
        first[a], last[a] = 0, -1
        if a == c:
            # wall faces are stored; reflect through them (values unused)
            in1[a], in2[a] = 2, -3
            wall_lo = [slice(None)] * 3
            wall_hi = [slice(None)] * 3
            wall_lo[a], wall_hi[a] = 1, -2
            out[tuple(first)] = 2.0 * out[tuple(wall_lo)] - out[tuple(in1)]
            out[tuple(last)] = 2.0 * out[tuple(wall_hi)] - out[tuple(in2)]
        else:
            in1[a], in2[a] = 1, -2
            out[tuple(first)] = 2.0 * bc.lower[c] - out[tuple(in1)]
            out[tuple(last)] = 2.0 * bc.upper[c] - out[tuple(in2)]
    start = tuple((0 if a == c else 1) - 2 for a in range(3))
    return _Staggered(out, start)


def unknown_start(grid: MacGrid, c: int) -> tuple:
    return tuple(
        (2 if (a == c and not grid.bc[a].periodic) else (0 if a == c else 1)) for a in range(3))


def advection(grid: MacGrid, u=None) -> list[np.ndarray]:
    """``div(u u)`` at the unknown faces of each component."""
    padded = [padded_component(grid, c, u) for c in range(3)]
    out = []
    for c in range(3):
        total = None
        for a in range(3):
            flux = padded[c].avg(a) * padded[a].avg(c)
            term = flux.diff(a, grid.h).crop(unknown_start(grid, c), grid.unknown_shape(c))
            total = term if total is None else total + term
        out.append(total)
    return out
