"""The coupled fluid-structure time loop."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..cells import (UM, AssembledCell, CellSpec, Endothelium, Placement, assemble_cell,
                     rotation_about)
from ..coupling import StabilityStatus, get_kernel, interpolate_velocity, spread_force, stability_check
from ..fluid import AxisBC, FluidSolver, MacGrid
from ..fluid.grid import PERIODIC
from ..membrane import MaterialParams
from ..quadrature import surface_weights
from .config import RunConfig

log = logging.getLogger(__name__)


class StabilityStop(RuntimeError):
    """Raised internally when the force-based time-step condition fails."""

    def __init__(self, status: StabilityStatus, time: float):
        super().__init__(f"stability condition violated at t={time:.6e} s: dt={status.dt:.3e} > "
                         f"{status.threshold:.3e} (max force density {status.force_max:.3e})")
        self.status = status
        self.time = time


def make_grid(config: RunConfig) -> MacGrid:
    bc = [PERIODIC, PERIODIC, PERIODIC]
    if config.wall_axis is not None:
        bc[config.wall_axis] = AxisBC.wall(config.wall_lower, config.wall_upper)
    grid = MacGrid(config.grid_shape, config.h_um * UM, tuple(bc), config.rho, config.mu)
    if config.initial_flow == "couette" and config.wall_axis is not None:
        set_couette(grid, config.wall_axis)
    return grid


def set_couette(grid: MacGrid, axis: int) -> None:
    """Fill the steady linear profile between the two walls."""
    bc = grid.bc[axis]
    L = grid.lengths[axis]
    for c in range(3):
        if c == axis:
            continue
        n = grid.shape[axis]
        y = (np.arange(n) + 0.5) * grid.h / L
        prof = bc.lower[c] + (bc.upper[c] - bc.lower[c]) * y
        shape = [1, 1, 1]
        shape[axis] = -1
        grid.u[c][...] = prof.reshape(shape)


def cell_spec_from_dict(d: dict) -> CellSpec:
    kind = d.get("kind", "rbc")
    ctor = CellSpec.rbc if kind == "rbc" else CellSpec.platelet
    kw = {}
    for key in ("kernel_exponent", "max_degree", "law"):
        if key in d:
            kw[key] = d[key]
    if "forces" in d:
        kw["forces"] = tuple(d["forces"])
    spec = ctor(int(d.get("n_data", 2500 if kind == "rbc" else 900)),
                int(d.get("n_sample", 10000 if kind == "rbc" else 900)), **kw)
    if "material" in d:
        mat = {**spec.material.__dict__, **d["material"]}
        spec = spec.with_(material=MaterialParams(**mat))
    return spec


def placement_from_dict(d: dict) -> Placement:
    R = np.eye(3)
    for axis, angle in d.get("rotation", []):
        R = rotation_about(int(axis), float(angle)) @ R
    if "rotation_matrix" in d:
        R = np.asarray(d["rotation_matrix"], dtype=float)
    S = np.diag(d.get("stretch", [1.0, 1.0, 1.0]))
    t = UM * np.asarray(d.get("center_um", [0.0, 0.0, 0.0]), dtype=float)
    return Placement(rotation=R, translation=t, stretch=S)


@dataclass
class StepRecord:
    step: int
    time: float
    kinetic: float
    elastic: float
    extra: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return self.kinetic + self.elastic


class Simulation:
    """Fluid grid, immersed cells and the loop that couples them.

    One step evaluates forces from the start-of-step configuration, spreads
    them, advances the fluid, then moves every point with the new velocity.
    """

    def __init__(self, config: RunConfig, cells: list | None = None,
                 endothelium: Endothelium | None = None, cache_dir=None):
        self.config = config
        self.grid = make_grid(config)
        self.fluid = FluidSolver(self.grid, config.solver_config())
        self.kernel = get_kernel(config.kernel)
        self.body_forces = []
        if cells is None:
            cells = []
            for d in config.cells:
                cells.append(assemble_cell(cell_spec_from_dict(d), placement_from_dict(d), cache_dir))
        self.cells: list[AssembledCell] = list(cells)
        for i, d in enumerate(config.cells):
            if i < len(self.cells) and "body_force" in d:
                self.body_forces.append(np.asarray(d["body_force"], dtype=float))
            else:
                self.body_forces.append(None)
        self.body_forces += [None] * (len(self.cells) - len(self.body_forces))
        if endothelium is None and config.endothelium:
            e = config.endothelium
            endothelium = Endothelium.build(int(e.get("n", 16000)), e.get("shape", "flat"),
                                            float(e.get("y0", 1.0)),
                                            (config.extents_um[0], config.extents_um[2]))
        self.endothelium = endothelium
        self.step_count = 0
        self.last_force = None

    @property
    def time(self) -> float:
        return self.grid.time

    # -- forces --------------------------------------------------------------

    def point_forces(self):
        """List of ``(points, weighted forces)`` for every immersed object."""
        out = []
        for cell, body in zip(self.cells, self.body_forces):
            X, wF = cell.weighted_forces()
            if body is not None:
                gs, _ = cell.geometry()
                w = surface_weights(cell.template.weights.sigma, gs.sqrt_g)
                wF = wF + w[:, None] * body[None, :]
            out.append((X, wF))
        if self.endothelium is not None:
            out.append(self.endothelium.weighted_forces())
        return out

    def spread(self, point_forces=None) -> list[np.ndarray]:
        g = self.grid
        f = [np.zeros(g.component_shape(c)) for c in range(3)]
        for X, wF in (self.point_forces() if point_forces is None else point_forces):
            part = spread_force(g, self.kernel, X, wF, np.ones(len(X)))
            for c in range(3):
                f[c] += part[c]
        return f

    # -- stepping ------------------------------------------------------------

    def _movers(self):
        movers = list(self.cells)
        if self.endothelium is not None:
            movers.append(self.endothelium)
        return movers

    def step(self) -> StabilityStatus:
        cfg = self.config
        f = self.spread()
        status = stability_check(cfg.dt, self.grid.h, self.grid.rho, f)
        self.last_force = f
        if not status.passed:
            raise StabilityStop(status, self.time)
        self.fluid.step(f, cfg.dt, cfg.scheme)
        for obj in self._movers():
            U = interpolate_velocity(self.grid, self.kernel, obj.positions)
            obj.velocities = U
            obj.positions = obj.positions + cfg.dt * U
        self.step_count += 1
        return status

    def energy(self) -> tuple[float, float]:
        """``(kinetic, elastic)`` energies in erg."""
        return self.grid.kinetic_energy(), float(sum(c.energy() for c in self.cells))

    def record(self, **extra) -> StepRecord:
        k, e = self.energy()
        return StepRecord(self.step_count, self.time, k, e, dict(extra))

    def run(self, n_steps: int | None = None, sample_stride: int | None = None, callback=None):
        """Advance ``n_steps`` (default: to the configured stop time).

        Returns ``(status, records)`` where status is ``"completed"`` or
        ``"stability"``.  ``callback(sim)`` may return a dict merged into each
        record.
        """
        cfg = self.config
        n_steps = cfg.n_steps - self.step_count if n_steps is None else n_steps
        stride = cfg.sample_stride if sample_stride is None else sample_stride
        records = []

        def sample():
            extra = callback(self) if callback else {}
            records.append(self.record(**(extra or {})))

        if self.step_count % stride == 0:
            sample()
        for _ in range(n_steps):
            try:
                self.step()
            except StabilityStop as stop:
                log.warning("%s", stop)
                sample()
                return "stability", records
            if self.step_count % stride == 0:
                sample()
        return "completed", records

    # -- state ---------------------------------------------------------------

    def state(self) -> dict:
        """Arrays sufficient to restart the run bit-for-bit."""
        g = self.grid
        s = {"u0": g.u[0], "u1": g.u[1], "u2": g.u[2], "p": g.p, "q": g.q,
             "q_half": self.fluid.q_half,
             "clock": np.array([g.time, float(self.step_count)])}
        for i, obj in enumerate(self._movers()):
            s[f"X{i}"] = obj.positions
            s[f"U{i}"] = obj.velocities
        return s

    def load_state(self, s: dict) -> None:
        g = self.grid
        g.u = [np.array(s["u0"]), np.array(s["u1"]), np.array(s["u2"])]
        g.p, g.q = np.array(s["p"]), np.array(s["q"])
        self.fluid.q_half = np.array(s["q_half"])
        g.time = float(s["clock"][0])
        self.step_count = int(s["clock"][1])
        for i, obj in enumerate(self._movers()):
            obj.positions = np.array(s[f"X{i}"])
            obj.velocities = np.array(s[f"U{i}"])
