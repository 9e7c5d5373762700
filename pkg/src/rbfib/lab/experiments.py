"""Experiment drivers: relaxation, shear, collision, whole blood and the quick numerical checks."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from ..cells import (UM, Endothelium, assemble_cell, endothelium_height,
                     endothelium_normals, rotation_about)
from ..quadrature import SPHERE_AREA, sphere_weights, surface_weights
from ..rbf import build_system, interpolate
from ..sphere import HarmonicBasis, bauer_spiral, eval_harmonics
from . import diagnostics as dg
from .config import RunConfig
from .io import RunWriter, load_snapshot
from .simulation import Simulation, cell_spec_from_dict, placement_from_dict

log = logging.getLogger(__name__)


class PlacementError(RuntimeError):
    """Random initialization could not satisfy its clearance constraints."""


@dataclass
class RunResult:
    """Outcome of one run: ``status`` is ``"completed"`` or ``"stability"``."""

    status: str
    records: list
    simulation: Simulation
    data: dict = field(default_factory=dict)

    def series(self, key: str) -> np.ndarray:
        if key in ("time", "kinetic", "elastic", "total", "step"):
            return np.array([getattr(r, key) for r in self.records])
        return np.array([r.extra[key] for r in self.records])


def execute(sim: Simulation, callback=None, out=None, n_steps=None, snapshots: bool = True,
            metadata: dict | None = None) -> tuple[str, list]:
    """Run ``sim`` to its stop time, writing samples and snapshots to ``out`` if given."""
    writer = RunWriter(out, sim.config, metadata) if out is not None else None

    def on_sample(s):
        extra = callback(s) if callback else {}
        if writer is not None:
            if snapshots:
                writer.write_snapshot(s.step_count, s.time, s.state())
        return extra

    status, records = sim.run(n_steps=n_steps, callback=on_sample)
    if writer is not None:
        for rec in records:
            writer.write_record(rec)
        writer.update_metadata(status=status, steps=sim.step_count, final_time=sim.time)
    return status, records


def resume(out_dir, n_steps=None, callback=None, cache_dir=None) -> RunResult:
    """Continue a run from the latest snapshot in ``out_dir`` (same directory)."""
    from .config import load_config
    config = load_config(f"{out_dir}/config.yaml")
    sim = Simulation(config, cache_dir=cache_dir)
    sim.load_state(load_snapshot(out_dir))
    writer = RunWriter(out_dir, config)
    first = sim.step_count

    def on_sample(s):
        extra = callback(s) if callback else {}
        if s.step_count != first:
            writer.write_snapshot(s.step_count, s.time, s.state())
        return extra

    status, records = sim.run(n_steps=n_steps, callback=on_sample)
    # the sample at the restart point repeats the last one of the previous leg
    records = [r for r in records if r.step != first]
    for rec in records:
        writer.write_record(rec)
    writer.update_metadata(status=status, steps=sim.step_count, final_time=sim.time)
    return RunResult(status, records, sim)


# ---------------------------------------------------------------------------
# relaxation


def surface_probe(cell, sites=None) -> np.ndarray:
    """Positions (cm) of the reconstructed surface at the Bauer probe sites."""
    sites = bauer_spiral(dg.PROBE_SITES) if sites is None else sites
    return cell.evaluate_at(sites)


def run_relaxation(config: RunConfig, out=None, cache_dir=None) -> RunResult:
    """Relax a stretched RBC; returns energies plus final surface and velocity probes."""
    sim = Simulation(config, cache_dir=cache_dir)
    cell = sim.cells[0]
    initial = {"velocity": dg.probe_velocity(sim.grid), "positions": surface_probe(cell)}
    status, records = execute(sim, out=out)
    data = {"initial": initial,
            "positions": surface_probe(cell),
            "velocity": dg.probe_velocity(sim.grid),
            "refinement": config.extras.get("refinement")}
    return RunResult(status, records, sim, data)


def relaxation_convergence(results) -> dict:
    """Successive differences and observed orders across consecutive refinements."""
    results = list(results)
    r0 = results[0].data.get("refinement") or 1
    _, omega = dg.probe_sites()
    return {"positions": dg.convergence_table([r.data["positions"] for r in results], omega, r0),
            "velocity": dg.convergence_table([r.data["velocity"] for r in results], None, r0)}


def energy_decreasing(records, skip: int = 1, rtol: float = 0.0) -> bool:
    """Whether total energy decreases at every sample after the first ``skip`` intervals."""
    E = np.array([r.total for r in records])[skip:]
    return bool(np.all(np.diff(E) < rtol * np.abs(E[:-1])))


# ---------------------------------------------------------------------------
# shear


def _rim_marker(cell) -> int:
    """A data site on the rim of the cell, where circulation is most visible."""
    return int(np.argmin(np.abs(cell.template.data_sites[:, 1])))


def shear_sample(sim: Simulation, marker: int) -> dict:
    cell = sim.cells[0]
    gs, _ = cell.geometry()
    w = surface_weights(cell.template.weights.sigma, gs.sqrt_g)
    c = (w[:, None] * gs.X).sum(axis=0) / w.sum()
    return {"inclination": dg.inclination(gs.X, w),
            "marker_angle": dg.marker_angle(cell.positions, marker, c)}


def run_shear(config: RunConfig, out=None, cache_dir=None, n_steps=None) -> RunResult:
    """Single RBC in wall-driven shear; records inclination and a rim marker's angle."""
    sim = Simulation(config, cache_dir=cache_dir)
    marker = _rim_marker(sim.cells[0])
    status, records = execute(sim, lambda s: shear_sample(s, marker), out, n_steps)
    inc = [r.extra["inclination"] for r in records]
    mk = [r.extra["marker_angle"] for r in records]
    data = {"sign_changes": dg.sign_changes(inc), "circulation": dg.circulation(mk, inc),
            "min_abs_inclination": float(np.min(np.abs(inc))) if inc else None}
    return RunResult(status, records, sim, data)


# ---------------------------------------------------------------------------
# collision


def collision_sample(sim: Simulation) -> dict:
    pts = [c.sample_positions() for c in sim.cells]
    return {"min_distance": dg.min_intercell_distance(pts, sim.grid.lengths,
                                                      [b.periodic for b in sim.grid.bc])}


def run_collision(config: RunConfig, out=None, cache_dir=None, n_steps=None) -> RunResult:
    """Two RBCs pushed together until the stability stop or the stop time."""
    sim = Simulation(config, cache_dir=cache_dir)
    status, records = execute(sim, collision_sample, out, n_steps)
    d = [r.extra["min_distance"] for r in records]
    return RunResult(status, records, sim, {"min_distance": float(np.min(d)) if d else None})


# ---------------------------------------------------------------------------
# whole blood


@dataclass
class WholeBloodInit:
    """Placements chosen by :func:`init_whole_blood` (lengths in um)."""

    cells: list          # cell dicts for RunConfig.cells: RBCs first, then platelets
    anchors: np.ndarray  # endothelium anchor points, one per platelet
    gaps: np.ndarray     # platelet-to-anchor distances
    attempts: list       # platelet placement attempts used
    start_times: np.ndarray  # Poisson-process start times after settling

    def to_dict(self) -> dict:
        return {"cells": self.cells, "anchors": self.anchors.tolist(), "gaps": self.gaps.tolist(),
                "attempts": list(self.attempts), "start_times": self.start_times.tolist()}


def _cell_dict(kind, sites, R, center, material=None):
    d = {"kind": kind, "n_data": int(sites[0]), "n_sample": int(sites[1]),
         "rotation_matrix": np.asarray(R).tolist(), "center_um": np.asarray(center).tolist()}
    if material:
        d["material"] = dict(material)
    return d


def _sample_points_um(d: dict) -> np.ndarray:
    spec = cell_spec_from_dict(d)
    cell = assemble_cell(spec, placement_from_dict(d))
    return cell.sample_positions() / UM


def place_rbcs(config: RunConfig, rng: np.random.Generator) -> list:
    """Staggered RBC centers, randomly translated and rotated with ``2h`` clearance."""
    ex = config.extras
    lengths = config.extents_um
    wall = config.endothelium or {}
    clearance = 2.0 * config.h_um
    sites = ex.get("rbc_sites", [2500, 10000])
    flat = rotation_about(0, -np.pi / 2)  # symmetry axis along the wall normal
    base = [np.asarray(c, dtype=float) for c in ex["rbc_centers_um"]]
    for _ in range(int(ex.get("max_attempts", 50))):
        cells = []
        for c in base:
            R = Rotation.from_rotvec(rng.uniform(-1, 1, 3) * ex.get("perturb_angle", 0.2)).as_matrix()
            t = c + rng.uniform(-1, 1, 3) * ex.get("perturb_um", 0.5)
            cells.append(_cell_dict("rbc", sites, R @ flat, t))
        pts = [_sample_points_um(d) for d in cells]
        ok = len(pts) < 2 or dg.min_intercell_distance(pts, lengths) >= clearance
        for P in pts:
            y, _, _ = endothelium_height(P[:, 0], P[:, 2], wall.get("shape", "flat"),
                                         wall.get("y0", 1.0), (lengths[0], lengths[2]))
            ok = ok and np.min(P[:, 1] - y) >= clearance and np.max(P[:, 1]) <= lengths[1] - clearance
        if ok:
            return cells
    raise PlacementError("could not place RBCs with the required clearance")


def place_platelets(config: RunConfig, rbc_points_um, rng: np.random.Generator):
    """Orient each platelet against the endothelium at a random anchor point.

    The platelet's outward normal at a random data site is turned to oppose
    the wall normal at the anchor, and that site is put a random distance
    from the anchor.  A placement within the RBC clearance of any RBC is
    retried with a different platelet site.
    """
    ex = config.extras
    lengths = config.extents_um
    wall = config.endothelium or {}
    shape, y0 = wall.get("shape", "flat"), wall.get("y0", 1.0)
    wall_pts = Endothelium.build(int(wall.get("n", 16000)), shape, y0,
                                 (lengths[0], lengths[2])).positions / UM
    n_plt = int(ex.get("n_platelets", 2))
    spacing = float(ex.get("anchor_spacing_um", 3.9))
    gap_lo, gap_hi = ex.get("gap_um", [0.3, 1.0])
    rbc_clear = float(ex.get("rbc_clearance_um", 0.4))
    max_attempts = int(ex.get("max_attempts", 50))
    sites = ex.get("platelet_sites", [900, 900])

    anchors = []
    for _ in range(max_attempts * n_plt):
        if len(anchors) == n_plt:
            break
        a = wall_pts[rng.integers(len(wall_pts))]
        if all(dg.min_intercell_distance([a[None], b[None]], lengths) >= spacing for b in anchors):
            anchors.append(a)
    if len(anchors) < n_plt:
        raise PlacementError(f"could not choose {n_plt} anchors {spacing} um apart")
    anchors = np.array(anchors)
    normals = endothelium_normals(anchors, shape, y0, (lengths[0], lengths[2]))

    spec = cell_spec_from_dict({"kind": "platelet", "n_data": sites[0], "n_sample": sites[1]})
    ref = assemble_cell(spec)
    _, gd = ref.geometry()
    ref_pts, ref_n = gd.X / UM, gd.n
    ref_samples = ref.sample_positions() / UM

    cells, gaps, attempts = [], [], []
    for a, ne in zip(anchors, normals):
        for attempt in range(1, max_attempts + 1):
            j = rng.integers(len(ref_pts))
            R, _ = Rotation.align_vectors([-ne], [ref_n[j]])
            R = (Rotation.from_rotvec(ne * rng.uniform(0, 2 * np.pi)) * R).as_matrix()
            gap = rng.uniform(gap_lo, gap_hi)
            t = a + gap * ne - R @ ref_pts[j]
            P = ref_samples @ R.T + t
            y, _, _ = endothelium_height(P[:, 0], P[:, 2], shape, y0, (lengths[0], lengths[2]))
            above = np.min(P[:, 1] - y) >= 0.5 * gap_lo and np.max(P[:, 1]) < lengths[1]
            clear = all(dg.min_intercell_distance([P, Q], lengths) >= rbc_clear
                        for Q in rbc_points_um)
            if above and clear:
                cells.append(_cell_dict("platelet", sites, R, t))
                gaps.append(gap)
                attempts.append(attempt)
                break
        else:
            raise PlacementError(f"platelet placement failed after {max_attempts} attempts")
    return cells, anchors, np.array(gaps), attempts


def init_whole_blood(config: RunConfig, seed: int | None = None) -> WholeBloodInit:
    """Seeded placement of RBCs and platelets; identical seeds give identical placements."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    rbcs = place_rbcs(config, rng)
    rbc_pts = [_sample_points_um(d) for d in rbcs]
    plts, anchors, gaps, attempts = place_platelets(config, rbc_pts, rng)
    ex = config.extras
    settle = float(ex.get("settle_time", 0.0))
    n_starts = int(ex.get("n_starts", 4))
    starts = settle + np.concatenate([[0.0], np.cumsum(
        rng.exponential(float(ex.get("start_spacing", 3e-3)), n_starts - 1))])
    return WholeBloodInit(rbcs + plts, anchors, gaps, attempts, starts)


def wholeblood_sample(sim: Simulation, wall_points) -> dict:
    out = {}
    rbcs = [c for c in sim.cells if c.spec.kind == "rbc"]
    for i, c in enumerate(c for c in sim.cells if c.spec.kind == "platelet"):
        diag = dg.platelet_diagnostics(c.positions / UM, c.template.reference_positions / UM,
                                       sim.endothelium.positions / UM)
        out[f"platelet{i}_wall_distance"] = diag["wall_distance"]
        out[f"platelet{i}_aspect_change"] = diag["aspect_change"]
        out[f"platelet{i}_angle"] = diag["angle"]
        if rbcs:
            out[f"platelet{i}_rbc_distance"] = min(
                dg.min_intercell_distance([c.sample_positions() / UM, r.sample_positions() / UM],
                                          sim.config.extents_um) for r in rbcs)
    return out


def run_whole_blood(config: RunConfig, seed: int | None = None, out=None, cache_dir=None,
                    n_steps=None) -> RunResult:
    """Settle RBCs against the endothelium (if configured), add platelets and run.

    The velocity profile is averaged over all samples of the platelet phase.
    """
    rng = np.random.default_rng(config.seed if seed is None else seed)
    settle = float(config.extras.get("settle_time", 0.0))
    rbcs = place_rbcs(config, rng)
    rbc_sim = None
    if settle > 0:
        rbc_sim = Simulation(config.replace(cells=rbcs, t_stop=settle), cache_dir=cache_dir)
        rbc_sim.run()
        rbc_pts = [c.sample_positions() / UM for c in rbc_sim.cells]
    else:
        rbc_pts = [_sample_points_um(d) for d in rbcs]
    plts, anchors, gaps, attempts = place_platelets(config, rbc_pts, rng)
    run_cfg = config.replace(cells=rbcs + plts)
    sim = Simulation(run_cfg, cache_dir=cache_dir)
    if rbc_sim is not None:
        for new, old in zip(sim.cells, rbc_sim.cells):
            new.positions, new.velocities = old.positions.copy(), old.velocities.copy()
        sim.grid.u = [a.copy() for a in rbc_sim.grid.u]
        sim.grid.p, sim.grid.q = rbc_sim.grid.p.copy(), rbc_sim.grid.q.copy()
        sim.endothelium = rbc_sim.endothelium
    profiles = []

    def sample(s):
        profiles.append(np.moveaxis(s.grid.cell_center_velocity(), 0, -1))
        return wholeblood_sample(s, None)

    meta = {"anchors_um": anchors, "gaps_um": gaps, "attempts": attempts, "seed": seed}
    status, records = execute(sim, sample, out, n_steps, metadata=meta)
    data = {"profile": dg.flow_profile(profiles), "anchors": anchors, "gaps": gaps,
            "attempts": attempts}
    return RunResult(status, records, sim, data)


# ---------------------------------------------------------------------------
# quick numerical checks


def quadrature_check(sizes=(400, 1600, 6400)) -> dict:
    """Weight sum, second-moment error and the exp(z) convergence order."""
    exact = 2 * np.pi * (np.e - 1 / np.e)
    out = {"n": list(sizes), "exp_error": []}
    for n in sizes:
        sw = sphere_weights(bauer_spiral(n))
        z = np.sin(sw.sites[:, 1])
        out["exp_error"].append(float(abs(sw.integrate(np.exp(z)) - exact) / exact))
    sw = sphere_weights(bauer_spiral(2500))
    z = np.sin(sw.sites[:, 1])
    out["sum_error"] = float(abs(sw.omega.sum() - SPHERE_AREA))
    out["z2_error"] = float(abs(sw.integrate(z * z) - SPHERE_AREA / 3) / (SPHERE_AREA / 3))
    e = np.array(out["exp_error"])
    # spacing scales as n^(-1/2)
    out["orders"] = (np.log(e[:-1] / e[1:]) / (0.5 * np.log(np.array(sizes[1:]) / np.array(sizes[:-1])))).tolist()
    return out


def rbf_check(n_data: int = 625, kernel_exponent: int = 7, max_degree: int = 5,
              n_eval: int = 2000) -> dict:
    """Max error reproducing every spherical harmonic of degree <= max_degree."""
    system = build_system(bauer_spiral(n_data), kernel_exponent, max_degree)
    Y_data = eval_harmonics(HarmonicBasis(max_degree), bauer_spiral(n_data))
    targets = bauer_spiral(n_eval) * np.array([1.0, 0.999])
    Y_eval = eval_harmonics(HarmonicBasis(max_degree), targets)
    coef = interpolate(system, Y_data)
    err = np.abs(coef.evaluate(system, targets) - Y_eval).max(axis=0)
    return {"max_error": float(err.max()), "per_harmonic": err.tolist()}
