"""Run configuration, named presets and YAML loading."""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from ..fluid.solvers import SolverConfig


@dataclass
class RunConfig:
    """Everything needed to reproduce one run.

    Lengths are in micrometres, times in seconds and velocities in cm/s.  The
    wall axis (``None`` for a triply periodic box) carries Dirichlet data
    ``wall_lower``/``wall_upper``; every other axis is periodic.
    """

    experiment: str = "relaxation"
    extents_um: tuple = (16.0, 16.0, 16.0)
    h_um: float = 0.8
    dt: float = 1.8e-7
    t_stop: float = 1.8e-4
    scheme: str = "rk2"
    kernel: str = "roma3"
    wall_axis: int | None = 1
    wall_lower: tuple = (0.0, 0.0, 0.0)
    wall_upper: tuple = (0.0, 0.0, 0.0)
    rho: float = 1.0
    mu: float = 1.2e-2
    cells: list = field(default_factory=list)
    endothelium: dict | None = None
    solver: dict = field(default_factory=dict)
    sample_every: float = 1.8e-5
    seed: int = 0
    initial_flow: str = "rest"  # or "couette"
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.extents_um = tuple(float(x) for x in self.extents_um)
        self.wall_lower = tuple(float(x) for x in self.wall_lower)
        self.wall_upper = tuple(float(x) for x in self.wall_upper)
        if self.dt <= 0 or self.h_um <= 0:
            raise ValueError("time step and grid spacing must be positive")
        if self.t_stop < 0:
            raise ValueError("stop time must be nonnegative")
        for L in self.extents_um:
            n = L / self.h_um
            if abs(n - round(n)) > 1e-9 * max(n, 1.0):
                raise ValueError(f"extent {L} um is not an integer multiple of h = {self.h_um} um")
        if self.scheme not in ("rk2", "pmii"):
            raise ValueError(f"scheme must be 'rk2' or 'pmii', got {self.scheme!r}")
        if self.wall_axis not in (None, 0, 1, 2):
            raise ValueError("wall axis must be 0, 1, 2 or null")
        if self.initial_flow not in ("rest", "couette"):
            raise ValueError(f"initial flow must be 'rest' or 'couette', got {self.initial_flow!r}")
        SolverConfig(**self.solver)

    @property
    def grid_shape(self) -> tuple:
        return tuple(int(round(L / self.h_um)) for L in self.extents_um)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_stop / self.dt))

    @property
    def sample_stride(self) -> int:
        return max(1, int(round(self.sample_every / self.dt)))

    def solver_config(self) -> SolverConfig:
        return SolverConfig(**self.solver)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    def replace(self, **kw) -> "RunConfig":
        d = copy.deepcopy(self.to_dict())
        d.update(kw)
        return RunConfig(**d)


def _rbc(center, n_data, n_sample, **kw):
    d = {"kind": "rbc", "center_um": list(center), "n_data": n_data, "n_sample": n_sample}
    d.update(kw)
    return d


def relaxation_config(r: int = 1, **kw) -> RunConfig:
    """Stretched-RBC relaxation at refinement ``r`` (h = 0.8/r um, dt = 180/r ns)."""
    cell = _rbc((8.0, 8.0, 8.0), 125 * r * r, 500 * r * r,
                rotation=[[0, -np.pi / 2]], stretch=[1 / 1.1, 1.0, 1.1],
                law="skalak", forces=["tension"])
    base = dict(experiment="relaxation", extents_um=(16.0, 16.0, 16.0), h_um=0.8 / r,
                dt=1.8e-7 / r, t_stop=1.8e-4, scheme="rk2", kernel="roma3", wall_axis=1,
                cells=[cell], sample_every=1.8e-5, extras={"refinement": r})
    base.update(kw)
    return RunConfig(**base)


def shear_config(shear_rate: float = 50.0, h_um: float = 0.8, **kw) -> RunConfig:
    """Single RBC tilted 1 rad about x in wall-driven shear along z."""
    ub = 0.5 * shear_rate * 16e-4
    cell = _rbc((8.0, 8.0, 8.0), 625, 2500, rotation=[[0, -np.pi / 2], [0, 1.0]],
                law="skalak", forces=["tension", "bending", "dissipation"])
    base = dict(experiment="shear", extents_um=(16.0, 16.0, 16.0), h_um=h_um, dt=1e-7,
                t_stop=0.02, scheme="pmii", kernel="bspline4", wall_axis=1,
                wall_lower=(0.0, 0.0, -ub), wall_upper=(0.0, 0.0, ub), cells=[cell],
                sample_every=2e-4, initial_flow="couette", extras={"shear_rate": shear_rate})
    base.update(kw)
    return RunConfig(**base)


def collision_config(h_um: float = 0.4, n_data: int = 625, n_sample: int = 2500,
                     force: float = 0.1, **kw) -> RunConfig:
    """Two RBCs on the line x = z, y = 8 um, pushed together by a constant force density."""
    gap = 4 * h_um
    sep = 2 * 3.91 + gap
    e = np.array([1.0, 0.0, 1.0]) / np.sqrt(2.0)
    c = np.array([8.0, 8.0, 8.0])
    ca, cb = c - 0.5 * sep * e, c + 0.5 * sep * e
    fa = (force * e).tolist()
    fb = (-force * e).tolist()
    cells = [_rbc(ca, n_data, n_sample, rotation=[[0, -np.pi / 2]], body_force=fa),
             _rbc(cb, n_data, n_sample, rotation=[[0, -np.pi / 2]], body_force=fb)]
    base = dict(experiment="collision", extents_um=(16.0, 16.0, 16.0), h_um=h_um, dt=5e-8,
                t_stop=1e-3, scheme="rk2", kernel="cosine4", wall_axis=1, cells=cells,
                sample_every=1e-5)
    base.update(kw)
    return RunConfig(**base)


def wholeblood_config(shape: str = "flat", **kw) -> RunConfig:
    """Reduced whole-blood preset: 16 x 12 x 16 um at h = 0.8 um, two RBCs, one platelet.

    The two RBCs lie flat above the endothelium, centered on a diagonal of
    the x-z plane and staggered by 2 um in height about y = 6 um.
    """
    base = dict(experiment="wholeblood", extents_um=(16.0, 12.0, 16.0), h_um=0.8, dt=5e-8,
                t_stop=2e-4, scheme="pmii", kernel="bspline4", wall_axis=1,
                wall_upper=(1.2, 0.0, 0.0), cells=[],
                endothelium={"n": 1000, "shape": shape, "y0": 1.0},
                sample_every=2e-5,
                extras={"rbc_centers_um": [[4.0, 5.0, 4.0], [12.0, 7.0, 12.0]],
                        "rbc_sites": [125, 500], "platelet_sites": [100, 100],
                        "n_platelets": 1, "perturb_um": 0.5, "perturb_angle": 0.2,
                        "gap_um": [0.3, 1.0], "rbc_clearance_um": 0.4,
                        "anchor_spacing_um": 3.9, "max_attempts": 50,
                        "settle_time": 0.0, "start_spacing": 3e-3, "n_starts": 4})
    base.update(kw)
    return RunConfig(**base)


PRESETS = {
    "relaxation": relaxation_config,
    "relaxation-r2": lambda **kw: relaxation_config(2, **kw),
    "relaxation-r3": lambda **kw: relaxation_config(3, **kw),
    "shear": shear_config,
    "shear-tumble": lambda **kw: shear_config(50.0, **kw),
    "shear-tanktread": lambda **kw: shear_config(1000.0, **kw),
    "collision": collision_config,
    "wholeblood": wholeblood_config,
    "wholeblood-bumpy": lambda **kw: wholeblood_config("bumpy", **kw),
}


def preset(name: str, **overrides) -> RunConfig:
    try:
        return PRESETS[name](**overrides)
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def load_config(path=None, preset_name: str | None = None, **overrides) -> RunConfig:
    """Start from a preset (if given), overlay keys from a YAML file and then ``overrides``."""
    base = preset(preset_name) if preset_name else RunConfig()
    data = base.to_dict()
    if path is not None:
        with open(Path(path)) as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ValueError("config file must hold a mapping at the top level")
        known = {f.name for f in fields(RunConfig)}
        unknown = set(loaded) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        data.update(loaded)
    data.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**data)


def dump_config(config: RunConfig, path) -> None:
    with open(Path(path), "w") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=True)
