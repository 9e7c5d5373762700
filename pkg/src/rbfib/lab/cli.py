"""Command-line entry point.

Exit status is 0 when a run reaches its stop time, 2 when it halts on the
force-based stability condition and 1 on any error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import PRESETS, load_config

log = logging.getLogger("rbfib")

EXPERIMENTS = ("relaxation", "shear", "collision", "wholeblood")
DEFAULT_PRESET = {"relaxation": "relaxation", "shear": "shear-tumble",
                  "collision": "collision", "wholeblood": "wholeblood"}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rbfib", description="RBF immersed-boundary blood-flow experiments")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", type=Path, help="YAML file overriding preset keys")
        p.add_argument("--preset", default=DEFAULT_PRESET[name], choices=sorted(PRESETS))
        p.add_argument("--seed", type=int, help="random seed (overrides the config)")
        p.add_argument("--out", type=Path, help="output directory for snapshots and tables")
        p.add_argument("--steps", type=int, help="stop after this many steps")
        p.add_argument("--cache", type=Path, help="directory for cached operator matrices")
        p.add_argument("--resume", action="store_true",
                       help="continue from the latest snapshot in --out")
        if name == "relaxation":
            p.add_argument("--refinements", type=int, nargs="+",
                           help="run a convergence study over these refinements")
    for name, text in (("quadtest", "sphere quadrature convergence check"),
                       ("rbftest", "spherical-harmonic reproduction check")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", type=Path, help="ignored; accepted for uniformity")
        p.add_argument("--preset", help="ignored; accepted for uniformity")
        p.add_argument("--seed", type=int, help="ignored; the check is deterministic")
        p.add_argument("--out", type=Path, help="write the summary JSON here")
    return parser


def _summary_records(records, keys=()):
    return [{"step": r.step, "time": r.time, "kinetic": r.kinetic, "elastic": r.elastic,
             **{k: r.extra[k] for k in keys if k in r.extra}} for r in records]


def run_command(args) -> tuple[str, dict]:
    from . import experiments as ex

    if args.command == "quadtest":
        return "completed", ex.quadrature_check()
    if args.command == "rbftest":
        return "completed", ex.rbf_check()

    if args.resume:
        if args.out is None:
            raise ValueError("--resume needs --out")
        res = ex.resume(args.out, n_steps=args.steps, cache_dir=args.cache)
        return res.status, {"records": _summary_records(res.records)}

    overrides = {} if args.seed is None else {"seed": args.seed}
    cfg = load_config(args.config, args.preset, **overrides)

    if args.command == "relaxation":
        if args.refinements:
            results = []
            for r in args.refinements:
                cfg_r = load_config(args.config, f"relaxation-r{r}" if r > 1 else "relaxation",
                                    **overrides)
                out_r = None if args.out is None else args.out / f"r{r}"
                results.append(ex.run_relaxation(cfg_r, out_r, args.cache))
            status = "stability" if any(r.status == "stability" for r in results) else "completed"
            return status, {"convergence": ex.relaxation_convergence(results)}
        res = ex.run_relaxation(cfg, args.out, args.cache)
        summary = {"records": _summary_records(res.records),
                   "energy_decreasing": ex.energy_decreasing(res.records)}
    elif args.command == "shear":
        res = ex.run_shear(cfg, args.out, args.cache, args.steps)
        summary = {"records": _summary_records(res.records, ("inclination", "marker_angle")),
                   **res.data}
    elif args.command == "collision":
        res = ex.run_collision(cfg, args.out, args.cache, args.steps)
        summary = {"records": _summary_records(res.records, ("min_distance",)), **res.data}
    else:
        res = ex.run_whole_blood(cfg, out=args.out, cache_dir=args.cache, n_steps=args.steps)
        summary = {"records": _summary_records(res.records), "profile": res.data["profile"],
                   "anchors_um": res.data["anchors"], "gaps_um": res.data["gaps"]}
    return res.status, summary


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        status, summary = run_command(args)
    except Exception as exc:  # reported, not raised: the exit status carries the outcome
        log.error("%s: %s", type(exc).__name__, exc)
        if args.verbose:
            log.exception("details")
        return 1
    summary = _jsonable({"command": args.command, "status": status, **summary})
    text = json.dumps(summary, indent=2)
    if getattr(args, "out", None) is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "summary.json").write_text(text)
    print(text)
    return 2 if status == "stability" else 0


if __name__ == "__main__":
    sys.exit(main())
