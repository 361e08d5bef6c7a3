"""Command-line interface: run, validate and inspect scenarios.

Usage:
    porofrac run CONFIG [-o OUTDIR] [--jobs N] [--seed S]
    porofrac validate CONFIG
    porofrac mesh-info CONFIG

CONFIG is a TOML file path or the name of a bundled scenario
(``single_fracture_2d``, ``network_2d``).  The default output root is the
``POROFRAC_OUTPUT_ROOT`` environment variable, falling back to ``./runs``.
Non-converged runs are results, not failures: only configuration or mesh
errors produce a nonzero exit code.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .mdgeom import MeshError
from .runner import run_scenario
from .scenarios import ConfigError, builtin_scenario_names, load_scenario

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="porofrac",
        description="Mixed-dimensional poromechanics solver comparison harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario sweep")
    p_run.add_argument("config", help="TOML config path or bundled scenario name")
    p_run.add_argument("-o", "--outdir", default=None, help="output directory")
    p_run.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p_run.add_argument(
        "--seed", type=int, default=None,
        help="mesh jitter seed for randomized grids (default: no jitter)",
    )

    p_val = sub.add_parser("validate", help="validate a scenario without running")
    p_val.add_argument("config")

    p_info = sub.add_parser("mesh-info", help="build the mesh and print statistics")
    p_info.add_argument("config")
    return parser


def _load(config: str):
    try:
        return load_scenario(config)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        raise SystemExit(2)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    scenario = _load(args.config)

    if args.command == "validate":
        errors = scenario.validate()
        if errors:
            for e in errors:
                print(f"error: {e}")
            return 2
        grid = scenario.grid()
        try:
            mesh = scenario.build_mesh()
            stats = mesh.stats()
            size = (
                f"~{stats['matrix_cells'] + stats['fracture_cells'] + stats['intersection_cells']}"
                f" cells, {stats['mortar_cells']} mortar cells"
            )
        except MeshError as err:
            print(f"error: mesh: {err}")
            return 2
        print(f"OK, {len(grid)} runs ({size})")
        for spec in grid:
            print(f"  {spec.run_id}")
        return 0

    if args.command == "mesh-info":
        try:
            mesh = scenario.build_mesh()
        except MeshError as err:
            print(f"error: mesh: {err}", file=sys.stderr)
            return 2
        for key, val in mesh.stats().items():
            print(f"{key}: {val}")
        for f in mesh.fractures:
            print(
                f"fracture subdomain {f.id} (input {f.fracture_id}): "
                f"{f.num_cells} cells, ends {f.end_kind}"
            )
        return 0

    # run
    errors = scenario.validate()
    if errors:
        for e in errors:
            print(f"error: {e}", file=sys.stderr)
        return 2
    root = os.environ.get("POROFRAC_OUTPUT_ROOT", "runs")
    outdir = Path(args.outdir) if args.outdir else Path(root) / scenario.name
    try:
        records = run_scenario(scenario, outdir, jobs=args.jobs, seed=args.seed)
    except MeshError as err:
        print(f"error: mesh: {err}", file=sys.stderr)
        return 2
    n_conv = sum(1 for r in records if r.status == "Converged")
    print(f"{len(records)} runs -> {outdir} ({n_conv} converged, "
          f"{len(records) - n_conv} not)")
    for rec in records:
        print(f"  {rec.spec.run_id}: {rec.status} "
              f"[{rec.total_linear_solves} solves, {rec.wall_time:.2f}s]")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
