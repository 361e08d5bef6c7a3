"""Sweep execution and machine-readable outputs.

For every grid point the runner executes initialization followed by the time
loop and writes:

* ``summary.csv`` - one row per run (no wall times, so reruns are
  byte-identical);
* ``residuals/<run_id>.csv`` - per-iteration residual and increment norms,
  with iteration 0 carrying the initial residual;
* ``states/<run_id>.csv`` - per-iteration contact-state census;
* ``run.json`` - provenance: config echo, mesh statistics, package version,
  wall times and diagnostic messages.

Non-convergence is a result, not a crash: the process exit code stays zero
as long as the configuration itself is valid.
"""
from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .scenarios import RunSpec, Scenario
from .solvers import InitializationError, initialize, time_loop

__all__ = ["RunRecord", "run_scenario", "SUMMARY_COLUMNS"]

SUMMARY_COLUMNS = (
    "run_id",
    "solver",
    "c",
    "dilation_angle_deg",
    "overpressure_pa",
    "status",
    "total_linear_solves",
    "outer_iterations",
)


@dataclass
class RunRecord:
    scenario_hash: str
    spec: RunSpec
    status: str
    total_linear_solves: int
    outer_iterations: int
    wall_time: float
    message: str = ""
    init_solves: int = 0
    aperture_clamps_final: int = 0
    # Per-iteration series for the residuals/states files.
    initial_residual: float = np.inf
    residual_history: list = None
    increment_history: list = None
    state_census: list = None
    initial_census: tuple = (0, 0, 0)

    def summary_row(self) -> list[str]:
        return [
            self.spec.run_id,
            self.spec.solver,
            repr(self.spec.c),
            repr(self.spec.dilation_angle_deg),
            repr(self.spec.overpressure),
            self.status,
            str(self.total_linear_solves),
            str(self.outer_iterations),
        ]


def _execute(scenario: Scenario, spec: RunSpec, seed) -> RunRecord:
    import time as _time

    t0 = _time.perf_counter()
    mesh = scenario.build_mesh(seed=seed)
    problem = scenario.make_problem(spec, mesh)
    cfg = scenario.solver_config(spec)
    try:
        state, init_report = initialize(problem, cfg)
    except InitializationError as err:
        rep = err.report
        return RunRecord(
            scenario_hash=scenario.config_hash(),
            spec=spec,
            status=rep.status,
            total_linear_solves=rep.total_linear_solves,
            outer_iterations=rep.outer_iterations,
            wall_time=_time.perf_counter() - t0,
            message=f"initialization failed: {rep.status}",
            init_solves=rep.total_linear_solves,
            initial_residual=rep.initial_residual,
            residual_history=rep.residual_history,
            increment_history=rep.increment_history,
            state_census=rep.state_census,
            initial_census=rep.initial_census,
        )
    reports = time_loop(state, problem, cfg)
    status = reports[-1].status if reports else "Converged"
    residuals, increments, census = [], [], []
    for rep in reports:
        residuals.extend(rep.residual_history)
        increments.extend(rep.increment_history)
        census.extend(rep.state_census)
    return RunRecord(
        scenario_hash=scenario.config_hash(),
        spec=spec,
        status=status,
        total_linear_solves=sum(r.total_linear_solves for r in reports),
        outer_iterations=sum(r.outer_iterations for r in reports),
        wall_time=_time.perf_counter() - t0,
        message="; ".join(r.message for r in reports if r.message),
        init_solves=init_report.total_linear_solves,
        aperture_clamps_final=reports[-1].aperture_clamps_final if reports else 0,
        initial_residual=reports[0].initial_residual if reports else 0.0,
        residual_history=residuals,
        increment_history=increments,
        state_census=census,
        initial_census=reports[0].initial_census if reports else (0, 0, 0),
    )


def _execute_star(args):
    return _execute(*args)


def run_scenario(
    scenario: Scenario,
    outdir: Path,
    jobs: int = 1,
    seed: int | None = None,
) -> list[RunRecord]:
    """Execute the whole sweep grid and write the output files."""
    outdir = Path(outdir)
    (outdir / "residuals").mkdir(parents=True, exist_ok=True)
    (outdir / "states").mkdir(parents=True, exist_ok=True)
    grid = scenario.grid()
    tasks = [(scenario, spec, seed) for spec in grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_execute_star, tasks))
    else:
        records = [_execute(*t) for t in tasks]

    _write_summary(outdir / "summary.csv", records)
    for rec in records:
        _write_residuals(outdir / "residuals" / f"{rec.spec.run_id}.csv", rec)
        _write_states(outdir / "states" / f"{rec.spec.run_id}.csv", rec)
    _write_provenance(outdir / "run.json", scenario, records)
    return records


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_summary(path: Path, records: list[RunRecord]) -> None:
    lines = [",".join(SUMMARY_COLUMNS)]
    for rec in records:
        lines.append(",".join(rec.summary_row()))
    _write_atomic(path, "\n".join(lines) + "\n")


def _write_residuals(path: Path, rec: RunRecord) -> None:
    lines = ["iteration,residual_norm,increment_norm"]
    lines.append(f"0,{rec.initial_residual!r},")
    for i, (r, d) in enumerate(zip(rec.residual_history or [], rec.increment_history or []), start=1):
        lines.append(f"{i},{r!r},{d!r}")
    _write_atomic(path, "\n".join(lines) + "\n")


def _write_states(path: Path, rec: RunRecord) -> None:
    lines = ["iteration,n_open,n_stick,n_slip"]
    o, s, sl = rec.initial_census
    lines.append(f"0,{o},{s},{sl}")
    for i, (o, s, sl) in enumerate(rec.state_census or [], start=1):
        lines.append(f"{i},{o},{s},{sl}")
    _write_atomic(path, "\n".join(lines) + "\n")


def _write_provenance(path: Path, scenario: Scenario, records: list[RunRecord]) -> None:
    mesh = scenario.build_mesh()
    payload = {
        "scenario": scenario.name,
        "scenario_hash": scenario.config_hash(),
        "package_version": __version__,
        "config": scenario.raw_config,
        "mesh": mesh.stats(),
        "records": [
            {
                "run_id": rec.spec.run_id,
                "solver": rec.spec.solver,
                "c": rec.spec.c,
                "dilation_angle_deg": rec.spec.dilation_angle_deg,
                "overpressure_pa": rec.spec.overpressure,
                "status": rec.status,
                "total_linear_solves": rec.total_linear_solves,
                "outer_iterations": rec.outer_iterations,
                "wall_time": rec.wall_time,
                "init_solves": rec.init_solves,
                "aperture_clamps_final": rec.aperture_clamps_final,
                "message": rec.message,
            }
            for rec in records
        ],
    }
    _write_atomic(path, json.dumps(payload, indent=1, sort_keys=True) + "\n")
