"""Scenario definitions: TOML configs, validation and problem construction.

A scenario bundles the mesh source, material overrides, boundary conditions,
the injection well and the sweep grid (solvers x c x dilation angle x
overpressure).  Two scenarios ship with the package: ``single_fracture_2d``
(one horizontal fracture, used by the agreement checks) and ``network_2d``
(a seven-fracture network with two crossings and the four-rung injection
ladder).
"""
from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .assembly import FlowBC, MechBC, Problem, Well, make_problem
from .constitutive import MaterialParams
from .mdgeom import FractureNetwork, MdMesh, _assemble_mesh, build_structured_mesh, load_mesh
from .solvers import SOLVER_KINDS, SolverConfig

__all__ = [
    "Scenario",
    "RunSpec",
    "ConfigError",
    "load_scenario",
    "builtin_scenario_names",
    "builtin_scenario_path",
]

SIDES = ("left", "right", "bottom", "top")
SECONDS_PER_DAY = 86400.0


class ConfigError(ValueError):
    """Raised for malformed or inconsistent scenario configurations."""


@dataclass(frozen=True)
class RunSpec:
    """One point of the sweep grid."""

    solver: str
    c: float
    dilation_angle_deg: float
    overpressure: float  # Pa above background

    @property
    def run_id(self) -> str:
        return (
            f"{self.solver}-c{self.c:g}-psi{self.dilation_angle_deg:g}"
            f"-dp{self.overpressure:g}"
        )


@dataclass
class Scenario:
    name: str
    domain: tuple[float, float, float, float] | None
    h: float | None
    fractures: list[tuple[tuple[float, float], tuple[float, float]]]
    mesh_file: str | None
    materials: dict
    flow_bc: dict[str, FlowBC]
    mech_bc: dict[str, MechBC]
    background_pressure: float
    injection_fracture: int
    overpressure: float
    dt: float
    num_steps: int
    sweep_solvers: list[str]
    sweep_c: list[float]
    sweep_dilation: list[float]
    sweep_overpressure: list[float]
    raw_config: dict = field(default_factory=dict)

    # -- construction --------------------------------------------------------

    def build_mesh(self, seed: int | None = None) -> MdMesh:
        if self.mesh_file is not None:
            return load_mesh(self.mesh_file)
        mesh = build_structured_mesh(self.domain, FractureNetwork(self.fractures), self.h)
        if seed is not None:
            mesh = _jitter(mesh, seed)
        return mesh

    def material_params(self, dilation_angle_deg: float | None = None) -> MaterialParams:
        kwargs = dict(self.materials)
        if dilation_angle_deg is not None:
            kwargs["dilation_angle_deg"] = dilation_angle_deg
        return MaterialParams(**kwargs)

    def injection_cell(self, mesh: MdMesh) -> tuple[int, int]:
        """Centermost cell of the injection fracture.

        The cell whose center minimizes the distance to the input segment's
        midpoint; ties break to the lowest (subdomain, cell) index.
        """
        pieces = mesh.fracture_by_input_id(self.injection_fracture)
        if not pieces:
            raise ConfigError(
                f"injection fracture {self.injection_fracture} does not exist"
            )
        a, b = self.fractures[self.injection_fracture]
        mid = 0.5 * (np.asarray(a) + np.asarray(b))
        best = None
        for f in pieces:
            for cell in range(f.num_cells):
                dist = float(np.linalg.norm(f.cell_centers[cell] - mid))
                key = (round(dist, 12), f.id, cell)
                if best is None or key < best:
                    best = key
        return best[1], best[2]

    def make_problem(self, spec: RunSpec, mesh: MdMesh) -> Problem:
        params = self.material_params(spec.dilation_angle_deg)
        sd_id, cell = self.injection_cell(mesh)
        well = Well(sd_id, cell, self.background_pressure + spec.overpressure)
        return make_problem(
            mesh, params, self.flow_bc, self.mech_bc,
            background_pressure=self.background_pressure, well=well,
        )

    def solver_config(self, spec: RunSpec) -> SolverConfig:
        return SolverConfig(
            kind=spec.solver, c=spec.c, dt=self.dt, num_steps=self.num_steps
        )

    def grid(self) -> list[RunSpec]:
        """The sweep grid, ordered solver-major then exactly as configured."""
        return [
            RunSpec(kind, c, psi, dp)
            for kind in self.sweep_solvers
            for c in self.sweep_c
            for psi in self.sweep_dilation
            for dp in self.sweep_overpressure
        ]

    def config_hash(self) -> str:
        blob = json.dumps(self.raw_config, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    # -- validation -----------------------------------------------------------

    def validate(self) -> list[str]:
        """Aggregate all configuration problems (empty list when valid)."""
        errors: list[str] = []
        if self.mesh_file is None:
            if self.domain is None or self.h is None:
                errors.append("mesh requires either 'file' or 'domain' plus 'h'")
        for side in SIDES if self.mesh_file is None else sorted(self.flow_bc):
            if side not in self.flow_bc:
                errors.append(f"missing flow boundary condition for side '{side}'")
            if side not in self.mech_bc:
                errors.append(f"missing mechanics boundary condition for side '{side}'")
        for side, bc in self.flow_bc.items():
            if bc.kind not in ("pressure", "flux"):
                errors.append(f"unknown flow bc type '{bc.kind}' on side '{side}'")
        for side, bc in self.mech_bc.items():
            if bc.kind not in ("dirichlet", "traction", "roller_x", "roller_y"):
                errors.append(f"unknown mechanics bc type '{bc.kind}' on side '{side}'")
        if not 0 <= self.injection_fracture < len(self.fractures) and self.mesh_file is None:
            errors.append(f"injection fracture {self.injection_fracture} does not exist")
        for c in self.sweep_c:
            if c <= 0:
                errors.append(f"augmentation parameter must be positive, got {c}")
        for kind in self.sweep_solvers:
            if kind not in SOLVER_KINDS:
                errors.append(f"unknown solver '{kind}'")
        for psi in self.sweep_dilation:
            if psi < 0:
                errors.append(f"dilation angle must be nonnegative, got {psi}")
        if self.dt <= 0:
            errors.append("time step must be positive")
        if self.num_steps < 0:
            errors.append("num_steps must be nonnegative")
        try:
            self.material_params()
        except (ValueError, TypeError) as err:
            errors.append(f"materials: {err}")
        return errors


def _jitter(mesh: MdMesh, seed: int, amplitude: float = 0.15) -> MdMesh:
    """Randomly perturb interior matrix nodes (for grid-sensitivity studies).

    Nodes on the boundary or on fracture facets stay put so conformity is
    preserved; the mesh is rebuilt from the perturbed raw triangulation.
    """
    raw = mesh.raw
    nodes = np.asarray(raw["nodes"], dtype=float)
    tris = np.asarray(raw["cells_2d"], dtype=np.int64)
    frozen = set()
    for f in raw["fracture_facets"]:
        frozen.update(f["nodes"])
    edge_count: dict[tuple[int, int], int] = {}
    for t in tris:
        for k in range(3):
            a, b = sorted((int(t[k]), int(t[(k + 1) % 3])))
            edge_count[(a, b)] = edge_count.get((a, b), 0) + 1
    for (a, b), cnt in edge_count.items():
        if cnt == 1:
            frozen.update((a, b))
    # Representative local spacing: shortest incident edge per node.
    spacing = np.full(len(nodes), np.inf)
    for a, b in edge_count:
        d = float(np.linalg.norm(nodes[a] - nodes[b]))
        spacing[a] = min(spacing[a], d)
        spacing[b] = min(spacing[b], d)
    rng = np.random.default_rng(seed)
    shift = rng.uniform(-amplitude, amplitude, size=nodes.shape) * spacing[:, None]
    movable = np.asarray([i not in frozen for i in range(len(nodes))])
    nodes = nodes + np.where(movable[:, None], shift, 0.0)
    facets = [(f["nodes"][0], f["nodes"][1], f["fracture_id"]) for f in raw["fracture_facets"]]
    # Recover boundary tags keyed by the node pair.
    facet_keys = {tuple(sorted(f[:2])) for f in facets}
    bedges = sorted(k for k, c in edge_count.items() if c == 1 and k not in facet_keys)
    btags = {bedges[int(i)]: tag for i, tag in raw["boundary_tags"].items()}
    from .mdgeom import _raw_payload

    new_raw = _raw_payload(nodes, tris, facets, btags)
    return _assemble_mesh(nodes, tris, facets, btags, new_raw)


# ---------------------------------------------------------------------------
# TOML parsing
# ---------------------------------------------------------------------------

def _parse_flow_bc(data: dict) -> dict[str, FlowBC]:
    return {
        side: FlowBC(str(spec.get("type")), float(spec.get("value", 0.0)))
        for side, spec in data.items()
    }


def _parse_mech_bc(data: dict) -> dict[str, MechBC]:
    out = {}
    for side, spec in data.items():
        kind = spec.get("type")
        if kind == "fixed":
            kind = "dirichlet"
        value = spec.get("value", (0.0, 0.0))
        out[side] = MechBC(str(kind), (float(value[0]), float(value[1])))
    return out


def load_scenario(source) -> Scenario:
    """Load a scenario from a TOML file path or a bundled scenario name."""
    path = Path(source)
    if not path.exists():
        builtin = builtin_scenario_path(str(source))
        if builtin is None:
            raise ConfigError(
                f"no such config file or bundled scenario: {source!r} "
                f"(bundled: {', '.join(builtin_scenario_names())})"
            )
        path = builtin
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"config does not parse: {err}") from err

    mesh = data.get("mesh", {})
    fractures = [
        ((float(r[0]), float(r[1])), (float(r[2]), float(r[3])))
        for r in mesh.get("fractures", [])
    ]
    bc = data.get("bc", {})
    inj = data.get("injection", {})
    tim = data.get("time", {})
    sweep = data.get("sweep", {})
    materials = dict(data.get("materials", {}))
    scenario = Scenario(
        name=str(data.get("name", path.stem)),
        domain=tuple(map(float, mesh["domain"])) if "domain" in mesh else None,
        h=float(mesh["h"]) if "h" in mesh else None,
        fractures=fractures,
        mesh_file=mesh.get("file"),
        materials=materials,
        flow_bc=_parse_flow_bc(bc.get("flow", {})),
        mech_bc=_parse_mech_bc(bc.get("mechanics", {})),
        background_pressure=float(data.get("background_pressure", 0.0)),
        injection_fracture=int(inj.get("fracture", 0)),
        overpressure=float(inj.get("overpressure", 0.0)),
        dt=float(tim.get("dt_days", 0.1)) * SECONDS_PER_DAY,
        num_steps=int(tim.get("num_steps", 1)),
        sweep_solvers=[str(s) for s in sweep.get("solvers", ["gnm"])],
        sweep_c=[float(c) for c in sweep.get("c", [1.0e-2])],
        sweep_dilation=[
            float(v)
            for v in sweep.get(
                "dilation_angles", [materials.get("dilation_angle_deg", 5.0)]
            )
        ],
        sweep_overpressure=[
            float(v) for v in sweep.get("overpressures", [inj.get("overpressure", 0.0)])
        ],
        raw_config=data,
    )
    return scenario


def builtin_scenario_names() -> list[str]:
    pkg = resources.files("porofrac") / "data"
    return sorted(p.stem for p in pkg.iterdir() if p.name.endswith(".toml"))


def builtin_scenario_path(name: str) -> Path | None:
    candidate = resources.files("porofrac") / "data" / f"{name}.toml"
    return Path(str(candidate)) if candidate.is_file() else None
