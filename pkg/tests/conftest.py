"""Shared fixtures: small meshes and problem builders."""
import numpy as np
import pytest

from porofrac.assembly import FlowBC, MechBC, Problem, State, Assembler
from porofrac.constitutive import MaterialParams
from porofrac.mdgeom import FractureNetwork, build_structured_mesh

SIDES = ("left", "right", "bottom", "top")


def noflow_bc():
    return {s: FlowBC("flux", 0.0) for s in SIDES}


def pressure_bc(value):
    return {s: FlowBC("pressure", value) for s in SIDES}


def clamped_mech():
    return {s: MechBC("dirichlet") for s in SIDES}


def plain_params(**overrides):
    """Unit-scale parameters with near-incompressible fluid for hand checks."""
    defaults = dict(
        mass_scale=1.0,
        fluid_compressibility=1e-300,
        reference_pressure=1.0,
        matrix_permeability=1.0,
        viscosity=1.0,
        reference_fluid_density=1.0,
        shear_modulus=1.0,
        lame_lambda=1.0,
    )
    defaults.update(overrides)
    return MaterialParams(**defaults)


def fresh_state(problem, dt=1.0):
    asm = Assembler(problem)
    st = State.zeros(asm.dof, dt=dt)
    return st, asm


@pytest.fixture
def crossing_mesh():
    net = FractureNetwork(
        [((0.25, 0.5), (0.75, 0.5)), ((0.5, 0.25), (0.5, 0.75))]
    )
    return build_structured_mesh((0.0, 0.0, 1.0, 1.0), net, h=0.25)


@pytest.fixture
def single_fracture_mesh():
    net = FractureNetwork([((0.25, 0.5), (0.75, 0.5))])
    return build_structured_mesh((0.0, 0.0, 1.0, 1.0), net, h=0.125)
