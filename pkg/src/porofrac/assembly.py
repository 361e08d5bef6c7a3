"""Residual system and generalized Jacobian for one implicit-Euler step.

The unknown vector is blocked as ``[p | u | w | u_j | v_j | lam]``: cell
pressures on every subdomain, matrix displacements (nodal values with
duplicated fracture-wall nodes, plus one quadratic edge-bubble amplitude per
fracture-wall face), interface displacements and volumetric fluxes per
mortar cell, and contact tractions per fracture cell in the local
(normal, tangential) basis.

The wall bubbles are required for well-posedness: with piecewise-constant
mortar variables and plain nodal loads, an alternating contact traction
performs no virtual work on the walls (adjacent faces cancel at shared
nodes, the two sides cancel at the shared tip nodes), which makes the
system exactly singular whenever a fracture sticks.  The bubble test
function sees each wall face individually; its momentum row is the
face-integrated interface force balance.

Discretization: cell-centered two-point flux approximation for flow in all
dimensions, first-order conforming finite elements for the matrix momentum
balance, piecewise-constant mortar variables.  The interface force balance
supplies the fracture-wall traction of the momentum rows (the fluid-corrected
contact traction, with opposite signs on the two sides), and displacement
continuity closes the interface block: each mortar value equals the
face-averaged wall displacement trace.  The contact rows are supplied by a
pluggable kernel (exact or regularized complementarity functions) so the
nonlinear solvers can share one assembler.

Everything here operates in the mass-rescaled unit system; conversion from
SI happens once in :func:`make_problem`.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
import scipy.sparse as sps

from . import constitutive as cst
from . import contact as ct
from .constitutive import MaterialParams
from .mdgeom import MdMesh

__all__ = [
    "FlowBC",
    "MechBC",
    "Well",
    "Problem",
    "make_problem",
    "DofMap",
    "State",
    "LinearSystem",
    "ExactKernel",
    "RegularizedKernel",
    "Assembler",
    "assemble_flow",
    "assemble_mechanics",
    "assemble_interface_flux",
    "assemble_force_balance",
    "assemble_full",
]


@dataclass(frozen=True)
class FlowBC:
    """Per-side flow condition: fixed pressure or outward mass flux.

    Values are scalars or callables of the boundary collocation point.
    """

    kind: str  # 'pressure' | 'flux'
    value: float | Callable = 0.0

    def at(self, x: np.ndarray) -> np.ndarray:
        if callable(self.value):
            return np.asarray([self.value(*pt) for pt in np.atleast_2d(x)])
        return np.full(np.atleast_2d(x).shape[0], float(self.value))


@dataclass(frozen=True)
class MechBC:
    """Per-side mechanical condition.

    'dirichlet' fixes both displacement components, 'traction' applies the
    given traction vector, and the rollers fix one displacement component
    while leaving the other traction-free.
    """

    kind: str  # 'dirichlet' | 'traction' | 'roller_x' | 'roller_y'
    value: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class Well:
    """Pressure-controlled injection cell on a fracture subdomain."""

    subdomain_id: int
    cell: int
    pressure: float  # scaled


@dataclass
class Problem:
    """Mesh, scaled material parameters and boundary data for one setup."""

    mesh: MdMesh
    params: MaterialParams
    flow_bc: dict[str, FlowBC]
    mech_bc: dict[str, MechBC]
    background_pressure: float | Callable = 0.0
    well: Well | None = None

    def __post_init__(self):
        tags = {t for t in self.mesh.matrix.boundary_tag.values()}
        for t in sorted(tags):
            if t not in self.flow_bc:
                raise ValueError(f"missing flow boundary condition for side '{t}'")
            if t not in self.mech_bc:
                raise ValueError(f"missing mechanics boundary condition for side '{t}'")

    def background_at(self, x: np.ndarray) -> np.ndarray:
        if callable(self.background_pressure):
            return np.asarray([self.background_pressure(*pt) for pt in np.atleast_2d(x)])
        return np.full(np.atleast_2d(x).shape[0], float(self.background_pressure))


def make_problem(
    mesh: MdMesh,
    params: MaterialParams,
    flow_bc: dict[str, FlowBC],
    mech_bc: dict[str, MechBC],
    background_pressure: float = 0.0,
    well: Well | None = None,
) -> Problem:
    """Convert SI boundary data to the internal mass-rescaled system."""
    ps = params.pressure_scale()
    flow = {}
    for side, bc in flow_bc.items():
        if callable(bc.value):
            val = bc.value
            flow[side] = FlowBC(bc.kind, lambda x, y, f=val: f(x, y) * ps)
        else:
            flow[side] = FlowBC(bc.kind, float(bc.value) * ps)
    mech = {}
    for side, bc in mech_bc.items():
        if bc.kind == "traction":
            mech[side] = MechBC(bc.kind, (bc.value[0] * ps, bc.value[1] * ps))
        else:
            mech[side] = MechBC(bc.kind, tuple(bc.value))
    if callable(background_pressure):
        bg = lambda x, y, f=background_pressure: f(x, y) * ps  # noqa: E731
    else:
        bg = float(background_pressure) * ps
    w = None if well is None else replace(well, pressure=well.pressure * ps)
    return Problem(mesh, params.scaled(), flow, mech, bg, w)


# ---------------------------------------------------------------------------
# Degrees of freedom and state
# ---------------------------------------------------------------------------

class DofMap:
    """Block layout [p | u | w | u_j | v_j | lam] with per-entity offsets."""

    def __init__(self, mesh: MdMesh):
        self.mesh = mesh
        self.p_off: dict[int, int] = {}
        n_p = 0
        for sd in mesh.subdomains:
            self.p_off[sd.id] = n_p
            n_p += sd.num_cells
        self.n_p = n_p
        self.n_nodes = mesh.nodes.shape[0]
        self.n_u = 2 * self.n_nodes
        self.uj_off: list[int] = []
        n_uj = 0
        for itf in mesh.interfaces:
            self.uj_off.append(n_uj)
            n_uj += 2 * itf.num_cells
        self.n_uj = n_uj
        self.n_w = n_uj  # one vector bubble per wall face = per mortar cell
        self.vj_off: list[int] = []
        n_vj = 0
        for itf in [*mesh.interfaces, *mesh.point_interfaces]:
            self.vj_off.append(n_vj)
            n_vj += itf.num_cells
        self.n_vj = n_vj
        self.lam_off: dict[int, int] = {}
        n_lam = 0
        for f in mesh.fractures:
            self.lam_off[f.id] = n_lam
            n_lam += 2 * f.num_cells
        self.n_lam = n_lam

        self.p0 = 0
        self.u0 = self.n_p
        self.w0 = self.u0 + self.n_u
        self.uj0 = self.w0 + self.n_w
        self.vj0 = self.uj0 + self.n_uj
        self.lam0 = self.vj0 + self.n_vj
        self.total = self.lam0 + self.n_lam

    # -- index helpers (vectorized over the given arrays) --
    def p(self, sd_id: int, cells) -> np.ndarray:
        return self.p0 + self.p_off[sd_id] + np.asarray(cells, dtype=np.int64)

    def u(self, nodes, comp) -> np.ndarray:
        return self.u0 + 2 * np.asarray(nodes, dtype=np.int64) + comp

    def w(self, intf_idx: int, cells, comp) -> np.ndarray:
        return self.w0 + self.uj_off[intf_idx] + 2 * np.asarray(cells, dtype=np.int64) + comp

    def uj(self, intf_idx: int, cells, comp) -> np.ndarray:
        return self.uj0 + self.uj_off[intf_idx] + 2 * np.asarray(cells, dtype=np.int64) + comp

    def vj(self, intf_idx: int, cells) -> np.ndarray:
        return self.vj0 + self.vj_off[intf_idx] + np.asarray(cells, dtype=np.int64)

    def lam(self, sd_id: int, cells, comp) -> np.ndarray:
        return self.lam0 + self.lam_off[sd_id] + 2 * np.asarray(cells, dtype=np.int64) + comp

    def norm_weights(self, a_ref: float) -> np.ndarray:
        """Cell-volume weights for the scaled norms.

        Lower-dimensional measures carry the reference specific volume so the
        weights stay state-independent; matrix nodal dofs use lumped volumes.
        """
        mesh = self.mesh
        w = np.empty(self.total)
        w[self.p0 : self.p0 + mesh.matrix.num_cells] = mesh.matrix.cell_measures
        for f in mesh.fractures:
            w[self.p(f.id, np.arange(f.num_cells))] = f.cell_measures * a_ref
        for pt in mesh.points:
            w[self.p(pt.id, [0])] = a_ref**2
        w[self.u0 : self.u0 + self.n_u] = np.repeat(mesh.node_volumes, 2)
        for i, itf in enumerate(mesh.interfaces):
            cells = np.arange(itf.num_cells)
            wall_areas = mesh.matrix.cell_measures[itf.wall_tris] / 3.0
            for comp in (0, 1):
                w[self.uj(i, cells, comp)] = itf.mortar_measures * a_ref
                w[self.w(i, cells, comp)] = wall_areas
            w[self.vj(i, cells)] = itf.mortar_measures * a_ref
        for i, itf in enumerate(mesh.point_interfaces):
            w[self.vj(len(mesh.interfaces) + i, [0])] = a_ref**2
        for f in mesh.fractures:
            cells = np.arange(f.num_cells)
            for comp in (0, 1):
                w[self.lam(f.id, cells, comp)] = f.cell_measures * a_ref
        return w


@dataclass
class State:
    """Full unknown vector plus the previous-time-step snapshot."""

    x: np.ndarray
    prev: np.ndarray
    dt: float
    dof: DofMap

    @classmethod
    def zeros(cls, dof: DofMap, dt: float = 1.0) -> "State":
        return cls(np.zeros(dof.total), np.zeros(dof.total), dt, dof)

    def copy(self) -> "State":
        return State(self.x.copy(), self.prev.copy(), self.dt, self.dof)

    def advance(self) -> None:
        """Accept the current solution as the new previous-step snapshot."""
        self.prev = self.x.copy()

    # -- named views on a raw vector --
    def pressures(self, sd_id: int, vec: np.ndarray | None = None) -> np.ndarray:
        vec = self.x if vec is None else vec
        sd = next(s for s in self.dof.mesh.subdomains if s.id == sd_id)
        return vec[self.dof.p(sd_id, np.arange(sd.num_cells))]

    def displacements(self, vec: np.ndarray | None = None) -> np.ndarray:
        vec = self.x if vec is None else vec
        return vec[self.dof.u0 : self.dof.u0 + self.dof.n_u].reshape(-1, 2)

    def mortar_displacements(self, intf_idx: int, vec: np.ndarray | None = None) -> np.ndarray:
        vec = self.x if vec is None else vec
        itf = self.dof.mesh.interfaces[intf_idx]
        cells = np.arange(itf.num_cells)
        return np.stack(
            [vec[self.dof.uj(intf_idx, cells, c)] for c in (0, 1)], axis=1
        )

    def tractions(self, sd_id: int, vec: np.ndarray | None = None) -> np.ndarray:
        vec = self.x if vec is None else vec
        f = next(s for s in self.dof.mesh.fractures if s.id == sd_id)
        cells = np.arange(f.num_cells)
        return np.stack([vec[self.dof.lam(sd_id, cells, c)] for c in (0, 1)], axis=1)


@dataclass
class LinearSystem:
    matrix: sps.csr_matrix
    rhs: np.ndarray
    dof: DofMap


class _Coo:
    """Triplet accumulator for the sparse Jacobian."""

    def __init__(self):
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []

    def add(self, rows, cols, vals) -> None:
        r, c, v = np.broadcast_arrays(rows, cols, vals)
        self.rows.append(np.asarray(r, dtype=np.int64).ravel())
        self.cols.append(np.asarray(c, dtype=np.int64).ravel())
        self.vals.append(np.asarray(v, dtype=float).ravel())

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if not self.rows:
            z = np.zeros(0)
            return z.astype(np.int64), z.astype(np.int64), z
        return (
            np.concatenate(self.rows),
            np.concatenate(self.cols),
            np.concatenate(self.vals),
        )


# ---------------------------------------------------------------------------
# Contact kernels as pluggable row suppliers
# ---------------------------------------------------------------------------

class ExactKernel:
    """Contact rows from the exact complementarity functions."""

    def __init__(self, c: float, friction: float):
        if c <= 0:
            raise ValueError("augmentation parameter must be positive")
        self.c = c
        self.friction = friction

    def residual(self, inp: ct.ContactInputs):
        return ct.complementarity_normal(inp), ct.complementarity_tangential(inp)

    def jacobians(self, inp: ct.ContactInputs):
        return ct.normal_jacobian(inp), ct.tangential_jacobian(inp)

    def classify(self, inp: ct.ContactInputs):
        return ct.classify(inp)


class RegularizedKernel(ExactKernel):
    """Contact rows with the max arguments anchored at a feasible traction."""

    def __init__(self, c: float, friction: float, anchor_n: np.ndarray, anchor_tau: np.ndarray):
        super().__init__(c, friction)
        self.anchor_n = np.asarray(anchor_n, dtype=float)
        self.anchor_tau = np.asarray(anchor_tau, dtype=float)

    def residual(self, inp: ct.ContactInputs):
        return ct.regularized_complementarity(inp, self.anchor_n, self.anchor_tau)

    def jacobians(self, inp: ct.ContactInputs):
        return (
            ct.regularized_normal_jacobian(inp, self.anchor_n),
            ct.regularized_tangential_jacobian(inp, self.anchor_tau),
        )

    def classify(self, inp: ct.ContactInputs):
        return ct.classify_regularized(inp, self.anchor_n, self.anchor_tau)


# ---------------------------------------------------------------------------
# Assembler
# ---------------------------------------------------------------------------

class Assembler:
    """Precomputes mesh-dependent operators; assembles residual and Jacobian."""

    def __init__(self, problem: Problem):
        self.problem = problem
        self.mesh = problem.mesh
        self.params = problem.params
        self.dof = DofMap(self.mesh)
        self._precompute_mechanics()
        self._precompute_flow()
        self._precompute_coupling()
        self._precompute_constraints()

    # -- precomputation -----------------------------------------------------

    def _precompute_mechanics(self) -> None:
        m = self.mesh.matrix
        prm = self.params
        T = m.num_cells
        g = m.grads  # (T, 3, 2)
        A = m.cell_measures
        gdotg = np.einsum("tad,tbd->tab", g, g)
        eye = np.eye(2)
        ke = prm.shear_modulus * (
            np.einsum("tab,ij->taibj", gdotg, eye)
            + np.einsum("taj,tbi->taibj", g, g)
        ) + prm.lame_lambda * np.einsum("tai,tbj->taibj", g, g)
        self.ke = (ke * A[:, None, None, None, None]).reshape(T, 6, 6)
        # Pressure coupling: residual term -alpha p_e * (A grad), flattened.
        self.pe = (g * A[:, None, None]).reshape(T, 6)
        # Element displacement dof gather, (T, 6).
        nd = m.tri_nodes
        self.elem_udofs = np.stack(
            [self.dof.u(nd[:, a], d) for a in range(3) for d in range(2)], axis=1
        )
        self.elem_pdofs = self.dof.p(0, np.arange(T))
        # Static boundary machinery: Dirichlet masks and traction loads.
        dirich: dict[int, float] = {}
        load = np.zeros(self.dof.total)
        prio = {"dirichlet": 2, "roller_x": 1, "roller_y": 1}
        claimed: dict[int, int] = {}
        for fidx in m.boundary_faces:
            bc = self.problem.mech_bc[m.boundary_tag[int(fidx)]]
            na, nb = m.face_nodes[fidx]
            if bc.kind == "traction":
                half = 0.5 * m.face_len[fidx]
                for n in (na, nb):
                    for d in (0, 1):
                        load[self.dof.u([n], d)[0]] += bc.value[d] * half
            else:
                comps = (0, 1) if bc.kind == "dirichlet" else ((0,) if bc.kind == "roller_x" else (1,))
                for n in (na, nb):
                    for d in comps:
                        dofi = int(self.dof.u([n], d)[0])
                        if prio[bc.kind] >= claimed.get(dofi, 0):
                            claimed[dofi] = prio[bc.kind]
                            dirich[dofi] = bc.value[d] if bc.kind == "dirichlet" else 0.0
        self.mech_load = load
        self.dirichlet_dofs = np.asarray(sorted(dirich), dtype=np.int64)
        self.dirichlet_vals = np.asarray([dirich[d] for d in sorted(dirich)])

    def _precompute_flow(self) -> None:
        m = self.mesh.matrix
        prm = self.params
        # Interior matrix faces: constant transmissibilities.
        fi = m.interior_faces
        self.fi_own = m.face_owner[fi]
        self.fi_nei = m.face_neigh[fi]
        self.fi_trans = m.face_len[fi] * prm.matrix_permeability / (
            m.d_own[fi] + m.d_neigh[fi]
        )
        self.fi_gdx = (
            m.cell_centers[self.fi_own] - m.cell_centers[self.fi_nei]
        ) @ prm.g_vec
        # Boundary faces grouped by condition kind.
        dir_faces, neu_faces = [], []
        for fidx in m.boundary_faces:
            bc = self.problem.flow_bc[m.boundary_tag[int(fidx)]]
            (dir_faces if bc.kind == "pressure" else neu_faces).append(int(fidx))
        dir_faces = np.asarray(dir_faces, dtype=np.int64)
        self.fb_cell = m.face_owner[dir_faces] if dir_faces.size else dir_faces
        self.fb_trans = (
            m.face_len[dir_faces] * prm.matrix_permeability / m.d_own[dir_faces]
            if dir_faces.size
            else np.zeros(0)
        )
        self.fb_value = np.asarray(
            [
                self.problem.flow_bc[m.boundary_tag[int(f)]].at(
                    m.dirichlet_colloc[f][None, :]
                )[0]
                for f in dir_faces
            ]
        )
        self.fb_gdx = (
            (m.cell_centers[self.fb_cell] - m.dirichlet_colloc[dir_faces]) @ prm.g_vec
            if dir_faces.size
            else np.zeros(0)
        )
        # Prescribed outward mass flux integrated over the face.
        self.neumann_flux = np.zeros(self.dof.total)
        for fidx in neu_faces:
            bc = self.problem.flow_bc[m.boundary_tag[fidx]]
            q = bc.at(m.face_center[fidx][None, :])[0]
            self.neumann_flux[self.dof.p(0, [m.face_owner[fidx]])[0]] += q * m.face_len[fidx]

    def _precompute_coupling(self) -> None:
        mesh, dof, prm = self.mesh, self.dof, self.params
        # Global fracture-cell enumeration (mesh order) used by the contact
        # kernels, apertures and force balance.
        counts = [f.num_cells for f in mesh.fractures]
        off = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        self.frac_off = {f.id: off[i] for i, f in enumerate(mesh.fractures)}
        self.n_frac_cells = int(off[-1])
        M = self.n_frac_cells
        self.fr_normal = np.zeros((M, 2))
        self.fr_tangent = np.zeros((M, 2))
        self.fr_measure = np.zeros(M)
        self.fr_lam0 = np.zeros(M, dtype=np.int64)
        self.fr_lam1 = np.zeros(M, dtype=np.int64)
        self.fr_ujj = np.zeros((M, 2), dtype=np.int64)  # side j mortar dofs
        self.fr_ujk = np.zeros((M, 2), dtype=np.int64)
        self.fr_pdof = np.zeros(M, dtype=np.int64)
        intf_of = {}
        for i, itf in enumerate(mesh.interfaces):
            intf_of[(itf.lower_id, itf.side)] = i
        self.intf_of = intf_of
        for f in mesh.fractures:
            cells = np.arange(f.num_cells)
            gcells = self.frac_off[f.id] + cells
            self.fr_normal[gcells] = f.normals
            self.fr_tangent[gcells] = np.stack(
                [-f.normals[:, 1], f.normals[:, 0]], axis=1
            )
            self.fr_measure[gcells] = f.cell_measures
            self.fr_lam0[gcells] = dof.lam(f.id, cells, 0)
            self.fr_lam1[gcells] = dof.lam(f.id, cells, 1)
            ij, ik = intf_of[(f.id, "j")], intf_of[(f.id, "k")]
            for d in (0, 1):
                self.fr_ujj[gcells, d] = dof.uj(ij, cells, d)
                self.fr_ujk[gcells, d] = dof.uj(ik, cells, d)
            self.fr_pdof[gcells] = dof.p(f.id, cells)

        # Per-interface wall records: traction loads on the momentum rows,
        # displacement-trace closure of the mortar block, and the traction
        # operators for the diagnostic force-balance residual.
        m = mesh.matrix
        recs = []
        for i, itf in enumerate(mesh.interfaces):
            f = mesh.fractures[itf.lower_id - 1]
            cells = np.arange(f.num_cells)
            gcells = self.frac_off[f.id] + cells
            tris = itf.wall_tris
            n_l = f.normals
            g = m.grads[tris]  # (M, 3, 2)
            G, lam = prm.shear_modulus, prm.lame_lambda
            gdn = np.einsum("mbd,md->mb", g, n_l)
            btrac = np.zeros((f.num_cells, 2, 3, 2))
            for d in (0, 1):
                for j in (0, 1):
                    btrac[:, d, :, j] = (
                        G * ((d == j) * gdn + g[:, :, d] * n_l[:, j][:, None])
                        + lam * n_l[:, d][:, None] * g[:, :, j]
                    )
            wall_nodes = f.wall_nodes_j if itf.side == "j" else f.wall_nodes_k
            wall_udofs = np.stack(
                [dof.u(wall_nodes[:, a], d) for a in range(2) for d in range(2)],
                axis=1,
            )  # (M, 4): a0x a0y a1x a1y
            sign = 1.0 if itf.side == "j" else -1.0
            # Edge-bubble data: q = int grad(psi) = (2/3) |f| n_outward.
            q = (2.0 / 3.0) * itf.mortar_measures[:, None] * (sign * n_l)
            k_w_u = np.zeros((f.num_cells, 2, 6))
            for cidx in range(f.num_cells):
                gb = m.grads[tris[cidx]]  # (3, 2)
                for ii in range(2):
                    for b in range(3):
                        for jj in range(2):
                            k_w_u[cidx, ii, 2 * b + jj] = (
                                G * ((ii == jj) * (q[cidx] @ gb[b]) + q[cidx, jj] * gb[b, ii])
                                + lam * q[cidx, ii] * gb[b, jj]
                            )
            recs.append(
                {
                    "intf": i,
                    "sign": sign,
                    "gcells": gcells,
                    "rows": np.stack([dof.uj(i, cells, d) for d in (0, 1)], axis=1),
                    "wdofs": np.stack([dof.w(i, cells, d) for d in (0, 1)], axis=1),
                    "btrac": btrac.reshape(f.num_cells, 2, 6),
                    "udofs": self.elem_udofs[tris],
                    "wall_udofs": wall_udofs,
                    "wall_nodes": wall_nodes,
                    "tris": tris,
                    "q": q,
                    "k_w_u": k_w_u,
                    "pe_dof": dof.p(0, tris),
                    "pl_dof": dof.p(f.id, cells),
                    "n_l": n_l,
                    "t_l": np.stack([-n_l[:, 1], n_l[:, 0]], axis=1),
                    "measure": itf.mortar_measures,
                }
            )
        self.fb_recs = recs

        # Bubble-bubble stiffness, including cross terms when one element
        # carries two wall edges (corner elements at fracture crossings).
        per_tri: dict[int, list[tuple[int, int]]] = {}
        for ri, rec in enumerate(recs):
            for cidx, tri in enumerate(rec["tris"]):
                per_tri.setdefault(int(tri), []).append((ri, cidx))
        bb = []
        for tri, bubbles in sorted(per_tri.items()):
            gb = m.grads[tri]
            area = m.cell_measures[tri]
            tri_nodes = [int(n) for n in m.tri_nodes[tri]]
            G, lam = prm.shear_modulus, prm.lame_lambda
            for r1, c1 in bubbles:
                for r2, c2 in bubbles:
                    e1 = [tri_nodes.index(int(n)) for n in recs[r1]["wall_nodes"][c1]]
                    e2 = [tri_nodes.index(int(n)) for n in recs[r2]["wall_nodes"][c2]]
                    pmat = np.zeros((2, 2))
                    for p_loc in e1:
                        p_bar = e1[0] if p_loc == e1[1] else e1[1]
                        for q_loc in e2:
                            q_bar = e2[0] if q_loc == e2[1] else e2[1]
                            mass = area * (1.0 + (p_loc == q_loc)) / 12.0
                            pmat += 16.0 * mass * np.outer(gb[p_bar], gb[q_bar])
                    k12 = G * np.trace(pmat) * np.eye(2) + G * pmat.T + lam * pmat
                    bb.append(
                        (recs[r1]["wdofs"][c1], recs[r2]["wdofs"][c2], k12)
                    )
        self.bubble_pairs = bb
        # Bubble contribution to the element-wise volumetric strain.
        if recs:
            self.bub_tri = np.concatenate([rec["tris"] for rec in recs])
            self.bub_wdofs = np.concatenate([rec["wdofs"] for rec in recs], axis=0)
            self.bub_q = np.concatenate([rec["q"] for rec in recs], axis=0)
        else:
            self.bub_tri = np.zeros(0, dtype=np.int64)
            self.bub_wdofs = np.zeros((0, 2), dtype=np.int64)
            self.bub_q = np.zeros((0, 2))

        # Matrix-fracture mass/Darcy coupling records.
        recs = []
        for i, itf in enumerate(mesh.interfaces):
            f = mesh.fractures[itf.lower_id - 1]
            cells = np.arange(f.num_cells)
            recs.append(
                {
                    "vj": dof.vj(i, cells),
                    "p_h": dof.p(0, itf.wall_tris),
                    "p_l": dof.p(f.id, cells),
                    "gcells": self.frac_off[f.id] + cells,
                    "measure": itf.mortar_measures,
                    "g_n": m.face_normal[itf.wall_faces] @ prm.g_vec,
                }
            )
        self.mf_recs = recs

        # Fracture-intersection coupling records.
        recs = []
        for i, itf in enumerate(mesh.point_interfaces):
            f = mesh.fractures[itf.higher_id - 1]
            pt = mesh.points[itf.lower_id - 1 - len(mesh.fractures)]
            recs.append(
                {
                    "vj": dof.vj(len(mesh.interfaces) + i, [0]),
                    "p_h": dof.p(f.id, [itf.h_cell]),
                    "p_l": dof.p(pt.id, [0]),
                    "g_n": float(itf.outward_tangent @ prm.g_vec),
                    "point": itf.lower_id,
                    "h_gcell": self.frac_off[f.id] + itf.h_cell,
                }
            )
        self.pt_recs = recs
        # 0D neighborhood: global fracture cells feeding each point aperture.
        self.point_neighbors = {}
        for pt in mesh.points:
            cells = []
            for f_id, end in pt.neighbors:
                f = mesh.fractures[f_id - 1]
                cells.append(self.frac_off[f_id] + (0 if end == 0 else f.num_cells - 1))
            self.point_neighbors[pt.id] = np.asarray(cells, dtype=np.int64)

        # Fracture interior two-point connections.
        recs = []
        for f in mesh.fractures:
            if f.num_cells < 2:
                continue
            c1, c2 = f.inner_pairs[:, 0], f.inner_pairs[:, 1]
            recs.append(
                {
                    "p1": dof.p(f.id, c1),
                    "p2": dof.p(f.id, c2),
                    "g1": self.frac_off[f.id] + c1,
                    "g2": self.frac_off[f.id] + c2,
                    "d1": f.inner_half[:, 0],
                    "d2": f.inner_half[:, 1],
                    "gdx": (f.cell_centers[c1] - f.cell_centers[c2]) @ prm.g_vec,
                }
            )
        self.fr_inner = recs


    def _precompute_constraints(self) -> None:
        dof = self.dof
        mesh = self.mesh
        self.all_p_dofs = np.arange(dof.p0, dof.p0 + dof.n_p, dtype=np.int64)
        self.all_vj_dofs = np.arange(dof.vj0, dof.vj0 + dof.n_vj, dtype=np.int64)
        centers = [mesh.matrix.cell_centers]
        for f in mesh.fractures:
            centers.append(f.cell_centers)
        for pt in mesh.points:
            centers.append(pt.x[None, :])
        self.cell_centers_all = np.vstack(centers)
        self.background_p = self.problem.background_at(self.cell_centers_all)
        if self.problem.well is not None:
            w = self.problem.well
            self.well_dof = int(dof.p(w.subdomain_id, [w.cell])[0])
        else:
            self.well_dof = -1
        self.norm_weights = dof.norm_weights(self.params.residual_aperture)

    # -- state-dependent pieces ----------------------------------------------

    def _div_u(self, vec: np.ndarray) -> np.ndarray:
        """Element-wise volumetric strain, including wall-bubble content."""
        div = np.einsum("te,te->t", self.pe, vec[self.elem_udofs])
        if self.bub_tri.size:
            contrib = (
                self.bub_q[:, 0] * vec[self.bub_wdofs[:, 0]]
                + self.bub_q[:, 1] * vec[self.bub_wdofs[:, 1]]
            )
            np.add.at(div, self.bub_tri, contrib)
        return div / self.mesh.matrix.cell_measures

    def fracture_geometry(self, state: State, vec: np.ndarray | None = None):
        """Jumps, apertures (with clamp accounting) and gaps per fracture cell."""
        x = state.x if vec is None else vec
        jump = x[self.fr_ujk] - x[self.fr_ujj]  # (M, 2)
        jump_n = np.sum(jump * self.fr_normal, axis=1)
        jump_t = np.sum(jump * self.fr_tangent, axis=1)
        # Hydraulic aperture: a_ref + max(0, jump_n).  At any state satisfying
        # nonpenetration the normal jump is at least the (nonnegative) gap,
        # so this agrees exactly with a_ref + jump_n at converged states; the
        # one-sided form keeps the flow rows regular when Newton transients
        # overshoot into interpenetration, where a collapsing aperture would
        # otherwise degenerate the fracture mass balances.  Violations are
        # counted and must be absent from accepted solutions.
        apert = self.params.residual_aperture + np.maximum(0.0, jump_n)
        dadj = (jump_n >= 0.0).astype(float)
        gaps = self.params.tan_dilation * np.abs(jump_t)
        dgap = self.params.tan_dilation * np.sign(jump_t)  # 0 subgradient at 0
        return {
            "jump_n": jump_n,
            "jump_t": jump_t,
            "aperture": apert,
            "dadj": dadj,  # d aperture / d jump_n
            "gap": gaps,
            "dgap": dgap,
            # Active penetration guards, counted against the convergence
            # tolerance so roundoff-level negative jumps do not register.
            "clamped": int(np.sum(jump_n < -1e-8)),
        }

    def point_apertures(self, fr_aperture: np.ndarray) -> dict[int, float]:
        return {
            pid: float(np.mean(fr_aperture[cells]))
            for pid, cells in self.point_neighbors.items()
        }

    def contact_inputs(self, state: State, kernel: ExactKernel) -> ct.ContactInputs:
        geo = self.fracture_geometry(state)
        prev_jump = state.prev[self.fr_ujk] - state.prev[self.fr_ujj]
        prev_t = np.sum(prev_jump * self.fr_tangent, axis=1)
        return ct.ContactInputs(
            lam_n=state.x[self.fr_lam0],
            lam_tau=state.x[self.fr_lam1][:, None],
            jump_n=geo["jump_n"],
            jump_tau=geo["jump_t"][:, None],
            jump_tau_prev=prev_t[:, None],
            gap=geo["gap"],
            c=kernel.c,
            friction=kernel.friction,
            dgap_djump_tau=geo["dgap"][:, None],
        )

    # -- assembly -------------------------------------------------------------

    def system(
        self,
        state: State,
        kernel: ExactKernel,
        frozen_flow: bool = False,
        with_jacobian: bool = True,
    ):
        """Assemble the residual and one element of the generalized Jacobian.

        Returns ``(residual, A)`` with ``A`` None when ``with_jacobian`` is
        False.  ``frozen_flow`` replaces all pressure and interface-flux rows
        by identity rows pinned at the background state (used by the purely
        mechanical initialization stage).
        """
        dof = self.dof
        x = state.x
        res = np.zeros(dof.total)
        coo = _Coo() if with_jacobian else None

        geo = self.fracture_geometry(state)
        self._flow(state, geo, res, coo)
        self._mechanics(state, res, coo)
        self._interface_darcy(state, geo, res, coo)
        self._interface_mechanics(state, res, coo)
        self._contact(state, geo, kernel, res, coo)

        # Constraint rows replace previously assembled content.
        replaced = np.zeros(dof.total, dtype=bool)
        rep = _Coo() if with_jacobian else None
        replaced[self.dirichlet_dofs] = True
        res[self.dirichlet_dofs] = x[self.dirichlet_dofs] - self.dirichlet_vals
        if with_jacobian:
            rep.add(self.dirichlet_dofs, self.dirichlet_dofs, 1.0)
        if frozen_flow:
            replaced[self.all_p_dofs] = True
            res[self.all_p_dofs] = x[self.all_p_dofs] - self.background_p
            replaced[self.all_vj_dofs] = True
            res[self.all_vj_dofs] = x[self.all_vj_dofs]
            if with_jacobian:
                rep.add(self.all_p_dofs, self.all_p_dofs, 1.0)
                rep.add(self.all_vj_dofs, self.all_vj_dofs, 1.0)
        elif self.well_dof >= 0:
            replaced[self.well_dof] = True
            res[self.well_dof] = x[self.well_dof] - self.problem.well.pressure
            if with_jacobian:
                rep.add(np.asarray([self.well_dof]), np.asarray([self.well_dof]), 1.0)

        if not with_jacobian:
            return res, None
        rows, cols, vals = coo.arrays()
        keep = ~replaced[rows]
        r_rows, r_cols, r_vals = rep.arrays()
        rows = np.concatenate([rows[keep], r_rows])
        cols = np.concatenate([cols[keep], r_cols])
        vals = np.concatenate([vals[keep], r_vals])
        A = sps.coo_matrix((vals, (rows, cols)), shape=(dof.total, dof.total)).tocsr()
        return res, A

    # Individual physics blocks ------------------------------------------------

    def _flow(self, state: State, geo, res, coo) -> None:
        dof, prm, mesh = self.dof, self.params, self.mesh
        x, xp, dt = state.x, state.prev, state.dt
        m = mesh.matrix

        # Densities and their pressure derivatives, all subdomain cells.
        p_all = x[self.all_p_dofs]
        rho = cst.fluid_density(p_all, prm)
        drho = cst.fluid_density_dp(p_all, prm)
        p_prev = xp[self.all_p_dofs]
        rho_prev = cst.fluid_density(p_prev, prm)

        # --- Matrix accumulation.
        cells = np.arange(m.num_cells)
        pd = dof.p(0, cells)
        div_u = self._div_u(x)
        div_u_prev = self._div_u(xp)
        phi = cst.matrix_porosity(x[pd], div_u, prm)
        phi_prev = cst.matrix_porosity(xp[pd], div_u_prev, prm)
        acc = (rho[pd] * phi - rho_prev[pd] * phi_prev) * m.cell_measures / dt
        np.add.at(res, pd, acc)
        if coo is not None:
            phi_p = cst.matrix_porosity_dp(prm)
            coo.add(pd, pd, (drho[pd] * phi + rho[pd] * phi_p) * m.cell_measures / dt)
            alpha = prm.biot_coefficient
            coo.add(
                pd[:, None],
                self.elem_udofs,
                (rho[pd] * alpha / dt)[:, None] * self.pe,
            )
            if self.bub_tri.size:
                brows = pd[self.bub_tri]
                fac = rho[brows] * alpha / dt
                for d in (0, 1):
                    coo.add(brows, self.bub_wdofs[:, d], fac * self.bub_q[:, d])

        # --- Matrix interior TPFA fluxes.
        own, nei = dof.p(0, self.fi_own), dof.p(0, self.fi_nei)
        self._tpfa(res, coo, own, nei, self.fi_trans, self.fi_gdx, rho, drho, x)

        # --- Matrix Dirichlet boundary fluxes (ghost value at the collocation
        # point of the cell-center perpendicular).
        if self.fb_cell.size:
            pc = dof.p(0, self.fb_cell)
            p_i = x[pc]
            rho_b = cst.fluid_density(self.fb_value, prm)
            rho_bar = 0.5 * (rho[pc] + rho_b)
            pot = (p_i - self.fb_value) - rho_bar * self.fb_gdx
            up_in = pot > 0
            rho_up = np.where(up_in, rho[pc], rho_b)
            flux = self.fb_trans * rho_up * pot / prm.viscosity
            np.add.at(res, pc, flux)
            if coo is not None:
                dpot = 1.0 - 0.5 * drho[pc] * self.fb_gdx
                dflux = self.fb_trans * (
                    np.where(up_in, drho[pc], 0.0) * pot + rho_up * dpot
                ) / prm.viscosity
                coo.add(pc, pc, dflux)

        # --- Prescribed Neumann mass fluxes.
        res += self.neumann_flux

        # --- Fracture accumulation (porosity one, specific volume = aperture).
        if self.n_frac_cells:
            geo_prev = self.fracture_geometry(state, vec=xp)
            for f in mesh.fractures:
                cells = np.arange(f.num_cells)
                pd = dof.p(f.id, cells)
                gc = self.frac_off[f.id] + cells
                acc = (
                    geo["aperture"][gc] * rho[pd]
                    - geo_prev["aperture"][gc] * rho_prev[pd]
                ) * f.cell_measures / dt
                np.add.at(res, pd, acc)
                if coo is not None:
                    coo.add(pd, pd, geo["aperture"][gc] * drho[pd] * f.cell_measures / dt)
                    dadj = geo["dadj"][gc] * rho[pd] * f.cell_measures / dt
                    for d in (0, 1):
                        coo.add(pd, self.fr_ujk[gc, d], dadj * self.fr_normal[gc, d])
                        coo.add(pd, self.fr_ujj[gc, d], -dadj * self.fr_normal[gc, d])

            # --- Fracture interior TPFA with cubic-law transmissibilities.
            for rec in self.fr_inner:
                g1, g2 = rec["g1"], rec["g2"]
                a1, a2 = geo["aperture"][g1], geo["aperture"][g2]
                k1, k2 = a1**3 / 12.0, a2**3 / 12.0
                trans = k1 * k2 / (rec["d1"] * k2 + rec["d2"] * k1)
                p1d, p2d = rec["p1"], rec["p2"]
                pot = (x[p1d] - x[p2d]) - 0.5 * (rho[p1d] + rho[p2d]) * rec["gdx"]
                up1 = pot > 0
                rho_up = np.where(up1, rho[p1d], rho[p2d])
                flux = trans * rho_up * pot / prm.viscosity
                np.add.at(res, p1d, flux)
                np.add.at(res, p2d, -flux)
                if coo is not None:
                    d1 = (
                        np.where(up1, drho[p1d], 0.0) * pot
                        + rho_up * (1.0 - 0.5 * drho[p1d] * rec["gdx"])
                    ) * trans / prm.viscosity
                    d2 = (
                        np.where(~up1, drho[p2d], 0.0) * pot
                        + rho_up * (-1.0 - 0.5 * drho[p2d] * rec["gdx"])
                    ) * trans / prm.viscosity
                    coo.add(p1d, p1d, d1)
                    coo.add(p1d, p2d, d2)
                    coo.add(p2d, p1d, -d1)
                    coo.add(p2d, p2d, -d2)
                    # Aperture chain through the transmissibility.
                    base = rho_up * pot / prm.viscosity
                    for gcell, dd, kk, aa in ((g1, rec["d1"], k1, a1), (g2, rec["d2"], k2, a2)):
                        dT_dk = (trans / kk) ** 2 * dd
                        dT_da = dT_dk * (aa**2 / 4.0) * geo["dadj"][gcell]
                        val = base * dT_da
                        for d in (0, 1):
                            coo.add(p1d, self.fr_ujk[gcell, d], val * self.fr_normal[gcell, d])
                            coo.add(p1d, self.fr_ujj[gcell, d], -val * self.fr_normal[gcell, d])
                            coo.add(p2d, self.fr_ujk[gcell, d], -val * self.fr_normal[gcell, d])
                            coo.add(p2d, self.fr_ujj[gcell, d], val * self.fr_normal[gcell, d])

        # --- Intersection accumulation: V = a0^2, porosity one, measure one.
        if mesh.points:
            apts = self.point_apertures(geo["aperture"])
            apts_prev = self.point_apertures(self.fracture_geometry(state, vec=xp)["aperture"])
            for pt in mesh.points:
                pd = dof.p(pt.id, [0])[0]
                acc = (apts[pt.id] ** 2 * rho[pd] - apts_prev[pt.id] ** 2 * rho_prev[pd]) / dt
                res[pd] += acc
                if coo is not None:
                    coo.add(np.asarray([pd]), np.asarray([pd]), apts[pt.id] ** 2 * drho[pd] / dt)
                    neigh = self.point_neighbors[pt.id]
                    da0 = 2.0 * apts[pt.id] * rho[pd] / dt / len(neigh)
                    for gcell in neigh:
                        val = da0 * geo["dadj"][gcell]
                        for d in (0, 1):
                            coo.add(np.asarray([pd]), self.fr_ujk[[gcell], d], val * self.fr_normal[gcell, d])
                            coo.add(np.asarray([pd]), self.fr_ujj[[gcell], d], -val * self.fr_normal[gcell, d])

    def _tpfa(self, res, coo, own, nei, trans, gdx, rho, drho, x) -> None:
        """Two-point flux between interior cell pairs, upwinded density."""
        prm = self.params
        pot = (x[own] - x[nei]) - 0.5 * (rho[own] + rho[nei]) * gdx
        up_own = pot > 0
        rho_up = np.where(up_own, rho[own], rho[nei])
        flux = trans * rho_up * pot / prm.viscosity
        np.add.at(res, own, flux)
        np.add.at(res, nei, -flux)
        if coo is not None:
            d_own = (
                np.where(up_own, drho[own], 0.0) * pot
                + rho_up * (1.0 - 0.5 * drho[own] * gdx)
            ) * trans / prm.viscosity
            d_nei = (
                np.where(~up_own, drho[nei], 0.0) * pot
                + rho_up * (-1.0 - 0.5 * drho[nei] * gdx)
            ) * trans / prm.viscosity
            coo.add(own, own, d_own)
            coo.add(own, nei, d_nei)
            coo.add(nei, own, -d_own)
            coo.add(nei, nei, -d_nei)

    def _mechanics(self, state: State, res, coo) -> None:
        dof, prm = self.dof, self.params
        x = state.x
        u_e = x[self.elem_udofs]  # (T, 6)
        p_e = x[self.elem_pdofs]
        r_e = np.einsum("tab,tb->ta", self.ke, u_e) - prm.biot_coefficient * p_e[:, None] * self.pe
        np.add.at(res, self.elem_udofs.ravel(), r_e.ravel())
        res -= self.mech_load
        if coo is not None:
            T = self.ke.shape[0]
            rows = np.repeat(self.elem_udofs, 6, axis=1).reshape(T, 6, 6)
            cols = np.tile(self.elem_udofs, (1, 6)).reshape(T, 6, 6)
            coo.add(rows, cols, self.ke)
            coo.add(self.elem_udofs, self.elem_pdofs[:, None], -prm.biot_coefficient * self.pe)
        if np.any(prm.g_vec != 0.0):
            # Gravity body load, lumped to the element nodes and bubbles.
            m = self.mesh.matrix
            div_u = self._div_u(x)
            phi = cst.matrix_porosity(p_e, div_u, prm)
            rho_f = cst.fluid_density(p_e, prm)
            dens = phi * rho_f + (1.0 - phi) * prm.solid_density
            for d in (0, 1):
                load = dens * prm.g_vec[d] * m.cell_measures / 3.0
                for a in range(3):
                    np.add.at(res, self.elem_udofs[:, 2 * a + d], -load)
                if self.bub_tri.size:
                    np.add.at(
                        res,
                        self.bub_wdofs[:, d],
                        -dens[self.bub_tri] * prm.g_vec[d] * m.cell_measures[self.bub_tri] / 3.0,
                    )
            if coo is not None:
                phi_p = cst.matrix_porosity_dp(prm)
                drho_f = cst.fluid_density_dp(p_e, prm)
                ddens_dp = phi_p * rho_f + phi * drho_f - phi_p * prm.solid_density
                ddens_ddiv = prm.biot_coefficient * (rho_f - prm.solid_density)
                load_rows = [
                    (self.elem_udofs[:, 2 * a + d], d, np.arange(len(p_e)))
                    for a in range(3)
                    for d in (0, 1)
                ]
                if self.bub_tri.size:
                    load_rows += [
                        (self.bub_wdofs[:, d], d, self.bub_tri) for d in (0, 1)
                    ]
                for rows, d, tris in load_rows:
                    fac = prm.g_vec[d] * m.cell_measures[tris] / 3.0
                    coo.add(rows, self.elem_pdofs[tris], -fac * ddens_dp[tris])
                    coo.add(
                        rows[:, None],
                        self.elem_udofs[tris],
                        -(fac * ddens_ddiv[tris] / m.cell_measures[tris])[:, None]
                        * self.pe[tris],
                    )
                    if self.bub_tri.size:
                        # Chain through the bubble part of the volumetric strain.
                        for bi, tri in enumerate(self.bub_tri):
                            mask = tris == tri
                            if not np.any(mask):
                                continue
                            dfac = (
                                prm.g_vec[d] / 3.0 * ddens_ddiv[tri]
                            )
                            for dd in (0, 1):
                                coo.add(
                                    rows[mask],
                                    np.full(int(mask.sum()), self.bub_wdofs[bi, dd]),
                                    dfac * self.bub_q[bi, dd],
                                )

    def _interface_darcy(self, state: State, geo, res, coo) -> None:
        """Interface flux rows plus the mass exchange they induce."""
        dof, prm = self.dof, self.params
        x = state.x
        eta = prm.viscosity
        p_all = x[self.all_p_dofs]
        rho = cst.fluid_density(p_all, prm)
        drho = cst.fluid_density_dp(p_all, prm)

        for rec in self.mf_recs:
            vjd, phd, pld = rec["vj"], rec["p_h"], rec["p_l"]
            gc = rec["gcells"]
            a = geo["aperture"][gc]
            dadj = geo["dadj"][gc]
            v = x[vjd]
            up_h = v > 0
            rho_j = np.where(up_h, rho[phd], rho[pld])
            drho_j_h = np.where(up_h, drho[phd], 0.0)
            drho_j_l = np.where(up_h, 0.0, drho[pld])
            gn = rec["g_n"]
            # Darcy row: v + (K/eta)[(2/a)(p_l - p_h) - rho_j g.n_h] = 0.
            dp = x[pld] - x[phd]
            row = v + (a / (6.0 * eta)) * dp - (a**2 / (12.0 * eta)) * rho_j * gn
            np.add.at(res, vjd, row)
            # Mass exchange V_j rho_j v |mortar| from higher into lower cell.
            phi_m = a * rho_j * v * rec["measure"]
            np.add.at(res, phd, phi_m)
            np.add.at(res, pld, -phi_m)
            if coo is None:
                continue
            coo.add(vjd, vjd, np.ones_like(v))
            coo.add(vjd, pld, a / (6.0 * eta) - (a**2 / (12.0 * eta)) * drho_j_l * gn)
            coo.add(vjd, phd, -a / (6.0 * eta) - (a**2 / (12.0 * eta)) * drho_j_h * gn)
            drow_da = (dp / (6.0 * eta) - (a / (6.0 * eta)) * rho_j * gn) * dadj
            dphi_da = rho_j * v * rec["measure"] * dadj
            dphi_dv = a * rho_j * rec["measure"]
            dphi_dph = a * drho_j_h * v * rec["measure"]
            dphi_dpl = a * drho_j_l * v * rec["measure"]
            coo.add(phd, vjd, dphi_dv)
            coo.add(pld, vjd, -dphi_dv)
            coo.add(phd, phd, dphi_dph)
            coo.add(phd, pld, dphi_dpl)
            coo.add(pld, phd, -dphi_dph)
            coo.add(pld, pld, -dphi_dpl)
            for d in (0, 1):
                n_d = self.fr_normal[gc, d]
                coo.add(vjd, self.fr_ujk[gc, d], drow_da * n_d)
                coo.add(vjd, self.fr_ujj[gc, d], -drow_da * n_d)
                coo.add(phd, self.fr_ujk[gc, d], dphi_da * n_d)
                coo.add(phd, self.fr_ujj[gc, d], -dphi_da * n_d)
                coo.add(pld, self.fr_ujk[gc, d], -dphi_da * n_d)
                coo.add(pld, self.fr_ujj[gc, d], dphi_da * n_d)

        if not self.pt_recs:
            return
        apts = self.point_apertures(geo["aperture"])
        for rec in self.pt_recs:
            vjd, phd, pld = rec["vj"], rec["p_h"], rec["p_l"]
            pid = rec["point"]
            a0 = apts[pid]
            neigh = self.point_neighbors[pid]
            v = x[vjd]
            up_h = v > 0
            rho_j = np.where(up_h, rho[phd], rho[pld])
            drho_j_h = np.where(up_h, drho[phd], 0.0)
            drho_j_l = np.where(up_h, 0.0, drho[pld])
            gn = rec["g_n"]
            dp = x[pld] - x[phd]
            row = v + (a0 / (6.0 * eta)) * dp - (a0**2 / (12.0 * eta)) * rho_j * gn
            np.add.at(res, vjd, row)
            phi_m = a0**2 * rho_j * v  # mortar measure one
            np.add.at(res, phd, phi_m)
            np.add.at(res, pld, -phi_m)
            if coo is None:
                continue
            coo.add(vjd, vjd, np.ones_like(v))
            coo.add(vjd, pld, a0 / (6.0 * eta) - (a0**2 / (12.0 * eta)) * drho_j_l * gn)
            coo.add(vjd, phd, -a0 / (6.0 * eta) - (a0**2 / (12.0 * eta)) * drho_j_h * gn)
            coo.add(phd, vjd, a0**2 * rho_j)
            coo.add(pld, vjd, -(a0**2) * rho_j)
            coo.add(phd, phd, a0**2 * drho_j_h * v)
            coo.add(phd, pld, a0**2 * drho_j_l * v)
            coo.add(pld, phd, -(a0**2) * drho_j_h * v)
            coo.add(pld, pld, -(a0**2) * drho_j_l * v)
            drow_da0 = dp / (6.0 * eta) - (a0 / (6.0 * eta)) * rho_j * gn
            dphi_da0 = 2.0 * a0 * rho_j * v
            for gcell in neigh:
                fac = geo["dadj"][gcell] / len(neigh)
                for d in (0, 1):
                    n_d = self.fr_normal[gcell, d]
                    coo.add(vjd, self.fr_ujk[[gcell], d], drow_da0 * fac * n_d)
                    coo.add(vjd, self.fr_ujj[[gcell], d], -drow_da0 * fac * n_d)
                    coo.add(phd, self.fr_ujk[[gcell], d], dphi_da0 * fac * n_d)
                    coo.add(phd, self.fr_ujj[[gcell], d], -dphi_da0 * fac * n_d)
                    coo.add(pld, self.fr_ujk[[gcell], d], -dphi_da0 * fac * n_d)
                    coo.add(pld, self.fr_ujj[[gcell], d], dphi_da0 * fac * n_d)

    def _interface_mechanics(self, state: State, res, coo) -> None:
        """Fracture-wall coupling of the momentum and mortar blocks.

        The force balance across each interface supplies the wall traction
        sign-consistently on the two sides: the matrix feels
        ``+-(lam - p_l n_l)`` as a Neumann load, integrated against the nodal
        and edge-bubble test functions.  The mortar displacements are closed
        by the trace rows ``u_trace - u_j = 0`` with the face-averaged wall
        displacement (including the bubble contribution) as the trace.
        """
        x = state.x
        prm = self.params
        alpha = prm.biot_coefficient
        for rec in self.fb_recs:
            gc = rec["gcells"]
            n_l, t_l = rec["n_l"], rec["t_l"]
            lam_vec = x[self.fr_lam0[gc], None] * n_l + x[self.fr_lam1[gc], None] * t_l
            p_l = x[rec["pl_dof"]]
            p_e = x[rec["pe_dof"]]
            sgn = rec["sign"]
            traction = sgn * (lam_vec - p_l[:, None] * n_l)
            load = traction * rec["measure"][:, None] * 0.5
            for a in (0, 1):
                for d in (0, 1):
                    np.add.at(res, rec["wall_udofs"][:, 2 * a + d], -load[:, d])
            # Bubble momentum rows: elastic coupling with the nodal field,
            # the pressure term, and the face-integrated traction load.
            w_val = np.stack([x[rec["wdofs"][:, d]] for d in (0, 1)], axis=1)
            r_w = (
                np.einsum("mde,me->md", rec["k_w_u"], x[rec["udofs"]])
                - alpha * p_e[:, None] * rec["q"]
                - traction * (2.0 / 3.0) * rec["measure"][:, None]
            )
            np.add.at(res, rec["wdofs"].ravel(), r_w.ravel())
            # Bubble stress tested against the nodal functions (symmetric).
            r_u = np.einsum("mde,md->me", rec["k_w_u"], w_val)
            np.add.at(res, rec["udofs"].ravel(), r_u.ravel())
            # Trace rows: face average of nodal plus bubble displacement.
            u_avg = (
                0.5 * (x[rec["wall_udofs"][:, 0:2]] + x[rec["wall_udofs"][:, 2:4]])
                + (2.0 / 3.0) * w_val
            )
            uj_val = np.stack([x[rec["rows"][:, d]] for d in (0, 1)], axis=1)
            np.add.at(res, rec["rows"].ravel(), (u_avg - uj_val).ravel())
            if coo is None:
                continue
            half = 0.5 * rec["measure"]
            two_thirds = (2.0 / 3.0) * rec["measure"]
            for a in (0, 1):
                for d in (0, 1):
                    rows = rec["wall_udofs"][:, 2 * a + d]
                    coo.add(rows, self.fr_lam0[gc], -sgn * half * n_l[:, d])
                    coo.add(rows, self.fr_lam1[gc], -sgn * half * t_l[:, d])
                    coo.add(rows, rec["pl_dof"], sgn * half * n_l[:, d])
            for d in (0, 1):
                rows = rec["wdofs"][:, d]
                coo.add(rows[:, None], rec["udofs"], rec["k_w_u"][:, d, :])
                coo.add(rows, rec["pe_dof"], -alpha * rec["q"][:, d])
                coo.add(rows, self.fr_lam0[gc], -sgn * two_thirds * n_l[:, d])
                coo.add(rows, self.fr_lam1[gc], -sgn * two_thirds * t_l[:, d])
                coo.add(rows, rec["pl_dof"], sgn * two_thirds * n_l[:, d])
                # Transpose elastic coupling into the nodal momentum rows.
                coo.add(rec["udofs"], rows[:, None], rec["k_w_u"][:, d, :])
            for d in (0, 1):
                rows = rec["rows"][:, d]
                coo.add(rows, rec["wall_udofs"][:, d], 0.5)
                coo.add(rows, rec["wall_udofs"][:, 2 + d], 0.5)
                coo.add(rows, rec["wdofs"][:, d], 2.0 / 3.0)
                coo.add(rows, rows, -1.0)
        for w1, w2, k12 in self.bubble_pairs:
            w2_val = x[w2]
            for i in (0, 1):
                res[w1[i]] += k12[i] @ w2_val
                if coo is not None:
                    coo.add(np.asarray([w1[i], w1[i]]), w2, k12[i])

    def force_balance_residual(self, state: State) -> np.ndarray:
        """Diagnostic interface force balance per mortar cell.

        Evaluates ``Pi(lam - p_l n_l) -+ Pi(sigma_h . n_h)`` with the
        face-averaged finite element traction of the adjacent matrix element;
        the weak form drives this to zero up to discretization error.
        Returned in the layout of the interface-displacement block.
        """
        prm = self.params
        x = state.x
        alpha = prm.biot_coefficient
        out = np.zeros(self.dof.n_uj)
        for rec in self.fb_recs:
            gc = rec["gcells"]
            n_l, t_l = rec["n_l"], rec["t_l"]
            lam_vec = x[self.fr_lam0[gc], None] * n_l + x[self.fr_lam1[gc], None] * t_l
            trac = np.einsum("mde,me->md", rec["btrac"], x[rec["udofs"]])
            p_l = x[rec["pl_dof"]]
            p_e = x[rec["pe_dof"]]
            row_val = lam_vec - p_l[:, None] * n_l - trac + alpha * p_e[:, None] * n_l
            out[rec["rows"].ravel() - self.dof.uj0] = row_val.ravel()
        return out

    def _contact(self, state: State, geo, kernel: ExactKernel, res, coo) -> None:
        if not self.n_frac_cells:
            return
        inp = self.contact_inputs(state, kernel)
        c_n, c_tau = kernel.residual(inp)
        np.add.at(res, self.fr_lam0, c_n)
        np.add.at(res, self.fr_lam1, c_tau[:, 0])
        if coo is None:
            return
        jn, jt = kernel.jacobians(inp)
        # Normal rows.
        coo.add(self.fr_lam0, self.fr_lam0, jn["lam_n"])
        for d in (0, 1):
            djump = jn["jump_n"][:, None] * self.fr_normal[:, d, None] + (
                jn["jump_tau"][:, 0, None] * self.fr_tangent[:, d, None]
            )
            coo.add(self.fr_lam0, self.fr_ujk[:, d], djump[:, 0])
            coo.add(self.fr_lam0, self.fr_ujj[:, d], -djump[:, 0])
        # Tangential rows (one tangential component in 2D).
        coo.add(self.fr_lam1, self.fr_lam1, jt["lam_tau"][:, 0, 0])
        coo.add(self.fr_lam1, self.fr_lam0, jt["lam_n"][:, 0])
        for d in (0, 1):
            dudot = jt["udot_tau"][:, 0, 0] * self.fr_tangent[:, d]
            coo.add(self.fr_lam1, self.fr_ujk[:, d], dudot)
            coo.add(self.fr_lam1, self.fr_ujj[:, d], -dudot)


# ---------------------------------------------------------------------------
# Block-level operations (thin wrappers over the assembler)
# ---------------------------------------------------------------------------

def _assembler(problem: Problem) -> Assembler:
    asm = getattr(problem, "_assembler", None)
    if asm is None:
        asm = Assembler(problem)
        problem._assembler = asm
    return asm


def assemble_flow(state: State, problem: Problem) -> np.ndarray:
    """Mass-balance residual per cell (all dimensions)."""
    asm = _assembler(problem)
    res = np.zeros(asm.dof.total)
    geo = asm.fracture_geometry(state)
    asm._flow(state, geo, res, None)
    asm._interface_darcy(state, geo, res, None)
    if asm.well_dof >= 0:
        res[asm.well_dof] = state.x[asm.well_dof] - problem.well.pressure
    return res[asm.dof.p0 : asm.dof.p0 + asm.dof.n_p]


def assemble_mechanics(state: State, problem: Problem) -> np.ndarray:
    """Momentum residual per displacement dof, including the fracture-wall
    traction supplied by the interface force balance and the external
    Dirichlet row replacements."""
    asm = _assembler(problem)
    res = np.zeros(asm.dof.total)
    asm._mechanics(state, res, None)
    asm._interface_mechanics(state, res, None)
    res[asm.dirichlet_dofs] = state.x[asm.dirichlet_dofs] - asm.dirichlet_vals
    return res[asm.dof.u0 : asm.dof.uj0]  # nodal rows, then wall-bubble rows


def assemble_interface_flux(state: State, problem: Problem) -> np.ndarray:
    """Interface Darcy residual per mortar cell."""
    asm = _assembler(problem)
    res = np.zeros(asm.dof.total)
    geo = asm.fracture_geometry(state)
    asm._interface_darcy(state, geo, res, None)
    return res[asm.dof.vj0 : asm.dof.vj0 + asm.dof.n_vj]


def assemble_force_balance(state: State, problem: Problem) -> np.ndarray:
    """Interface force-balance residual per mortar cell (vector components):
    the contact traction corrected by the fracture fluid pressure against the
    face-averaged finite element traction of the adjacent matrix element."""
    asm = _assembler(problem)
    return asm.force_balance_residual(state)


def assemble_full(
    state: State,
    problem: Problem,
    kernel: ExactKernel,
    frozen_flow: bool = False,
) -> tuple[LinearSystem, np.ndarray]:
    """Full residual F(x) and one generalized Jacobian, as a linear system
    ready for the Newton step (rhs = -F)."""
    asm = _assembler(problem)
    res, A = asm.system(state, kernel, frozen_flow=frozen_flow)
    if not np.all(np.isfinite(res)):
        raise FloatingPointError("non-finite entries in the assembled residual")
    return LinearSystem(A, -res, asm.dof), res
