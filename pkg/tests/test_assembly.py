"""Assembly of the residual system and its generalized Jacobian."""
import numpy as np
import pytest

from conftest import (
    SIDES,
    clamped_mech,
    fresh_state,
    noflow_bc,
    plain_params,
    pressure_bc,
)
from porofrac.assembly import (
    Assembler,
    ExactKernel,
    FlowBC,
    MechBC,
    Problem,
    State,
    Well,
    assemble_flow,
    assemble_force_balance,
    assemble_full,
    assemble_mechanics,
)
from porofrac.constitutive import MaterialParams
from porofrac.mdgeom import FractureNetwork, build_structured_mesh, load_mesh, save_mesh


def test_flow_equilibrium_uniform_pressure():
    mesh = build_structured_mesh((0, 0, 1, 1), None, h=0.5)
    prob = Problem(mesh, plain_params(), noflow_bc(), clamped_mech())
    st, asm = fresh_state(prob)
    st.x[asm.dof.p0 : asm.dof.p0 + asm.dof.n_p] = 3.7
    st.prev = st.x.copy()
    res = assemble_flow(st, prob)
    assert np.allclose(res, 0.0, atol=1e-15)


def test_flow_two_cell_hand_tpfa():
    # Unit square, one lattice cell -> two triangles sharing the diagonal.
    mesh = build_structured_mesh((0, 0, 1, 1), None, h=1.0)
    prm = plain_params(matrix_permeability=2.5, viscosity=0.5)
    prob = Problem(mesh, prm, noflow_bc(), clamped_mech())
    st, asm = fresh_state(prob)
    st.x[asm.dof.p(0, [0])] = 2.0
    st.x[asm.dof.p(0, [1])] = 1.0
    st.prev = st.x.copy()
    res = assemble_flow(st, prob)
    # Hand transmissibility: |f| = sqrt(2), centroid-face distances 1/(3 sqrt 2)
    # each side, so T = sqrt(2) k / (2 / (3 sqrt 2)) = 3 k.
    t_hand = 3.0 * prm.matrix_permeability
    rho_up = 1.0  # incompressible reference density
    flux = t_hand * rho_up * (2.0 - 1.0) / prm.viscosity
    assert res[0] == pytest.approx(flux, rel=1e-12)
    assert res[1] == pytest.approx(-flux, rel=1e-12)


def test_flow_linear_field_is_exact():
    field = lambda x, y: 1.0 + 2.0 * x - 3.0 * y  # noqa: E731
    mesh = build_structured_mesh((0, 0, 1, 1), None, h=0.25)
    prob = Problem(
        mesh,
        plain_params(),
        {s: FlowBC("pressure", field) for s in SIDES},
        clamped_mech(),
    )
    st, asm = fresh_state(prob, dt=1e30)
    cells = np.arange(mesh.matrix.num_cells)
    st.x[asm.dof.p(0, cells)] = [field(*c) for c in mesh.matrix.cell_centers]
    st.prev = st.x.copy()
    res = assemble_flow(st, prob)
    assert np.max(np.abs(res)) < 1e-12
    # The flow operator is linear here; solving from zero reproduces the
    # field exactly at every cell center.
    res0, A = asm.system(State.zeros(asm.dof, dt=1e30), ExactKernel(1.0, 0.5))
    import scipy.sparse.linalg as spla

    sol = spla.spsolve(A.tocsc(), -res0)
    assert np.allclose(
        sol[asm.dof.p(0, cells)],
        [field(*c) for c in mesh.matrix.cell_centers],
        atol=1e-10,
    )


def test_mechanics_zero_state_zero_residual():
    mesh = build_structured_mesh((0, 0, 1, 1), None, h=0.25)
    prob = Problem(mesh, plain_params(), noflow_bc(), clamped_mech())
    st, asm = fresh_state(prob)
    res = assemble_mechanics(st, prob)
    assert np.allclose(res, 0.0)


def test_mechanics_pure_pressure_single_element():
    # One square -> two triangles; free boundary; u = 0; uniform pressure.
    mesh = build_structured_mesh((0, 0, 1, 1), None, h=1.0)
    prm = plain_params()
    free = {s: MechBC("traction", (0.0, 0.0)) for s in SIDES}
    prob = Problem(mesh, prm, noflow_bc(), free)
    st, asm = fresh_state(prob)
    p0 = 2.2
    st.x[asm.dof.p0 : asm.dof.p0 + asm.dof.n_p] = p0
    res = assemble_mechanics(st, prob).reshape(-1, 2)
    # Hand integration: residual_a = -alpha p0 A grad(phi_a) summed over the
    # adjacent elements, with A = 1/2 for each triangle.
    alpha = prm.biot_coefficient
    expected = np.zeros_like(res)
    for t in range(mesh.matrix.num_cells):
        for a in range(3):
            expected[mesh.matrix.tri_nodes[t, a]] -= (
                alpha * p0 * mesh.matrix.cell_measures[t] * mesh.matrix.grads[t, a]
            )
    assert np.allclose(res, expected, atol=1e-14)
    # Cross-check one entry fully by hand on the reference right triangle
    # (0,0)-(1,0)-(1,1): grad(phi at (1,0)) = (1,-1), area 1/2.
    tri = [
        t
        for t in range(2)
        if np.allclose(sorted(map(tuple, mesh.nodes[mesh.matrix.tri_nodes[t]])), [(0, 0), (1, 0), (1, 1)])
    ]
    if tri:
        t = tri[0]
        loc = [
            a
            for a in range(3)
            if np.allclose(mesh.nodes[mesh.matrix.tri_nodes[t, a]], (1, 0))
        ][0]
        assert np.allclose(mesh.matrix.grads[t, loc], (1.0, -1.0))


def patch_problem_and_exact(h=0.25):
    """Uniform anisotropic compression with rollers; exact linear solution.

    Dirichlet pressure at the reference value on all sides keeps the pore
    pressure uniform, so the elastic stress carries an extra alpha*p_ref
    isotropic prestress relative to the applied total tractions.
    """
    mesh = build_structured_mesh((0, 0, 2, 1), None, h=h)
    prm = MaterialParams(fluid_compressibility=1e-300)
    sxx, syy = -30e6, -50e6
    from porofrac.assembly import make_problem

    prob = make_problem(
        mesh,
        prm,
        {s: FlowBC("pressure", prm.reference_pressure) for s in SIDES},
        {
            "left": MechBC("roller_x"),
            "bottom": MechBC("roller_y"),
            "right": MechBC("traction", (sxx, 0.0)),
            "top": MechBC("traction", (0.0, syy)),
        },
        background_pressure=prm.reference_pressure,
    )
    ps = prm.pressure_scale()
    sprm = prm.scaled()
    g, lam, alpha = sprm.shear_modulus, sprm.lame_lambda, sprm.biot_coefficient
    p_s = prm.reference_pressure * ps
    mat = np.array([[2 * g + lam, lam], [lam, 2 * g + lam]])
    exx, eyy = np.linalg.solve(mat, [sxx * ps + alpha * p_s, syy * ps + alpha * p_s])
    exact_u = np.stack([exx * mesh.nodes[:, 0], eyy * mesh.nodes[:, 1]], axis=1)
    return prob, p_s, exact_u


def test_patch_test_uniform_anisotropic_compression():
    prob, p_s, exact_u = patch_problem_and_exact()
    st, asm = fresh_state(prob, dt=1e30)
    # The residual vanishes at the exact homogeneous state.
    exact = State.zeros(asm.dof, dt=1e30)
    exact.x[asm.all_p_dofs] = p_s
    exact.x[asm.dof.u0 : asm.dof.u0 + asm.dof.n_u] = exact_u.ravel()
    exact.prev = exact.x.copy()
    res, _ = asm.system(exact, ExactKernel(1.0, 0.5))
    assert np.max(np.abs(res)) < 1e-10
    # With a constant-density fluid the step is linear: one Newton solve from
    # zero reproduces the homogeneous solution to solver precision.
    res0, A = asm.system(st, ExactKernel(1.0, 0.5))
    import scipy.sparse.linalg as spla

    sol = spla.spsolve(A.tocsc(), -res0)
    u = sol[asm.dof.u0 : asm.dof.u0 + asm.dof.n_u].reshape(-1, 2)
    scale = np.abs(exact_u).max()
    assert np.max(np.abs(u - exact_u)) < 1e-10 * scale
    assert np.allclose(sol[asm.all_p_dofs], p_s, atol=1e-10 * p_s)


def test_mass_conservation_telescopes(crossing_mesh):
    prm = MaterialParams().scaled()
    prob = Problem(crossing_mesh, prm, noflow_bc(), clamped_mech(), background_pressure=0.02)
    asm = Assembler(prob)
    rng = np.random.default_rng(17)
    st = State.zeros(asm.dof, dt=8640.0)
    st.x = rng.normal(scale=1e-4, size=asm.dof.total)
    st.x[asm.all_p_dofs] = 0.02 + rng.normal(scale=1e-3, size=asm.dof.n_p)
    st.prev = np.zeros_like(st.x)
    st.prev[asm.all_p_dofs] = 0.02
    res = np.zeros(asm.dof.total)
    geo = asm.fracture_geometry(st)
    asm._flow(st, geo, res, None)
    asm._interface_darcy(st, geo, res, None)
    flow_rows = res[asm.all_p_dofs]
    # With no-flow boundaries and no well, all flux terms telescope: the sum
    # equals the summed accumulation, computed here independently.
    from porofrac import constitutive as cst

    total = 0.0
    m = crossing_mesh.matrix
    pd = asm.dof.p(0, np.arange(m.num_cells))

    def div_of(vec):
        div = np.einsum("te,te->t", asm.pe, vec[asm.elem_udofs])
        contrib = np.sum(asm.bub_q * vec[asm.bub_wdofs], axis=1)
        np.add.at(div, asm.bub_tri, contrib)
        return div / m.cell_measures

    cur = cst.fluid_density(st.x[pd], prm) * cst.matrix_porosity(st.x[pd], div_of(st.x), prm)
    old = cst.fluid_density(st.prev[pd], prm) * cst.matrix_porosity(st.prev[pd], div_of(st.prev), prm)
    total += np.sum((cur - old) * m.cell_measures) / st.dt
    geo_prev = asm.fracture_geometry(st, vec=st.prev)
    for f in crossing_mesh.fractures:
        pd = asm.dof.p(f.id, np.arange(f.num_cells))
        gc = asm.frac_off[f.id] + np.arange(f.num_cells)
        cur = geo["aperture"][gc] * cst.fluid_density(st.x[pd], prm)
        old = geo_prev["aperture"][gc] * cst.fluid_density(st.prev[pd], prm)
        total += np.sum((cur - old) * f.cell_measures) / st.dt
    apts = asm.point_apertures(geo["aperture"])
    apts0 = asm.point_apertures(geo_prev["aperture"])
    for pt in crossing_mesh.points:
        pd = asm.dof.p(pt.id, [0])[0]
        total += (
            apts[pt.id] ** 2 * cst.fluid_density(st.x[pd], prm)
            - apts0[pt.id] ** 2 * cst.fluid_density(st.prev[pd], prm)
        ) / st.dt
    assert np.sum(flow_rows) == pytest.approx(total, rel=1e-12, abs=1e-24)


def test_force_balance_scales_linearly(single_fracture_mesh):
    prm = MaterialParams().scaled()
    prob = Problem(single_fracture_mesh, prm, noflow_bc(), clamped_mech())
    asm = Assembler(prob)
    rng = np.random.default_rng(3)
    st = State.zeros(asm.dof)
    st.x[asm.dof.u0 : asm.dof.u0 + asm.dof.n_u] = rng.normal(scale=1e-4, size=asm.dof.n_u)
    st.x[asm.dof.lam0 :] = rng.normal(scale=1e-2, size=asm.dof.n_lam)
    r1 = assemble_force_balance(st, prob)
    st2 = st.copy()
    st2.x[asm.dof.u0 : asm.dof.u0 + asm.dof.n_u] *= 3.0
    st2.x[asm.dof.lam0 :] *= 3.0
    r2 = assemble_force_balance(st2, prob)
    assert np.allclose(r2, 3.0 * r1, rtol=1e-12)


def test_force_balance_static_equilibrium(single_fracture_mesh):
    # Matched traction with zero fluid pressure: residual vanishes when the
    # contact traction equals the elastic traction on the walls.
    prm = plain_params()
    prob = Problem(single_fracture_mesh, prm, noflow_bc(), clamped_mech())
    asm = Assembler(prob)
    st = State.zeros(asm.dof)
    # Uniform vertical compression u_y = eps * y gives sigma_yy = (2G+lam) eps.
    eps = -1e-3
    st.x[asm.dof.u0 + 1 : asm.dof.u0 + asm.dof.n_u : 2] = (
        eps * single_fracture_mesh.nodes[:, 1]
    )
    # Mortar displacements matching the trace so the walls stay consistent.
    for i, itf in enumerate(single_fracture_mesh.interfaces):
        f = single_fracture_mesh.fractures[itf.lower_id - 1]
        cells = np.arange(f.num_cells)
        st.x[asm.dof.uj(i, cells, 1)] = eps * f.cell_centers[:, 1]
    syy = (2 * prm.shear_modulus + prm.lame_lambda) * eps
    # lam stored in the local (n, tau) basis; n = +y here.
    for f in single_fracture_mesh.fractures:
        st.x[asm.dof.lam(f.id, np.arange(f.num_cells), 0)] = syy
    res = assemble_force_balance(st, prob)
    assert np.max(np.abs(res)) < 1e-12 * abs(syy)


def test_permuting_cells_leaves_residual_invariant(tmp_path):
    mesh = build_structured_mesh((0, 0, 1, 1), None, h=0.25)
    prm = plain_params()
    rng = np.random.default_rng(5)
    data = dict(mesh.raw)
    perm = rng.permutation(len(data["cells_2d"]))
    data["cells_2d"] = [data["cells_2d"][i] for i in perm]
    import json

    p = tmp_path / "perm.json"
    p.write_text(json.dumps(data))
    mesh2 = load_mesh(p)
    # Map cells of mesh2 to cells of mesh by centroid.
    c1 = {tuple(np.round(c, 12)): i for i, c in enumerate(mesh.matrix.cell_centers)}
    to1 = np.asarray([c1[tuple(np.round(c, 12))] for c in mesh2.matrix.cell_centers])

    field = lambda x, y: np.sin(3 * x) + y  # noqa: E731
    states = []
    for msh in (mesh, mesh2):
        prob = Problem(msh, prm, noflow_bc(), clamped_mech())
        st, asm = fresh_state(prob)
        cells = np.arange(msh.matrix.num_cells)
        st.x[asm.dof.p(0, cells)] = [field(*c) for c in msh.matrix.cell_centers]
        st.x[asm.dof.u0 : asm.dof.u0 + asm.dof.n_u] = rng.normal(size=asm.dof.n_u) * 0
        st.prev = st.x.copy()
        states.append(assemble_flow(st, prob))
    r1, r2 = states
    assert np.allclose(r2, r1[to1], atol=1e-14)


def test_well_row_replaces_mass_balance(single_fracture_mesh):
    prm = MaterialParams().scaled()
    f_id = single_fracture_mesh.fractures[0].id
    prob = Problem(
        single_fracture_mesh,
        prm,
        pressure_bc(0.02),
        clamped_mech(),
        background_pressure=0.02,
        well=Well(f_id, 2, 0.03),
    )
    asm = Assembler(prob)
    st = State.zeros(asm.dof)
    st.x[asm.all_p_dofs] = 0.02
    st.prev = st.x.copy()
    res, A = asm.system(st, ExactKernel(1.0, 0.5))
    wd = asm.well_dof
    assert res[wd] == pytest.approx(0.02 - 0.03)
    row = A.getrow(wd)
    assert row.nnz == 1 and row[0, wd] == 1.0


def _smooth_random_state(asm, rng):
    st = State.zeros(asm.dof, dt=8640.0)
    st.x[asm.all_p_dofs] = 0.02 + 3e-3 * rng.normal(size=asm.dof.n_p)
    st.x[asm.dof.u0 : asm.dof.u0 + asm.dof.n_u] = 1e-4 * rng.normal(size=asm.dof.n_u)
    st.x[asm.dof.uj0 : asm.dof.uj0 + asm.dof.n_uj] = 1e-4 * rng.normal(size=asm.dof.n_uj)
    st.x[asm.dof.w0 : asm.dof.w0 + asm.dof.n_w] = 1e-5 * rng.normal(size=asm.dof.n_w)
    lam = st.x[asm.dof.lam0 :].reshape(-1, 2)
    lam[:, 0] = -0.04 + 0.005 * rng.normal(size=lam.shape[0])
    lam[:, 1] = 0.008 * rng.normal(size=lam.shape[0])
    st.prev = np.zeros_like(st.x)
    st.prev[asm.all_p_dofs] = 0.02
    # Interface fluxes near their Darcy values: the flux rows then carry
    # moderate magnitudes, which keeps the finite-difference oracle accurate.
    res = np.zeros(asm.dof.total)
    asm._interface_darcy(st, asm.fracture_geometry(st), res, None)
    vslice = slice(asm.dof.vj0, asm.dof.vj0 + asm.dof.n_vj)
    st.x[vslice] = -res[vslice] + 1e-4 * rng.normal(size=asm.dof.n_vj)
    return st


@pytest.mark.parametrize("gravity", [(0.0, 0.0), (0.3, -9.81)])
def test_jacobian_matches_finite_differences(crossing_mesh, gravity):
    prm = MaterialParams(dilation_angle_deg=5.0, gravity=gravity)
    from porofrac.assembly import make_problem

    prob = make_problem(
        crossing_mesh,
        prm,
        {s: FlowBC("pressure", 2.0e7) for s in SIDES},
        {
            "bottom": MechBC("dirichlet"),
            "left": MechBC("traction", (30e6, 0.0)),
            "right": MechBC("traction", (-30e6, 0.0)),
            "top": MechBC("traction", (0.0, -50e6)),
        },
        background_pressure=2.0e7,
        well=Well(crossing_mesh.fractures[0].id, 0, 2.1e7),
    )
    asm = Assembler(prob)
    rng = np.random.default_rng(42)
    st = _smooth_random_state(asm, rng)
    kernel = ExactKernel(c=1.0, friction=prm.friction_coefficient)
    res, A = asm.system(st, kernel)
    # Row equilibration: scaling an equation by a constant does not change the
    # system, but keeps the finite-difference oracle's cancellation error for
    # rows with large residual magnitudes below the comparison tolerance.
    srow = np.maximum(1.0, np.abs(res))
    A = A.toarray() / srow[:, None]
    eps = 1e-7
    worst = 0.0
    for j in range(asm.dof.total):
        xp = st.copy()
        xp.x[j] += eps
        xm = st.copy()
        xm.x[j] -= eps
        rp, _ = asm.system(xp, kernel, with_jacobian=False)
        rm, _ = asm.system(xm, kernel, with_jacobian=False)
        step = xp.x[j] - xm.x[j]  # realized step after rounding
        fd = (rp - rm) / step / srow
        scale = max(np.linalg.norm(A[:, j]), 1e-8)
        worst = max(worst, np.linalg.norm(A[:, j] - fd) / scale)
    assert worst < 1e-6


def test_regularized_kernel_jacobian_matches_fd(single_fracture_mesh):
    from porofrac.assembly import RegularizedKernel, make_problem

    prm = MaterialParams(dilation_angle_deg=3.0)
    prob = make_problem(
        single_fracture_mesh,
        prm,
        {s: FlowBC("pressure", 2.0e7) for s in SIDES},
        clamped_mech(),
        background_pressure=2.0e7,
    )
    asm = Assembler(prob)
    rng = np.random.default_rng(11)
    st = _smooth_random_state(asm, rng)
    n_fc = asm.n_frac_cells
    anchor_n = -0.05 * np.ones(n_fc)
    anchor_tau = 0.01 * rng.normal(size=(n_fc, 1))
    kernel = RegularizedKernel(c=0.7, friction=prm.friction_coefficient,
                               anchor_n=anchor_n, anchor_tau=anchor_tau)
    res, A = asm.system(st, kernel)
    srow = np.maximum(1.0, np.abs(res))
    A = A.toarray() / srow[:, None]
    eps = 1e-7
    for j in range(asm.dof.lam0 - 40, asm.dof.total):  # contact-coupled tail
        xp = st.copy()
        xp.x[j] += eps
        xm = st.copy()
        xm.x[j] -= eps
        rp, _ = asm.system(xp, kernel, with_jacobian=False)
        rm, _ = asm.system(xm, kernel, with_jacobian=False)
        step = xp.x[j] - xm.x[j]
        fd = (rp - rm) / step / srow
        scale = max(np.linalg.norm(A[:, j]), 1e-8)
        assert np.linalg.norm(A[:, j] - fd) / scale < 1e-6


def test_frozen_flow_replaces_rows(single_fracture_mesh):
    prm = MaterialParams().scaled()
    prob = Problem(
        single_fracture_mesh, prm, pressure_bc(0.02), clamped_mech(),
        background_pressure=0.02,
    )
    asm = Assembler(prob)
    st = State.zeros(asm.dof)
    res, A = asm.system(st, ExactKernel(1.0, 0.5), frozen_flow=True)
    assert np.allclose(res[asm.all_p_dofs], -0.02)
    assert np.allclose(res[asm.all_vj_dofs], 0.0)
    sub = A[asm.all_p_dofs][:, asm.all_p_dofs].toarray()
    assert np.allclose(sub, np.eye(len(asm.all_p_dofs)))


def test_flow_neumann_influx_enters_mass_balance():
    # Prescribed inward mass flux on the left, fixed pressure elsewhere: at a
    # uniform pressure state the residual of each left-boundary cell is
    # exactly the integrated boundary flux.
    mesh = build_structured_mesh((0, 0, 1, 1), None, h=0.5)
    q_in = -2.5  # outward-positive convention, so negative means injection
    prob = Problem(
        mesh,
        plain_params(),
        {
            "left": FlowBC("flux", q_in),
            "right": FlowBC("pressure", 1.0),
            "top": FlowBC("flux", 0.0),
            "bottom": FlowBC("flux", 0.0),
        },
        clamped_mech(),
    )
    st, asm = fresh_state(prob)
    st.x[asm.all_p_dofs] = 1.0
    st.prev = st.x.copy()
    res = assemble_flow(st, prob)
    m = mesh.matrix
    expected = np.zeros(m.num_cells)
    for f in m.boundary_faces:
        if m.boundary_tag[int(f)] == "left":
            expected[m.face_owner[f]] += q_in * m.face_len[f]
    assert np.allclose(res, expected, atol=1e-14)


def test_interface_darcy_flux_examples(single_fracture_mesh):
    from porofrac.assembly import assemble_interface_flux

    prm = plain_params(viscosity=0.5, residual_aperture=2.0e-3)
    prob = Problem(single_fracture_mesh, prm, noflow_bc(), clamped_mech())
    asm = Assembler(prob)
    frac = single_fracture_mesh.fractures[0]
    cells = np.arange(frac.num_cells)

    # Equal pressures and no gravity: the Darcy rows reduce to v_j itself.
    st = State.zeros(asm.dof)
    st.x[asm.all_p_dofs] = 3.0
    st.prev = st.x.copy()
    assert np.allclose(assemble_interface_flux(st, prob), 0.0)

    # Pressure difference delta with aperture a: residual zero at the hand
    # value v = -(a^2/(12 eta)) (2 delta / a).
    delta = 0.25
    st.x[asm.dof.p(frac.id, cells)] = 3.0 + delta
    a = prm.residual_aperture
    v_hand = -(a**2 / (12.0 * prm.viscosity)) * (2.0 * delta / a)
    res = assemble_interface_flux(st, prob)
    n_mf = 2 * frac.num_cells  # mortar cells on both sides
    assert np.allclose(res[:n_mf], -v_hand, rtol=1e-14)  # rows are v - v_hand at v=0
    for i in range(2):
        st.x[asm.dof.vj(i, cells)] = v_hand
    assert np.allclose(assemble_interface_flux(st, prob)[:n_mf], 0.0, atol=1e-18)

    # Reversing the pressure difference flips the flux sign and the upstream
    # side of the mass-exchange terms.
    st2 = State.zeros(asm.dof)
    st2.x[asm.all_p_dofs] = 3.0
    st2.x[asm.dof.p(frac.id, cells)] = 3.0 - delta
    st2.prev = st2.x.copy()
    res2 = assemble_interface_flux(st2, prob)
    assert np.allclose(res2[:n_mf], v_hand, rtol=1e-14)
    dense = plain_params(fluid_compressibility=0.3, viscosity=0.5, residual_aperture=2e-3)
    prob_d = Problem(single_fracture_mesh, dense, noflow_bc(), clamped_mech())
    asm_d = Assembler(prob_d)
    from porofrac import constitutive as cst

    for sign in (+1.0, -1.0):
        st3 = State.zeros(asm_d.dof)
        st3.x[asm_d.all_p_dofs] = 3.0
        st3.x[asm_d.dof.p(frac.id, cells)] = 3.0 + sign * delta
        st3.x[asm_d.dof.vj(0, cells)] = -sign * 1.0  # matrix->fracture if sign<0
        st3.prev = st3.x.copy()
        res3 = np.zeros(asm_d.dof.total)
        geo = asm_d.fracture_geometry(st3)
        asm_d._interface_darcy(st3, geo, res3, None)
        # Mass exchange uses the upstream density: higher side for v > 0.
        p_up = 3.0 if -sign > 0 else 3.0 + sign * delta
        rho_up = cst.fluid_density(p_up, dense)
        phd = asm_d.dof.p(0, single_fracture_mesh.interfaces[0].wall_tris)
        expected = geo["aperture"][0] * rho_up * (-sign) * frac.cell_measures[0]
        assert res3[phd[0]] == pytest.approx(expected, rel=1e-14)


def test_force_balance_pure_pressure_normal_component(single_fracture_mesh):
    # Fluid pressure in the fracture with zero traction and a matched
    # isotropic elastic stress: the normal force-balance component vanishes
    # exactly (single-face hand computation).
    prm = plain_params()
    prob = Problem(single_fracture_mesh, prm, noflow_bc(), clamped_mech())
    asm = Assembler(prob)
    st = State.zeros(asm.dof)
    p0 = 1.7
    frac = single_fracture_mesh.fractures[0]
    cells = np.arange(frac.num_cells)
    st.x[asm.dof.p(frac.id, cells)] = p0
    # Hand balance on one face: lam - p_l n - sigma.n with sigma = -alpha p_e I
    # in the matrix at pressure p_e = p0 and u = 0 requires
    # lam_n = p0 - alpha p0 = (1 - alpha) p0.
    st.x[asm.dof.p(0, np.arange(single_fracture_mesh.matrix.num_cells))] = p0
    st.x[asm.dof.lam(frac.id, cells, 0)] = (1.0 - prm.biot_coefficient) * p0
    res = assemble_force_balance(st, prob)
    assert np.max(np.abs(res)) < 1e-14


def test_normal_convention_flip_negates_normal_traction():
    # The fracture normal is fixed at mesh build (chain direction is
    # normalized, so input orientation cannot change it).  Flipping the
    # stored convention - negated normals with swapped j/k sides - must
    # negate the converged normal traction component while leaving the
    # physical traction vector invariant.
    import copy

    from porofrac.assembly import make_problem
    from porofrac.solvers import SolverConfig, initialize

    def build(flip):
        mesh = build_structured_mesh(
            (0, 0, 2000.0, 1000.0),
            FractureNetwork([((600.0, 500.0), (1400.0, 500.0))]),
            h=100.0,
        )
        if flip:
            f = mesh.fractures[0]
            f.normals = -f.normals
            f.wall_face_j, f.wall_face_k = f.wall_face_k, f.wall_face_j
            f.wall_tri_j, f.wall_tri_k = f.wall_tri_k, f.wall_tri_j
            f.wall_nodes_j, f.wall_nodes_k = f.wall_nodes_k, f.wall_nodes_j
            for itf in mesh.interfaces:
                itf.side = "k" if itf.side == "j" else "j"
        return mesh

    results = {}
    sxy = -12e6
    for flip in (False, True):
        mesh = build(flip)
        prob = make_problem(
            mesh, MaterialParams(dilation_angle_deg=5.0),
            {s: FlowBC("pressure", 2.0e7) for s in ("left", "right", "top", "bottom")},
            {
                "bottom": MechBC("dirichlet"),
                "left": MechBC("traction", (30e6, -sxy)),
                "right": MechBC("traction", (-30e6, sxy)),
                "top": MechBC("traction", (sxy, -50e6)),
            },
            background_pressure=2.0e7,
        )
        state, rep = initialize(prob, SolverConfig(kind="gnm", c=0.1))
        assert rep.status == "Converged"
        asm = prob._assembler
        n0 = mesh.fractures[0].normals[0].copy()
        results[flip] = (n0, state.x[asm.fr_lam0].copy(), state.x[asm.fr_lam1].copy())
    n_plain, lam_n_plain, lam_t_plain = results[False]
    n_flip, lam_n_flip, lam_t_flip = results[True]
    assert np.allclose(n_flip, -n_plain)
    # The tangent is derived from the normal (rotated 90 degrees), so the
    # whole local basis flips together: both local traction components are
    # convention-invariant (compression stays negative), while the
    # reconstructed global traction vector negates with the basis.
    assert np.allclose(lam_n_flip, lam_n_plain, atol=1e-9)
    assert np.allclose(lam_t_flip, lam_t_plain, atol=1e-9)
    assert np.all(lam_n_plain < 0) and np.all(lam_n_flip < 0)
    t_plain = np.array([-n_plain[1], n_plain[0]])
    t_flip = np.array([-n_flip[1], n_flip[0]])
    vec_plain = lam_n_plain[0] * n_plain + lam_t_plain[0] * t_plain
    vec_flip = lam_n_flip[0] * n_flip + lam_t_flip[0] * t_flip
    assert np.allclose(vec_flip, -vec_plain, atol=1e-9)
