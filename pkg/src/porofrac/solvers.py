"""Nonlinear solution drivers.

Three solvers share one Newton machinery:

* ``gnm_solve`` iterates generalized Newton on the exact complementarity
  system;
* ``irm_solve`` runs the implicit return map: an outer loop that anchors the
  tractions and solves the resulting regularized system with the same Newton
  machinery, checking outer convergence on the exact system;
* ``gnmrm_solve`` performs generalized Newton steps on the exact system and
  projects the trial tractions onto the friction cone after every
  non-converged iteration.

Convergence requires both the residual and the increment norm, scaled by
cell volumes, to drop below the tolerance (absolute, in the mass-rescaled
unit system).  A run is declared diverged the first time a residual norm
exceeds the divergence threshold; iteration caps produce the NC label and
the outer-loop cap of the implicit return map the NCO label.  No line
search or damping is applied anywhere.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse.linalg as spla

from . import contact as ct
from .assembly import Assembler, ExactKernel, Problem, RegularizedKernel, State
from .contact import return_map

__all__ = [
    "SolverConfig",
    "SolveReport",
    "LinearSolveError",
    "InitializationError",
    "scaled_norm",
    "linear_solve",
    "gnm_solve",
    "irm_solve",
    "gnmrm_solve",
    "solve_with",
    "initialize",
    "time_loop",
    "SOLVER_KINDS",
]

SOLVER_KINDS = ("gnm", "irm", "gnm_rm")

CONVERGED = "Converged"
NC = "NC"
DIV = "Div"
NCO = "NCO"


class LinearSolveError(RuntimeError):
    pass


class InitializationError(RuntimeError):
    def __init__(self, message: str, report: "SolveReport"):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class SolverConfig:
    kind: str = "gnm"
    c: float = 1.0            # augmentation parameter, GPa/m in scaled units
    tol: float = 1.0e-8
    max_inner: int = 100
    div_threshold: float = 1.0e5
    max_outer: int = 150      # implicit return map only
    dt: float = 8640.0        # seconds (0.1 days)
    num_steps: int = 1
    # Globalization hook; ships disabled (plain Newton-type loops) so solver
    # comparisons stay unconfounded.  Values below one damp the update.
    relaxation: float = 1.0

    def __post_init__(self):
        if self.kind not in SOLVER_KINDS:
            raise ValueError(f"unknown solver kind '{self.kind}'")
        if self.c <= 0:
            raise ValueError("augmentation parameter c must be positive")
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_inner < 1 or self.max_outer < 1:
            raise ValueError("iteration caps must be at least one")
        if not 0.0 < self.relaxation <= 1.0:
            raise ValueError("relaxation must lie in (0, 1]")


@dataclass
class SolveReport:
    status: str
    total_linear_solves: int = 0
    outer_iterations: int = 0
    initial_residual: float = np.inf
    residual_history: list[float] = field(default_factory=list)
    increment_history: list[float] = field(default_factory=list)
    state_census: list[tuple[int, int, int]] = field(default_factory=list)
    initial_census: tuple[int, int, int] = (0, 0, 0)
    aperture_clamps_final: int = 0
    wall_time: float = 0.0
    message: str = ""

    def __post_init__(self):
        if self.status == CONVERGED:
            ok = (not self.residual_history or self.residual_history[-1] < np.inf)
            assert ok


def scaled_norm(values: np.ndarray, weights: np.ndarray) -> float:
    """Euclidean norm scaled by cell volumes: sqrt(sum_i w_i v_i^2).

    Overflow to infinity is intentional for diverging iterates; the callers
    treat non-finite norms as divergence.
    """
    v = np.asarray(values, dtype=float)
    with np.errstate(over="ignore"):
        return float(np.sqrt(np.sum(weights * v * v)))


def linear_solve(matrix, rhs: np.ndarray) -> np.ndarray:
    """Direct sparse factorization solve with iterative refinement.

    The system is row-equilibrated first (the raw rows span many decades in
    this formulation), and the solve-quality guard - relative residual below
    1e-10, measured on the equilibrated system - raises on failure.
    """
    import scipy.sparse as sps

    a_csr = matrix.tocsr()
    row_max = np.abs(a_csr).max(axis=1).toarray().ravel()
    if np.any(row_max == 0.0):
        raise LinearSolveError("singular system: empty row")
    a_eq = sps.diags(1.0 / row_max) @ a_csr
    b_eq = rhs / row_max
    try:
        factor = spla.splu(a_eq.tocsc())
        dx = factor.solve(b_eq)
    except RuntimeError as err:
        raise LinearSolveError(f"sparse factorization failed: {err}") from err
    if not np.all(np.isfinite(dx)):
        raise LinearSolveError("linear solver returned non-finite values")
    b_norm = np.linalg.norm(b_eq)
    if b_norm == 0.0:
        return dx
    rel = np.inf
    for _ in range(3):
        resid = b_eq - a_eq @ dx
        rel = np.linalg.norm(resid) / b_norm
        if rel < 1e-10:
            return dx
        dx = dx + factor.solve(resid)
    rel = np.linalg.norm(b_eq - a_eq @ dx) / b_norm
    if not np.isfinite(rel) or rel > 1e-10:
        raise LinearSolveError(f"linear solve residual {rel:.2e} exceeds 1e-10")
    return dx


def _census(asm: Assembler, state: State, kernel) -> tuple[int, int, int]:
    if asm.n_frac_cells == 0:
        return (0, 0, 0)
    states, _ = kernel.classify(asm.contact_inputs(state, kernel))
    return ct.census(states)


PHYSICAL_TOL = 1.0e-8


def physical_contact_violation(asm: Assembler, state: State, friction: float) -> float:
    """Largest direct violation of the physical contact conditions.

    Evaluates nonpenetration and the Coulomb friction law (slip-increment
    form) without going through the complementarity functions.  Convergence
    is declared only when this stays below the physical tolerance: the
    complementarity residual bounds these violations only up to a factor
    1/c, so a small augmentation parameter could otherwise satisfy the norm
    checks while leaving a physically inconsistent state.
    """
    if asm.n_frac_cells == 0:
        return 0.0
    geo = asm.fracture_geometry(state)
    lam_n = state.x[asm.fr_lam0]
    lam_t = state.x[asm.fr_lam1]
    w = geo["jump_n"] - geo["gap"]
    prev_jump = state.prev[asm.fr_ujk] - state.prev[asm.fr_ujj]
    slip = geo["jump_t"] - np.sum(prev_jump * asm.fr_tangent, axis=1)
    bound = friction * np.maximum(0.0, -lam_n)
    viol = max(
        float(np.max(-w, initial=0.0)),
        float(np.max(lam_n, initial=0.0)),
        float(np.max(np.abs(lam_n * w), initial=0.0)),
        float(np.max(np.abs(lam_t) - bound, initial=0.0)),
    )
    sticking = np.abs(lam_t) < bound - PHYSICAL_TOL
    if np.any(sticking):
        viol = max(viol, float(np.max(np.abs(slip[sticking]))))
    on_cone = ~sticking & (bound > PHYSICAL_TOL)
    if np.any(on_cone):
        misaligned = -slip[on_cone] * np.sign(lam_t[on_cone])
        viol = max(viol, float(np.max(misaligned, initial=0.0)))
    return viol


def _final_clamps(asm: Assembler, state: State) -> int:
    if asm.n_frac_cells == 0:
        return 0
    return asm.fracture_geometry(state)["clamped"]


def _newton(
    state: State,
    asm: Assembler,
    kernel,
    cfg: SolverConfig,
    frozen_flow: bool = False,
    project: bool = False,
    physical_gate: bool = True,
    min_iterations: int = 0,
) -> SolveReport:
    """Shared Newton driver; with ``project`` the trial tractions are pulled
    back onto the friction cone after every non-converged iteration.

    ``physical_gate`` adds the direct contact-condition check to the
    convergence declaration; the implicit return map's inner loop turns it
    off, since the regularized solution only approaches the physical
    conditions through the outer iteration."""
    t0 = time.perf_counter()
    w = asm.norm_weights
    rep = SolveReport(status=NC)

    def finish(status: str, message: str = "") -> SolveReport:
        rep.status = status
        rep.message = message
        rep.total_linear_solves = len(rep.residual_history)
        rep.aperture_clamps_final = _final_clamps(asm, state)
        rep.wall_time = time.perf_counter() - t0
        return rep

    res, A = asm.system(state, kernel, frozen_flow=frozen_flow)
    rnorm = scaled_norm(res, w)
    rep.initial_residual = rnorm
    rep.initial_census = _census(asm, state, kernel)
    if not np.isfinite(rnorm) or rnorm > cfg.div_threshold:
        return finish(DIV, "initial residual beyond divergence threshold")
    if (
        min_iterations == 0
        and rnorm < cfg.tol
        and (
            not physical_gate
            or physical_contact_violation(asm, state, kernel.friction) < PHYSICAL_TOL
        )
    ):
        return finish(CONVERGED)

    for _ in range(cfg.max_inner):
        try:
            dx = linear_solve(A, -res)
        except LinearSolveError as err:
            return finish(DIV, f"linear solve failed: {err}")
        if cfg.relaxation != 1.0:
            dx = cfg.relaxation * dx
        state.x = state.x + dx
        inc = scaled_norm(dx, w)
        if project:
            res_t, _ = asm.system(state, kernel, frozen_flow=frozen_flow, with_jacobian=False)
        else:
            res_t, A = asm.system(state, kernel, frozen_flow=frozen_flow)
        rnorm = scaled_norm(res_t, w)
        rep.residual_history.append(rnorm)
        rep.increment_history.append(inc)
        rep.state_census.append(_census(asm, state, kernel))
        if not np.isfinite(rnorm) or rnorm > cfg.div_threshold:
            return finish(DIV)
        if (
            rnorm < cfg.tol
            and inc < cfg.tol
            and (
                not physical_gate
                or physical_contact_violation(asm, state, kernel.friction) < PHYSICAL_TOL
            )
        ):
            return finish(CONVERGED)
        if project:
            lam = state.x[asm.fr_lam0], state.x[asm.fr_lam1]
            lam_n, lam_tau = return_map(lam[0], lam[1][:, None], kernel.friction)
            state.x[asm.fr_lam0] = lam_n
            state.x[asm.fr_lam1] = lam_tau[:, 0]
            res, A = asm.system(state, kernel, frozen_flow=frozen_flow)
        else:
            res = res_t
    return finish(NC)


def _get_assembler(problem: Problem) -> Assembler:
    asm = getattr(problem, "_assembler", None)
    if asm is None:
        asm = Assembler(problem)
        problem._assembler = asm
    return asm


def gnm_solve(state: State, problem: Problem, cfg: SolverConfig,
              frozen_flow: bool = False) -> SolveReport:
    """Generalized Newton on the exact complementarity system."""
    asm = _get_assembler(problem)
    kernel = ExactKernel(cfg.c, problem.params.friction_coefficient)
    return _newton(state, asm, kernel, cfg, frozen_flow=frozen_flow)


def gnmrm_solve(state: State, problem: Problem, cfg: SolverConfig) -> SolveReport:
    """Generalized Newton with the return map as a per-iteration projection.

    Convergence is checked on the trial iterate before the projection; a
    converged run therefore ends on the unprojected trial state.
    """
    asm = _get_assembler(problem)
    kernel = ExactKernel(cfg.c, problem.params.friction_coefficient)
    return _newton(state, asm, kernel, cfg, project=True)


def irm_solve(state: State, problem: Problem, cfg: SolverConfig) -> SolveReport:
    """Implicit return map: nested loop over regularized systems.

    Each outer iteration anchors the contact traction (after projecting it
    onto the feasible set), solves the regularized system with the Newton
    machinery, and applies the convergence check to the exact system.  The
    inner loop inherits the iteration cap and divergence threshold; its
    failures terminate the whole run.
    """
    t0 = time.perf_counter()
    asm = _get_assembler(problem)
    friction = problem.params.friction_coefficient
    w = asm.norm_weights
    exact = ExactKernel(cfg.c, friction)
    rep = SolveReport(status=NCO)
    prev_x = state.x.copy()

    res0, _ = asm.system(state, exact, with_jacobian=False)
    rep.initial_residual = scaled_norm(res0, w)
    rep.initial_census = _census(asm, state, exact)

    def finish(status: str, message: str = "") -> SolveReport:
        rep.status = status
        rep.message = message
        rep.total_linear_solves = len(rep.residual_history)
        rep.aperture_clamps_final = _final_clamps(asm, state)
        rep.wall_time = time.perf_counter() - t0
        return rep

    force_step = 0
    for outer in range(1, cfg.max_outer + 1):
        rep.outer_iterations = outer
        anchor_n, anchor_tau = return_map(
            state.x[asm.fr_lam0], state.x[asm.fr_lam1][:, None], friction
        )
        kernel = RegularizedKernel(cfg.c, friction, anchor_n, anchor_tau)
        inner = _newton(
            state, asm, kernel, cfg, physical_gate=False, min_iterations=force_step
        )
        rep.residual_history.extend(inner.residual_history)
        rep.increment_history.extend(inner.increment_history)
        rep.state_census.extend(inner.state_census)
        if inner.status != CONVERGED:
            return finish(inner.status, f"inner loop: {inner.message}")
        res, _ = asm.system(state, exact, with_jacobian=False)
        rnorm = scaled_norm(res, w)
        outer_inc = scaled_norm(state.x - prev_x, w)
        prev_x = state.x.copy()
        if not np.isfinite(rnorm) or rnorm > cfg.div_threshold:
            return finish(DIV, "exact residual beyond divergence threshold")
        if (
            rnorm < cfg.tol
            and outer_inc < cfg.tol
            and physical_contact_violation(asm, state, friction) < PHYSICAL_TOL
        ):
            return finish(CONVERGED)
        # A zero-solve inner loop that did not close the outer checks means
        # the nested fixed point stalled one contraction short of the
        # physical conditions; force a single Newton step next time so the
        # anchor keeps moving.
        force_step = 1 if inner.total_linear_solves == 0 else 0
    return finish(NCO)


_SOLVERS = {"gnm": gnm_solve, "irm": irm_solve, "gnm_rm": gnmrm_solve}


def solve_with(kind: str, state: State, problem: Problem, cfg: SolverConfig) -> SolveReport:
    """Dispatch by solver kind; the state is updated in place, which makes
    warm-starting one solver from another's final iterate trivial."""
    return _SOLVERS[kind](state, problem, replace(cfg, kind=kind))


def initialize(
    problem: Problem, cfg: SolverConfig, c_init: float = 0.05
) -> tuple[State, SolveReport]:
    """Initial state from the purely mechanical subproblem.

    The pressure field is pinned at the scenario background, interface
    fluxes at zero, and the mechanics/contact blocks are solved to tolerance
    with the generalized Newton method.  The result doubles as the
    previous-step snapshot for the first time step, so slip increments in
    step one are measured relative to the initialized configuration.

    The initialized state is the same for every augmentation parameter, so
    this stage runs at its own fixed ``c_init`` (chosen near the rock
    stiffness scale, where plain Newton is dependable) rather than the
    sweep value under study.
    """
    asm = _get_assembler(problem)
    cfg = replace(cfg, c=c_init)
    state = State.zeros(asm.dof, dt=cfg.dt)
    state.x[asm.all_p_dofs] = asm.background_p
    # Compressive starting guess for the normal traction, scaled to the
    # applied boundary tractions when available.
    mags = [
        float(np.linalg.norm(bc.value))
        for bc in problem.mech_bc.values()
        if bc.kind == "traction"
    ]
    lam_guess = -max(max(mags), 1e-3) if mags else -1.0
    state.x[asm.fr_lam0] = lam_guess
    state.prev = state.x.copy()
    report = gnm_solve(state, problem, cfg, frozen_flow=True)
    if report.status != CONVERGED:
        raise InitializationError(
            f"mechanical initialization failed with status {report.status}", report
        )
    state.advance()
    return state, report


def time_loop(state: State, problem: Problem, cfg: SolverConfig) -> list[SolveReport]:
    """Advance ``num_steps`` implicit-Euler steps, aborting on the first
    step that fails to converge (the failed report is kept)."""
    reports: list[SolveReport] = []
    for _ in range(cfg.num_steps):
        state.dt = cfg.dt
        report = solve_with(cfg.kind, state, problem, cfg)
        reports.append(report)
        if report.status != CONVERGED:
            break
        state.advance()
    return reports
