"""Cell-wise frictional contact kernels.

Implements the two equivalent formulations of the contact conditions used by
the nonlinear solvers:

* exact complementarity functions whose zero set coincides with the
  nonpenetration and Coulomb friction conditions for every augmentation
  parameter c > 0;
* their regularized counterparts, in which the traction inside the
  max-function arguments is anchored at a known feasible value, plus the
  corresponding return map (case form and max form).

Everything is vectorized over fracture cells and written generically in the
number of tangential components, so a 2-component tangent reuses the kernels
unchanged.  Derivative selections at the nonsmooth points follow the
convention that ties pick the second max argument.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

__all__ = [
    "ContactInputs",
    "ContactState",
    "complementarity_normal",
    "complementarity_tangential",
    "normal_jacobian",
    "tangential_jacobian",
    "regularized_complementarity",
    "regularized_normal_jacobian",
    "regularized_tangential_jacobian",
    "return_map",
    "return_map_maxform",
    "classify",
    "classify_regularized",
    "derivative_selection",
    "friction_bound",
]


class ContactState(IntEnum):
    OPEN = 0
    STICK = 1
    SLIP = 2


@dataclass
class ContactInputs:
    """Per-fracture-cell contact quantities (scaled units).

    ``lam_n``/``lam_tau`` are the normal and tangential traction components,
    ``jump_*`` the displacement jump split the same way, ``gap`` the shear
    dilation gap g and ``dgap_djump_tau`` its derivative (the zero subgradient
    is used at vanishing tangential jump).  ``c`` is the augmentation
    parameter and ``friction`` the Coulomb coefficient.
    """

    lam_n: np.ndarray          # (M,)
    lam_tau: np.ndarray        # (M, t)
    jump_n: np.ndarray         # (M,)
    jump_tau: np.ndarray       # (M, t)
    jump_tau_prev: np.ndarray  # (M, t)
    gap: np.ndarray            # (M,)
    c: float
    friction: float = 0.5
    dgap_djump_tau: np.ndarray | None = None  # (M, t)

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("augmentation parameter c must be positive")
        self.lam_n = np.atleast_1d(np.asarray(self.lam_n, dtype=float))
        self.lam_tau = np.atleast_2d(np.asarray(self.lam_tau, dtype=float))
        self.jump_n = np.atleast_1d(np.asarray(self.jump_n, dtype=float))
        self.jump_tau = np.atleast_2d(np.asarray(self.jump_tau, dtype=float))
        self.jump_tau_prev = np.atleast_2d(np.asarray(self.jump_tau_prev, dtype=float))
        self.gap = np.atleast_1d(np.asarray(self.gap, dtype=float))
        if self.dgap_djump_tau is not None:
            self.dgap_djump_tau = np.atleast_2d(np.asarray(self.dgap_djump_tau, dtype=float))

    @property
    def slip_increment(self) -> np.ndarray:
        return self.jump_tau - self.jump_tau_prev


def friction_bound(lam_n, friction: float):
    """Coulomb limit b = -F lam_n on the tangential traction magnitude."""
    return -friction * np.asarray(lam_n, dtype=float)


def derivative_selection(first, second) -> np.ndarray:
    """Branch choice for d/dx max(first, second): True selects the second.

    Strictly larger arguments win; ties go to the second argument for all
    three solvers.
    """
    return np.asarray(second, dtype=float) >= np.asarray(first, dtype=float)


def _norm_rows(v: np.ndarray) -> np.ndarray:
    return np.linalg.norm(v, axis=-1)


def _unit_rows(v: np.ndarray, norms: np.ndarray) -> np.ndarray:
    """Row-wise unit vectors; the zero subgradient stands in at zero norm."""
    out = np.zeros_like(v)
    nz = norms > 0
    out[nz] = v[nz] / norms[nz, None]
    return out


# ---------------------------------------------------------------------------
# Exact complementarity functions
# ---------------------------------------------------------------------------

def complementarity_normal(inp: ContactInputs) -> np.ndarray:
    """C_n = lam_n + max(0, -lam_n - c (jump_n - g))."""
    arg = -inp.lam_n - inp.c * (inp.jump_n - inp.gap)
    return inp.lam_n + np.maximum(0.0, arg)


def complementarity_tangential(inp: ContactInputs) -> np.ndarray:
    """C_tau = chi lam_tau + (1-chi)[b (lam_tau + c du) - max(b, ||.||) lam_tau].

    chi = 1 where b <= 0 enforces zero tangential traction without contact.
    """
    b = friction_bound(inp.lam_n, inp.friction)
    chi = (b <= 0.0).astype(float)
    s = inp.lam_tau + inp.c * inp.slip_increment
    m = np.maximum(b, _norm_rows(s))
    inner = b[:, None] * s - m[:, None] * inp.lam_tau
    return chi[:, None] * inp.lam_tau + (1.0 - chi)[:, None] * inner


def normal_jacobian(inp: ContactInputs) -> dict[str, np.ndarray]:
    """One generalized derivative of C_n wrt (lam_n, jump_n, jump_tau)."""
    arg = -inp.lam_n - inp.c * (inp.jump_n - inp.gap)
    active = derivative_selection(0.0, arg)  # second argument of the max
    act = active.astype(float)
    d_lam_n = 1.0 - act
    d_jump_n = -inp.c * act
    if inp.dgap_djump_tau is None:
        d_jump_tau = np.zeros_like(inp.jump_tau)
    else:
        d_jump_tau = inp.c * act[:, None] * inp.dgap_djump_tau
    return {"lam_n": d_lam_n, "jump_n": d_jump_n, "jump_tau": d_jump_tau}


def tangential_jacobian(inp: ContactInputs) -> dict[str, np.ndarray]:
    """One generalized derivative of C_tau wrt (lam_tau, lam_n, slip incr)."""
    m_cells, t = inp.lam_tau.shape
    b = friction_bound(inp.lam_n, inp.friction)
    chi = (b <= 0.0).astype(float)
    s = inp.lam_tau + inp.c * inp.slip_increment
    s_norm = _norm_rows(s)
    second = derivative_selection(b, s_norm)
    m = np.maximum(b, s_norm)
    s_hat = _unit_rows(s, s_norm)
    eye = np.eye(t)

    d_lam_tau = (
        chi[:, None, None] * eye
        + (1.0 - chi)[:, None, None]
        * (
            (b - m)[:, None, None] * eye
            - np.where(second, 1.0, 0.0)[:, None, None]
            * np.einsum("mi,mj->mij", inp.lam_tau, s_hat)
        )
    )
    db = -inp.friction
    d_lam_n = (1.0 - chi)[:, None] * (
        db * s + np.where(second, 0.0, -db)[:, None] * inp.lam_tau
    )
    d_udot = (1.0 - chi)[:, None, None] * (
        (b * inp.c)[:, None, None] * eye
        - np.where(second, inp.c, 0.0)[:, None, None]
        * np.einsum("mi,mj->mij", inp.lam_tau, s_hat)
    )
    return {"lam_tau": d_lam_tau, "lam_n": d_lam_n, "udot_tau": d_udot}


# ---------------------------------------------------------------------------
# Regularized complementarity functions (anchored traction)
# ---------------------------------------------------------------------------

def _check_anchor(anchor_n, anchor_tau, friction) -> None:
    bad = np.asarray(anchor_n) > 1e-12
    cone = _norm_rows(np.atleast_2d(anchor_tau)) > friction_bound(anchor_n, friction) + 1e-12
    if np.any(bad) or np.any(cone):
        raise ValueError("infeasible anchor traction (apply the return map first)")


def regularized_complementarity(
    inp: ContactInputs, anchor_n: np.ndarray, anchor_tau: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Regularized C_n, C_tau with the max arguments anchored at a feasible
    traction; with anchor equal to the current traction they coincide with
    the exact functions."""
    anchor_n = np.atleast_1d(np.asarray(anchor_n, dtype=float))
    anchor_tau = np.atleast_2d(np.asarray(anchor_tau, dtype=float))
    _check_anchor(anchor_n, anchor_tau, inp.friction)

    arg = -anchor_n - inp.c * (inp.jump_n - inp.gap)
    c_n = inp.lam_n + np.maximum(0.0, arg)

    b = friction_bound(inp.lam_n, inp.friction)
    chi = (b == 0.0).astype(float)
    s = anchor_tau + inp.c * inp.slip_increment
    m = np.maximum(b, _norm_rows(s))
    inner = b[:, None] * s - m[:, None] * inp.lam_tau
    c_tau = chi[:, None] * inp.lam_tau + (1.0 - chi)[:, None] * inner
    return c_n, c_tau


def regularized_normal_jacobian(
    inp: ContactInputs, anchor_n: np.ndarray
) -> dict[str, np.ndarray]:
    anchor_n = np.atleast_1d(np.asarray(anchor_n, dtype=float))
    arg = -anchor_n - inp.c * (inp.jump_n - inp.gap)
    act = derivative_selection(0.0, arg).astype(float)
    if inp.dgap_djump_tau is None:
        d_jump_tau = np.zeros_like(inp.jump_tau)
    else:
        d_jump_tau = inp.c * act[:, None] * inp.dgap_djump_tau
    return {
        "lam_n": np.ones_like(inp.lam_n),
        "jump_n": -inp.c * act,
        "jump_tau": d_jump_tau,
    }


def regularized_tangential_jacobian(
    inp: ContactInputs, anchor_tau: np.ndarray
) -> dict[str, np.ndarray]:
    m_cells, t = inp.lam_tau.shape
    anchor_tau = np.atleast_2d(np.asarray(anchor_tau, dtype=float))
    b = friction_bound(inp.lam_n, inp.friction)
    chi = (b == 0.0).astype(float)
    s = anchor_tau + inp.c * inp.slip_increment
    s_norm = _norm_rows(s)
    second = derivative_selection(b, s_norm)
    m = np.maximum(b, s_norm)
    s_hat = _unit_rows(s, s_norm)
    eye = np.eye(t)

    d_lam_tau = (
        chi[:, None, None] * eye
        - (1.0 - chi)[:, None, None] * m[:, None, None] * eye
    )
    db = -inp.friction
    d_lam_n = (1.0 - chi)[:, None] * (
        db * s + np.where(second, 0.0, -db)[:, None] * inp.lam_tau
    )
    d_udot = (1.0 - chi)[:, None, None] * (
        (b * inp.c)[:, None, None] * eye
        - np.where(second, inp.c, 0.0)[:, None, None]
        * np.einsum("mi,mj->mij", inp.lam_tau, s_hat)
    )
    return {"lam_tau": d_lam_tau, "lam_n": d_lam_n, "udot_tau": d_udot}


# ---------------------------------------------------------------------------
# Return maps
# ---------------------------------------------------------------------------

def return_map(lam_n_trial, lam_tau_trial, friction: float):
    """Project a trial traction onto the feasible set (case form).

    Output satisfies lam_n <= 0 and ||lam_tau|| <= -F lam_n; a vanishing
    friction bound maps any trial tangential traction to zero without
    dividing by zero.
    """
    lam_n_trial = np.atleast_1d(np.asarray(lam_n_trial, dtype=float))
    lam_tau_trial = np.atleast_2d(np.asarray(lam_tau_trial, dtype=float))
    lam_n = np.minimum(lam_n_trial, 0.0)
    b = friction_bound(lam_n, friction)
    norm = _norm_rows(lam_tau_trial)
    # The few-ulp slack keeps the projection exactly idempotent: a projected
    # traction whose recomputed norm lands a rounding error outside the disk
    # must pass through unchanged.
    inside = norm <= b * (1.0 + 4.0e-15)
    lam_tau = np.where(
        inside[:, None],
        lam_tau_trial,
        b[:, None] * _unit_rows(lam_tau_trial, norm),
    )
    return lam_n, lam_tau


def return_map_maxform(lam_n_trial, lam_tau_trial, friction: float):
    """Max-function form of the return map; identical to the case form."""
    lam_n_trial = np.atleast_1d(np.asarray(lam_n_trial, dtype=float))
    lam_tau_trial = np.atleast_2d(np.asarray(lam_tau_trial, dtype=float))
    lam_n = -np.maximum(0.0, -lam_n_trial)
    b = friction_bound(lam_n, friction)
    chi = (b == 0.0).astype(float)
    denom = (chi - 1.0) * np.maximum(b, _norm_rows(lam_tau_trial)) + chi
    lam_tau = ((chi - 1.0) * b)[:, None] * lam_tau_trial / denom[:, None]
    return lam_n, lam_tau


# ---------------------------------------------------------------------------
# Contact-state classification
# ---------------------------------------------------------------------------

def _classify_from_args(arg_n, b, s_norm):
    """Shared set logic: open by the normal max argument, then stick/slip."""
    open_ = arg_n <= 0.0
    stick = ~open_ & (b > 0.0) & (s_norm < b)
    slip = ~open_ & (b > 0.0) & (s_norm >= b)
    anomalous = ~open_ & (b <= 0.0)  # unreachable set; reported as open
    states = np.full(arg_n.shape, ContactState.OPEN, dtype=np.int64)
    states[stick] = ContactState.STICK
    states[slip] = ContactState.SLIP
    return states, anomalous


def classify(inp: ContactInputs) -> tuple[np.ndarray, np.ndarray]:
    """Generalized contact states from the max-function arguments.

    Returns the per-cell states and a mask of anomalous cells (not open by
    the normal argument yet without positive friction bound), which are
    counted as open.
    """
    arg_n = -inp.lam_n - inp.c * (inp.jump_n - inp.gap)
    b = friction_bound(inp.lam_n, inp.friction)
    s_norm = _norm_rows(inp.lam_tau + inp.c * inp.slip_increment)
    return _classify_from_args(arg_n, b, s_norm)


def classify_regularized(
    inp: ContactInputs, anchor_n: np.ndarray, anchor_tau: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Regularized contact states: anchored tractions inside the max
    arguments, friction bound from the current traction."""
    anchor_n = np.atleast_1d(np.asarray(anchor_n, dtype=float))
    anchor_tau = np.atleast_2d(np.asarray(anchor_tau, dtype=float))
    arg_n = -anchor_n - inp.c * (inp.jump_n - inp.gap)
    b = friction_bound(inp.lam_n, inp.friction)
    s_norm = _norm_rows(anchor_tau + inp.c * inp.slip_increment)
    return _classify_from_args(arg_n, b, s_norm)


def census(states: np.ndarray) -> tuple[int, int, int]:
    """Counts of (open, stick, slip) cells."""
    return (
        int(np.sum(states == ContactState.OPEN)),
        int(np.sum(states == ContactState.STICK)),
        int(np.sum(states == ContactState.SLIP)),
    )
