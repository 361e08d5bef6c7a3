"""Pointwise constitutive laws: density, porosity, permeabilities, stress,
body force, aperture, gap and upstream weighting.

All laws are written unit-agnostically; :class:`MaterialParams` holds the
physical constants in SI and :meth:`MaterialParams.scaled` produces the
internally used parameter set with the unit of mass rescaled (pressures and
stresses then sit near unity, which markedly improves the conditioning of the
coupled systems).  File I/O always uses unscaled SI.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "MaterialParams",
    "fluid_density",
    "matrix_porosity",
    "permeability",
    "interface_permeability",
    "aperture",
    "gap",
    "poroelastic_stress",
    "body_force",
    "upstream_density",
]

APERTURE_FLOOR = 1.0e-12  # m; transient Newton iterates may dip below zero


@dataclass(frozen=True)
class MaterialParams:
    """Material constants (SI units unless noted).

    Defaults are the simulation values: Biot coefficient 0.8, friction 0.5,
    matrix permeability 1e-15 m^2, reference porosity 1e-2, shear modulus
    1.7e10 Pa, first Lame parameter 1.111e10 Pa, fluid compressibility
    0.4e-9 1/Pa, fluid/solid densities 1000/2700 kg/m^3, viscosity 1e-3 Pa s,
    residual aperture 5e-4 m, dilation angle 5 deg, reference pressure 20 MPa.
    """

    biot_coefficient: float = 0.8
    friction_coefficient: float = 0.5
    matrix_permeability: float = 1.0e-15
    reference_porosity: float = 1.0e-2
    shear_modulus: float = 1.7e10
    lame_lambda: float = 1.111e10
    fluid_compressibility: float = 0.4e-9
    reference_fluid_density: float = 1.0e3
    solid_density: float = 2.7e3
    viscosity: float = 1.0e-3
    residual_aperture: float = 5.0e-4
    dilation_angle_deg: float = 5.0
    reference_pressure: float = 2.0e7
    gravity: tuple[float, float] = (0.0, 0.0)
    mass_scale: float = 1.0e9

    def __post_init__(self):
        pos = (
            "friction_coefficient",
            "matrix_permeability",
            "shear_modulus",
            "lame_lambda",
            "fluid_compressibility",
            "reference_fluid_density",
            "solid_density",
            "viscosity",
            "residual_aperture",
            "reference_pressure",
            "mass_scale",
        )
        for name in pos:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if not 0.0 < self.biot_coefficient <= 1.0:
            raise ValueError("biot_coefficient must lie in (0, 1]")
        if not 0.0 < self.reference_porosity < 1.0:
            raise ValueError("reference_porosity must lie in (0, 1)")
        if self.dilation_angle_deg < 0.0:
            raise ValueError("dilation_angle_deg must be nonnegative")

    @property
    def tan_dilation(self) -> float:
        return float(np.tan(np.radians(self.dilation_angle_deg)))

    @property
    def g_vec(self) -> np.ndarray:
        return np.asarray(self.gravity, dtype=float)

    def scaled(self) -> "MaterialParams":
        """Parameters in the mass-rescaled unit system.

        With mass measured in units of ``mass_scale`` kg, any quantity with
        mass dimension +1 (pressure, stress, density, viscosity) is divided
        by the scale and the compressibility (mass dimension -1) is
        multiplied by it.  Lengths, times and permeabilities are unchanged.
        """
        s = self.mass_scale
        return replace(
            self,
            shear_modulus=self.shear_modulus / s,
            lame_lambda=self.lame_lambda / s,
            fluid_compressibility=self.fluid_compressibility * s,
            reference_fluid_density=self.reference_fluid_density / s,
            solid_density=self.solid_density / s,
            viscosity=self.viscosity / s,
            reference_pressure=self.reference_pressure / s,
            mass_scale=1.0,
        )

    def pressure_scale(self) -> float:
        """Multiply SI pressures by this to enter the scaled system."""
        return 1.0 / self.mass_scale


def fluid_density(p, params: MaterialParams):
    """Slightly compressible fluid: rho_ref * exp(gamma (p - p_ref)).

    The exponent is clipped far outside the physical range so that diverging
    Newton iterates produce large finite residuals (caught by the divergence
    threshold) instead of overflowing.
    """
    arg = params.fluid_compressibility * (
        np.asarray(p, dtype=float) - params.reference_pressure
    )
    return params.reference_fluid_density * np.exp(np.clip(arg, -500.0, 500.0))


def fluid_density_dp(p, params: MaterialParams):
    return params.fluid_compressibility * fluid_density(p, params)


def matrix_porosity(p, div_u, params: MaterialParams):
    """Matrix porosity as a function of pressure and volumetric strain.

    Fracture and intersection porosity is the constant one and is not
    computed here.
    """
    alpha = params.biot_coefficient
    coeff = (
        (alpha - params.reference_porosity)
        * (1.0 - alpha)
        / (params.lame_lambda + 2.0 * params.shear_modulus / 3.0)
    )
    return (
        params.reference_porosity
        + coeff * (np.asarray(p, dtype=float) - params.reference_pressure)
        + alpha * np.asarray(div_u, dtype=float)
    )


def matrix_porosity_dp(params: MaterialParams) -> float:
    alpha = params.biot_coefficient
    return (
        (alpha - params.reference_porosity)
        * (1.0 - alpha)
        / (params.lame_lambda + 2.0 * params.shear_modulus / 3.0)
    )


def permeability(dim: int, params: MaterialParams, aperture_values=None):
    """Isotropic permeability coefficient per cell.

    Matrix cells use the constant matrix permeability; fracture cells follow
    the cubic law a^2/12; intersection cells average the cubic-law values of
    the adjacent fracture cells (pass those as ``aperture_values``).
    """
    if dim == 2:
        return params.matrix_permeability
    if aperture_values is None:
        raise ValueError("missing aperture for lower-dimensional permeability")
    a = np.asarray(aperture_values, dtype=float)
    if dim == 1:
        return a**2 / 12.0
    # d=0: arithmetic mean of the intersecting fractures' cubic-law values.
    return float(np.mean(a**2 / 12.0))


def interface_permeability(projected_aperture):
    """Cubic law on the interface, aperture inherited from the lower side."""
    a = np.asarray(projected_aperture, dtype=float)
    if np.any(a <= 0):
        raise ValueError("nonpositive aperture projected to interface")
    return a**2 / 12.0


def aperture(jump_n, params: MaterialParams, clamp_counter: list | None = None):
    """Fracture aperture: residual aperture plus normal displacement jump.

    Transient Newton iterates may produce nonpositive values; these are
    clamped to a small floor and counted so convergence checks can verify
    that no clamp is active at the accepted state.
    """
    a = params.residual_aperture + np.asarray(jump_n, dtype=float)
    n_clamped = int(np.sum(a <= APERTURE_FLOOR))
    if clamp_counter is not None:
        clamp_counter.append(n_clamped)
    if n_clamped:
        a = np.maximum(a, APERTURE_FLOOR)
    return a


def intersection_aperture(neighbor_apertures):
    """Average aperture of the intersecting fracture cells."""
    a = np.asarray(neighbor_apertures, dtype=float)
    if a.size == 0:
        raise ValueError("intersection without neighboring fracture cells")
    return float(np.mean(a))


def gap(jump_tau, params: MaterialParams):
    """Shear-dilation gap: tan(psi) * ||[[u]]_tau||, always nonnegative."""
    jt = np.asarray(jump_tau, dtype=float)
    return params.tan_dilation * np.linalg.norm(jt, axis=-1)


def poroelastic_stress(grad_u: np.ndarray, p: float, params: MaterialParams) -> np.ndarray:
    """Extended Hooke's law: G(grad u + grad u^T) + lambda tr(grad u) I - alpha p I."""
    gu = np.asarray(grad_u, dtype=float)
    eye = np.eye(2)
    return (
        params.shear_modulus * (gu + gu.T)
        + params.lame_lambda * np.trace(gu) * eye
        - params.biot_coefficient * p * eye
    )


def body_force(phi, rho_f, params: MaterialParams) -> np.ndarray:
    """Combined gravitational force of fluid and solid per unit volume."""
    phi = np.asarray(phi, dtype=float)
    rho = phi * np.asarray(rho_f, dtype=float) + (1.0 - phi) * params.solid_density
    return rho[..., None] * params.g_vec


def upstream_density(v_j, rho_higher, rho_lower):
    """Upstream-weighted interface density; ties (v_j = 0) take the lower side."""
    return np.where(np.asarray(v_j, dtype=float) > 0.0, rho_higher, rho_lower)
