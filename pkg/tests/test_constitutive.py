"""Pointwise constitutive laws against hand-evaluated values."""
import numpy as np
import pytest

from porofrac.constitutive import (
    MaterialParams,
    aperture,
    body_force,
    fluid_density,
    gap,
    intersection_aperture,
    interface_permeability,
    matrix_porosity,
    permeability,
    poroelastic_stress,
    upstream_density,
)

P = MaterialParams()


def test_fluid_density_reference_and_direct_evaluation():
    assert fluid_density(2.0e7, P) == pytest.approx(1000.0)
    # p = p_ref + 1e7 with gamma = 0.4e-9: rho = 1000 exp(0.004)
    expected = 1000.0 * np.exp(0.4e-9 * 1.0e7)
    assert fluid_density(3.0e7, P) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(1004.008, abs=5e-4)
    incompressible = MaterialParams(fluid_compressibility=1e-300)
    for p in (0.0, 1e7, 5e8):
        assert fluid_density(p, incompressible) == pytest.approx(1000.0)


def test_fluid_density_monotone_in_pressure():
    ps = np.linspace(-1e8, 1e8, 301)
    rho = fluid_density(ps, P)
    assert np.all(np.diff(rho) > 0)


def test_matrix_porosity():
    assert matrix_porosity(2.0e7, 0.0, P) == pytest.approx(0.01)
    # div u = 1e-3 at reference pressure adds alpha * div u.
    assert matrix_porosity(2.0e7, 1.0e-3, P) == pytest.approx(0.01 + 0.8e-3)
    # alpha == phi_ref kills the pressure coefficient.
    degenerate = MaterialParams(biot_coefficient=0.01)
    assert matrix_porosity(9.9e7, 0.0, degenerate) == pytest.approx(0.01)


def test_permeability_by_dimension():
    assert permeability(2, P) == pytest.approx(1.0e-15)
    a = 5.0e-4
    assert permeability(1, P, a) == pytest.approx(a * a / 12.0)
    assert permeability(1, P, a) == pytest.approx(2.08333e-8, rel=1e-5)
    # Intersection with two equal-aperture fractures: mean of equals.
    assert permeability(0, P, [a, a]) == pytest.approx(a * a / 12.0)
    with pytest.raises(ValueError, match="aperture"):
        permeability(1, P)


def test_interface_permeability():
    a = np.array([5.0e-4, 1.0e-3])
    k = interface_permeability(a)
    assert np.allclose(k, a**2 / 12.0)
    assert np.allclose(interface_permeability(2 * a), 4 * k)
    with pytest.raises(ValueError):
        interface_permeability(0.0)


def test_aperture_and_clamp():
    assert aperture(0.0, P) == pytest.approx(5.0e-4)
    assert aperture(1.0e-3, P) == pytest.approx(1.5e-3)
    counter = []
    a = aperture(np.array([-1.0e-3, 1.0e-3]), P, clamp_counter=counter)
    assert counter == [1]
    assert a[0] > 0.0
    # Intersection: mean of neighbors lies between min and max.
    rng = np.random.default_rng(0)
    for _ in range(25):
        neigh = rng.uniform(1e-5, 1e-2, size=rng.integers(2, 5))
        a0 = intersection_aperture(neigh)
        assert neigh.min() <= a0 <= neigh.max()
    base = 3.3e-4
    assert intersection_aperture([base, 3 * base]) == pytest.approx(2 * base)


def test_gap():
    assert gap(np.zeros(2), P) == pytest.approx(0.0)
    val = gap(np.array([1.0e-2, 0.0]), P)
    assert val == pytest.approx(np.tan(np.radians(5.0)) * 1e-2, rel=1e-12)
    assert val == pytest.approx(8.749e-4, rel=1e-3)
    flat = MaterialParams(dilation_angle_deg=0.0)
    assert gap(np.array([0.3, -0.7]), flat) == 0.0
    # Positively homogeneous of degree one.
    rng = np.random.default_rng(4)
    for _ in range(25):
        v = rng.normal(size=2)
        s = rng.uniform(0.1, 10)
        assert gap(s * v, P) == pytest.approx(s * gap(v, P), rel=1e-12)


def test_poroelastic_stress():
    z = np.zeros((2, 2))
    assert np.allclose(poroelastic_stress(z, 0.0, P), 0.0)
    p0 = 3.7e6
    assert np.allclose(poroelastic_stress(z, p0, P), -P.biot_coefficient * p0 * np.eye(2))
    eps = 1.4e-4
    sig = poroelastic_stress(eps * np.eye(2), p0, P)
    expected = (2 * P.shear_modulus * eps + 2 * P.lame_lambda * eps) * np.eye(
        2
    ) - P.biot_coefficient * p0 * np.eye(2)
    assert np.allclose(sig, expected)
    # Symmetry and linearity on random inputs.
    rng = np.random.default_rng(9)
    for _ in range(20):
        g1, g2 = rng.normal(size=(2, 2, 2))
        q1, q2 = rng.normal(size=2)
        s1 = poroelastic_stress(g1, q1, P)
        assert np.allclose(s1, s1.T, atol=1e-14 * np.abs(s1).max())
        lhs = poroelastic_stress(g1 + 2.0 * g2, q1 + 2.0 * q2, P)
        rhs = s1 + 2.0 * poroelastic_stress(g2, q2, P)
        assert np.allclose(lhs, rhs, rtol=1e-12)


def test_body_force():
    assert np.allclose(body_force(0.3, 1000.0, P), 0.0)  # gravity defaults to zero
    grav = MaterialParams(gravity=(0.0, -9.81))
    assert np.allclose(body_force(1.0, 1000.0, grav), [0.0, -9810.0])
    assert np.allclose(body_force(0.0, 1000.0, grav), [0.0, -9.81 * 2700.0])


def test_upstream_density_branches_and_tie():
    assert upstream_density(1.0, 1010.0, 990.0) == 1010.0
    assert upstream_density(-1.0, 1010.0, 990.0) == 990.0
    assert upstream_density(0.0, 1010.0, 990.0) == 990.0  # tie goes to lower side
    v = np.array([-2.0, 0.0, 3.0])
    assert np.allclose(upstream_density(v, 1010.0, 990.0), [990.0, 990.0, 1010.0])


def test_scaled_parameters():
    s = P.scaled()
    assert s.shear_modulus == pytest.approx(17.0)
    assert s.lame_lambda == pytest.approx(11.11)
    assert s.reference_pressure == pytest.approx(0.02)
    assert s.reference_fluid_density == pytest.approx(1.0e-6)
    assert s.viscosity == pytest.approx(1.0e-12)
    assert s.fluid_compressibility == pytest.approx(0.4)
    assert s.matrix_permeability == pytest.approx(1.0e-15)  # length only
    assert s.residual_aperture == pytest.approx(5.0e-4)
    # The laws commute with the scaling: rho(p) in scaled units equals
    # rho(p_SI) rescaled.
    p_si = 2.6e7
    assert fluid_density(p_si * P.pressure_scale(), s) == pytest.approx(
        fluid_density(p_si, P) / P.mass_scale, rel=1e-14
    )


def test_parameter_validation():
    with pytest.raises(ValueError):
        MaterialParams(biot_coefficient=0.0)
    with pytest.raises(ValueError):
        MaterialParams(reference_porosity=1.0)
    with pytest.raises(ValueError):
        MaterialParams(friction_coefficient=-0.5)
    with pytest.raises(ValueError):
        MaterialParams(dilation_angle_deg=-1.0)
