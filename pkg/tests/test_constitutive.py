"""Free-energy derived fields: OCV, chemical potential, stresses, voltage.

Stress and chemical potential are checked against central differences of the
implemented free energy (the thermodynamic-consistency oracle).
"""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sisei import checks
from sisei import constitutive as con
from sisei import kinematics as kin
from sisei.errors import ConcentrationOutOfRange, ConfigError, NonconvexChemistry, OrientationViolation

I3 = np.eye(3)


def _swollen(c, params):
    return kin.chemical_stretch(c, params.v_pmv_cmax) * I3


# ---------------------------------------------------------------------- OCV
def test_ocv_reproduces_nodes(curve):
    for c, u in zip(curve.c_bar, curve.voltage):
        assert con.ocv(curve, c) == u


def test_ocv_linear_table():
    assert con.ocv(con.OcvCurve.linear(1.0, 1.0), 0.25) == pytest.approx(0.75, rel=1e-15)


def test_ocv_monotone_between_nodes(curve):
    dense = curve(np.linspace(0.0, 1.0, 20001))
    assert np.all(np.diff(curve.voltage) < 0.0)
    assert np.all(np.diff(dense) <= 0.0)


def test_ocv_slope_is_continuous(curve):
    for x in curve.c_bar[1:-1]:
        assert curve.slope(x - 1e-12) == pytest.approx(curve.slope(x + 1e-12), rel=1e-6, abs=1e-9)


def test_ocv_integral_matches_quadrature(curve):
    from scipy.integrate import quad
    value, _ = quad(lambda z: float(curve(z)), 0.0, 0.7, points=list(curve.c_bar), limit=200)
    assert curve.integral(0.7) == pytest.approx(value, rel=1e-10)


@pytest.mark.parametrize("c", [-0.01, 1.01])
def test_ocv_out_of_range(curve, c):
    with pytest.raises(ConcentrationOutOfRange):
        curve(c)


@pytest.mark.parametrize("c, u", [
    ([0.0, 0.5, 0.4, 1.0], [1, 0.5, 0.4, 0]),   # not increasing
    ([0.1, 1.0], [1.0, 0.0]),                   # does not cover 0
    ([0.0, 1.0], [1.0, np.nan]),
    ([0.0], [1.0]),
])
def test_ocv_table_validation(c, u):
    with pytest.raises(ConfigError):
        con.OcvCurve(c, u)


def test_ocv_from_csv(tmp_path):
    path = tmp_path / "ocv.csv"
    path.write_text("# c,U\n0,0.9\n0.5,0.4\n1,0.1\n")
    curve = con.OcvCurve.from_csv(path)
    assert curve(0.5) == 0.4


# ---------------------------------------------------------------- material
def test_material_defaults_and_lame(params):
    lam, G = params.lame_S
    assert (lam, G) == (pytest.approx(360e6), pytest.approx(360e6))
    assert params.yield_radius == pytest.approx(np.sqrt(2 / 3) * 49.5e6)
    assert params.overstress_scale == pytest.approx(params.yield_radius)
    assert params.replace(rescale_overstress=False).overstress_scale == params.sigma_Y_star


@pytest.mark.parametrize("field, value", [("E_P", 0.0), ("E_S", -1.0), ("nu_S", 0.5),
                                          ("nu_P", -1.0), ("D", 0.0), ("beta", 0.0),
                                          ("sigma_Y", np.inf), ("eps_dot_0", -1e-3)])
def test_material_validation(params, field, value):
    with pytest.raises(ConfigError) as info:
        params.replace(**{field: value})
    assert info.value.field == f"material.{field}"


# ------------------------------------------------------- chemical potential
def test_mu_at_stress_free_swelling(params, curve):
    for c in (0.0, 0.02, 0.5, 1.0):
        mu = con.chemical_potential(c, _swollen(c, params), params, curve)
        assert mu == pytest.approx(-params.Fa * curve(c), rel=1e-14, abs=1e-9)


def test_mu_initial_state_is_chemical_derivative(params, curve):
    c0, h = 0.02, 1e-6
    chem = [-params.c_max * params.Fa * curve.integral(c0 + s * h) for s in (1, -1)]
    ref = (chem[0] - chem[1]) / (2 * h) / params.c_max
    assert con.chemical_potential(c0, _swollen(c0, params), params, curve) == pytest.approx(ref, rel=1e-8)


def test_mu_fd_oracle():
    assert checks.fd_chemical_potential_check(n=30).passed


def test_dmu_dc_linear_ocv_symbolic(params):
    b = 0.4
    curve = con.OcvCurve.linear(0.9, b)
    c = 0.3
    lam_ch = kin.chemical_stretch(c, params.v_pmv_cmax)
    lam, G = params.lame_P
    # at F = lam_ch I the elastic strain vanishes; only the d lam_ch / dc path remains
    swelling = params.v_pmv ** 2 / (9.0 * lam_ch ** 10) * lam_ch ** 4 * 3.0 * (3.0 * lam + 2.0 * G)
    expected = params.Fa * b / params.c_max + swelling
    assert con.dmu_dc(c, lam_ch * I3, params, curve) == pytest.approx(expected, rel=1e-12)


def test_mobility_definition(params, curve):
    F = _swollen(0.4, params) @ np.diag([1.01, 0.99, 1.0])
    m = con.mobility(0.4, F, params, curve)
    assert m > 0
    assert m * con.dmu_dc(0.4, F, params, curve) == pytest.approx(params.D, rel=1e-14)


def test_nonconvex_chemistry_flagged(params):
    increasing = con.OcvCurve([0.0, 1.0], [0.0, 50.0])
    with pytest.raises(NonconvexChemistry):
        con.dmu_dc(0.5, _swollen(0.5, params), params, increasing)


def test_mu_mechanical_term_vanishes_without_elastic_strain(params):
    flat = con.OcvCurve.linear(0.0, 0.0)
    for c in (0.1, 0.9):
        assert con.chemical_potential(c, _swollen(c, params), params, flat) == pytest.approx(0.0, abs=1e-6)


# ----------------------------------------------------------------- stresses
def test_particle_stress_free_swelling(params):
    for c in (0.0, 0.3, 1.0):
        np.testing.assert_allclose(con.piola_particle_gsv(c, _swollen(c, params), params),
                                   np.zeros((3, 3)), atol=1e-3)


def test_particle_small_strain_limit(params):
    lam, G = params.lame_P
    F = np.diag([1.01, 1.0, 1.0])
    P = con.piola_particle_gsv(0.0, F, params)
    np.testing.assert_allclose(P, F @ kin.stiffness_apply(kin.gsv_strain(F), lam, G), rtol=1e-14)
    # the gap to linear elasticity is a geometric O(eps) effect: 1.5 eps in the rr entry
    gaps = []
    for eps in (1e-2, 1e-3, 1e-4):
        F = np.diag([1.0 + eps, 1.0, 1.0])
        small = kin.stiffness_apply(np.diag([eps, 0.0, 0.0]), lam, G)
        P = con.piola_particle_gsv(0.0, F, params)
        gaps.append(np.max(np.abs(P - small)) / np.max(np.abs(small)))
    assert gaps[0] < 0.016
    assert gaps[1] < 0.01
    np.testing.assert_allclose(np.array(gaps[:-1]) / np.array(gaps[1:]), 10.0, rtol=0.02)


@pytest.mark.parametrize("variant", ["particle", "sei_gsv", "sei_log"])
def test_piola_fd_oracle(variant):
    result = checks.fd_stress_check(variant, n=30)
    assert result.passed, result.detail


@pytest.mark.parametrize("mode", ["gsv", "log"])
def test_sei_reference_state_stress_free(params, mode):
    assert np.array_equal(con.piola_sei(I3, I3, mode, params), np.zeros((3, 3)))


def test_sei_modes_agree_at_small_strain(params, rng):
    F = I3 + 1e-4 * np.diag(rng.uniform(-1, 1, 3))
    gsv = con.piola_sei(F, I3, "gsv", params)
    log = con.piola_sei(F, I3, "log", params)
    assert np.max(np.abs(gsv - log)) <= 1e-3 * np.max(np.abs(gsv))


def test_sei_unknown_mode(params):
    with pytest.raises(ValueError):
        con.piola_sei(I3, I3, "green", params)


def test_cauchy_examples(rng):
    P = rng.normal(size=(3, 3))
    assert np.array_equal(con.cauchy_from_piola(np.zeros((3, 3)), I3), np.zeros((3, 3)))
    np.testing.assert_allclose(con.cauchy_from_piola(P, I3), P)
    F = I3 + 0.1 * rng.normal(size=(3, 3))
    p = 3.5
    np.testing.assert_allclose(con.cauchy_from_piola(-p * kin.cofactor(F), F), -p * I3, atol=1e-13)
    with pytest.raises(OrientationViolation):
        con.cauchy_from_piola(P, np.diag([1.0, 1.0, -1.0]))


@given(st.floats(0.9, 1.2), st.floats(0.9, 1.2), st.floats(0.0, 1.0))
def test_cauchy_pullback_roundtrip(a, b, c):
    params = con.MaterialParams()
    F = kin.chemical_stretch(c, params.v_pmv_cmax) * np.diag([a, b, b])
    P = con.piola_particle_gsv(c, F, params)
    sigma = con.cauchy_from_piola(P, F)
    np.testing.assert_allclose(sigma, sigma.T, rtol=0, atol=1e-10 * np.max(np.abs(sigma)) + 1e-300)
    back = np.linalg.det(F) * sigma @ np.linalg.inv(F).T
    np.testing.assert_allclose(back, P, rtol=1e-12, atol=1e-12 * np.max(np.abs(P)))


# ------------------------------------------------------------------ voltage
def test_voltage_examples(curve):
    bv = con.ButlerVolmer()
    Fa = bv.Fa
    assert con.voltage_postprocess(-Fa * 0.4, 0.0, bv) == pytest.approx(0.4, rel=1e-15)
    eta = bv.overpotential(np.array([1e-5, -1e-5]))
    assert eta[0] > 0 and eta[1] == -eta[0]
    c = 0.37
    assert con.voltage_postprocess(-Fa * curve(c), 0.0, bv) == pytest.approx(curve(c), rel=1e-15)


def test_surface_flux_one_c(params):
    # 1C fills the sphere (volume 4/3 pi R^3 c_max) in one hour through area 4 pi R^2
    assert con.surface_flux(params, 1.0) == pytest.approx(params.c_max * params.radius / 3 / 3600)


def test_kernel_parameters(params):
    p = con.kernel_parameters(params)
    assert p.shape == (con.N_KERNEL_PARAMS,)
    assert p[con.FOURIER] == pytest.approx(params.D * 3600 / params.radius ** 2)
    assert p[con.EPS0] == pytest.approx(params.eps_dot_0 * 3600)
