import math
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from molwave import decoherence as dec
from molwave.core import (AMU, CONST, EV, DomainError, InterferometerGeometry, MaterialGrating,
                          Particle, de_broglie_wavelength)
from molwave.nearfield import TalbotSetup

CH4 = 16.04 * AMU
C70 = Particle(840 * AMU, emission_model=dec.c70_emission())


def symmetric_setup(L=0.22, L23=None):
    g = MaterialGrating(990e-9, 0.48)
    return TalbotSetup(g, g, 990e-9, InterferometerGeometry(L, L23 or L))


def test_prefactor_against_mpmath():
    mpmath.mp.dps = 30
    ref = 4 * mpmath.pi * mpmath.gamma(mpmath.mpf(9) / 10) / (5 * mpmath.sin(mpmath.pi / 5))
    assert dec.SIGMA_EFF_PREFACTOR == pytest.approx(float(ref), rel=1e-14)


@given(st.floats(1e-78, 1e-72), st.floats(50.0, 400.0), st.floats(50.0, 500.0))
def test_c6_round_trip(C6, v_m, T):
    gas = dec.GasEnvironment(CH4, T, C6=C6)
    sigma = dec.effective_cross_section(v_m, gas)
    assert dec.c6_for_cross_section(sigma, v_m, CH4, T) == pytest.approx(C6, rel=1e-10)


def test_cross_section_scales_as_c6_to_two_fifths():
    a = dec.effective_cross_section(130.0, dec.GasEnvironment(CH4, 300.0, C6=1e-75))
    b = dec.effective_cross_section(130.0, dec.GasEnvironment(CH4, 300.0, C6=32e-75))
    assert b / a == pytest.approx(4.0, rel=1e-12)


def test_collisional_visibility():
    sigma = 4e-16
    assert dec.collisional_visibility(0.0, 0.22, 300.0, sigma) == 1.0
    p = np.array([0.0, 1e-5, 2e-5, 4e-5])
    lnV = dec.collisional_log_visibility(p, 0.22, 300.0, sigma)
    assert np.allclose(np.diff(lnV), np.diff(lnV)[0] * np.array([1, 1, 2]))
    assert lnV[1] == pytest.approx(-2 * 0.22 * sigma * 1e-5 / (CONST.k_B * 300.0))
    with pytest.raises(DomainError):
        dec.collisional_visibility(-1e-6, 0.22, 300.0, sigma)


def test_gas_environment_validation():
    gas = dec.GasEnvironment(CH4, 300.0, pressure=1e-4)
    assert gas.number_density == pytest.approx(1e-4 / (CONST.k_B * 300.0))
    for kw in ({"gas_mass": 0.0, "temperature": 300.0}, {"gas_mass": CH4, "temperature": 0.0},
               {"gas_mass": CH4, "temperature": 300.0, "pressure": -1.0},
               {"gas_mass": CH4, "temperature": 300.0, "forward_amplitude_f0": -1j}):
        with pytest.raises(DomainError):
            dec.GasEnvironment(**kw)
    with pytest.raises(DomainError):
        dec.effective_cross_section(130.0, gas)  # no C6


AMPLITUDE = st.one_of(st.just(0.0), st.floats(1e-20, 1e-9))  # m; avoids subnormal products


@given(AMPLITUDE, st.booleans(), AMPLITUDE, st.floats(1e14, 1e20))
def test_attenuation_obeys_optical_theorem(re_f, negative, im_f, n_gas):
    re_f = -re_f if negative else re_f
    gas = dec.GasEnvironment(CH4, 300.0, forward_amplitude_f0=complex(re_f, im_f))
    E = 0.5 * 840 * AMU * 130.0 ** 2
    res = dec.gas_refractive_index(n_gas, gas, Particle(840 * AMU), E)
    ref = n_gas * dec.total_cross_section(gas.forward_amplitude_f0, res.k)
    assert res.attenuation_per_length == pytest.approx(ref, rel=1e-12, abs=1e-300)
    assert np.sign(res.phase_per_length) == np.sign(re_f)


def test_gas_index_errors():
    gas = dec.GasEnvironment(CH4, 300.0)
    with pytest.raises(DomainError):
        dec.gas_refractive_index(1e18, gas, Particle(840 * AMU), 0.0)
    with pytest.raises(DomainError):
        dec.gas_refractive_index(-1.0, gas, Particle(840 * AMU), 1e-20)


# ------------------------------------------------------------- emission

def test_emission_rate_matches_planck_form():
    spec = dec.c70_emission()
    lam, T = 500e-9, 2500.0
    occ = 1.0 / (math.exp(CONST.h * CONST.c / (lam * CONST.k_B * T)) - 1.0)
    ref = 1.5e-21 * (400.0 / 500.0) ** 2 * 2 * math.pi * CONST.c / lam ** 4 * occ
    assert dec.spectral_emission_rate(lam, T, spec) == pytest.approx(ref, rel=1e-13)


def test_emission_cutoff_and_zero_temperature():
    spec = dec.c70_emission()
    cut = CONST.h * CONST.c / (1.5 * EV)
    assert spec.cutoff_wavelength == pytest.approx(cut)
    assert dec.spectral_emission_rate(1.001 * cut, 3000.0, spec) == 0.0
    assert dec.spectral_emission_rate(0.999 * cut, 3000.0, spec) > 0.0
    assert np.all(dec.spectral_emission_rate(np.array([400e-9, 600e-9]), 0.0, spec) == 0.0)
    assert dec.thermal_exponent(0.0, 990e-9, 0.22, 130.0, 3.6e-12, spec) == 0.0
    with pytest.raises(DomainError):
        dec.spectral_emission_rate(500e-9, -1.0, spec)


@settings(max_examples=8, deadline=None)
@given(st.floats(1200.0, 4000.0), st.floats(80.0, 250.0))
def test_thermal_exponent_matches_sine_integral_form(T, v):
    spec = dec.c70_emission()
    lam = de_broglie_wavelength(C70.mass, v)
    a = dec.thermal_exponent(T, 990e-9, 0.22, v, lam, spec)
    b = dec.thermal_exponent_closed(T, 990e-9, 0.22, v, lam, spec)
    assert a == pytest.approx(b, rel=1e-8, abs=1e-12)


def test_thermal_exponent_against_grid_sum():
    from oracles import thermal_exponent_bruteforce
    spec = dec.c70_emission()
    lam = de_broglie_wavelength(C70.mass, 200.0)
    a = dec.thermal_exponent(2800.0, 500e-9, 0.1, 200.0, lam, spec)
    b = thermal_exponent_bruteforce(2800.0, 500e-9, 0.1, 200.0, lam, spec, n=600)
    assert a == pytest.approx(b, rel=1e-5)


def test_thermal_visibility_falls_with_temperature():
    s = symmetric_setup()
    V = [dec.thermal_visibility(T, s, C70, 130.0) for T in (1000.0, 2000.0, 2500.0, 3000.0)]
    assert np.all(np.diff(V) < 0)
    assert V[0] > 0.99
    assert dec.thermal_visibility(3000.0, s, Particle(840 * AMU), 130.0) == 1.0
    with pytest.raises(DomainError):
        dec.thermal_visibility(2000.0, symmetric_setup(0.22, 0.3), C70, 130.0)


def test_sigma_table_from_file(tmp_path):
    path = tmp_path / "sigma.txt"
    path.write_text("# lambda_nm sigma_m2\n300 2e-21\n500 1e-21\n800 0.5e-21\n")
    spec = dec.load_sigma_table(path)
    assert spec.cutoff_wavelength == pytest.approx(800e-9)
    assert spec.sigma(400e-9) == pytest.approx(1.5e-21)
    assert spec.sigma(900e-9) == 0.0
    with pytest.raises(DomainError):
        spec.sigma(200e-9)
    assert dec.thermal_exponent(2500.0, 990e-9, 0.22, 130.0, 3.6e-12, spec) > 0
    bad = tmp_path / "bad.txt"
    bad.write_text("300 1e-21 5\n400 1e-21 5\n")
    with pytest.raises(DomainError):
        dec.load_sigma_table(bad)


def test_emission_spectrum_validation():
    with pytest.raises(DomainError):
        dec.EmissionSpectrum("blackbody")
    with pytest.raises(DomainError):
        dec.EmissionSpectrum("table", sigma_abs_table=([500e-9, 400e-9], [1e-21, 1e-21]))
    with pytest.raises(DomainError):
        dec.EmissionSpectrum("table", sigma_abs_table=([400e-9, 500e-9], [1e-21, -1e-21]))
    with pytest.raises(DomainError):
        dec.EmissionSpectrum(gap_energy=-1.0)


# ------------------------------------------------------------- heating

def test_heating_is_linear_and_clamped():
    p = Particle(840 * AMU, internal_temperature=900.0)
    E = CONST.h * CONST.c / 514e-9
    assert dec.heated_temperature(900.0, 1.0, E, p) == pytest.approx(1070.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        dec.heated_temperature(900.0, 10.0, E, p)
    with pytest.warns(dec.HeatingWarning):
        assert dec.heated_temperature(900.0, 100.0, E, p) == dec.DECOMPOSITION_TEMPERATURE
    assert dec.heated_temperature(900.0, 100.0, E, p, clamp=False) == pytest.approx(17900.0)
    with pytest.raises(DomainError):
        dec.heated_temperature(900.0, -1.0, E, p)


def test_poisson_heating_mean():
    p = Particle(840 * AMU)
    E = CONST.h * CONST.c / 514e-9
    T = dec.heated_temperature_poisson(900.0, 3.0, E, p, np.random.default_rng(2), 200_000)
    assert T.mean() == pytest.approx(900.0 + 3.0 * 170.0, rel=2e-3)
    T = dec.heated_temperature_poisson(900.0, 40.0, E, p, np.random.default_rng(2), 1000)
    assert T.max() == dec.DECOMPOSITION_TEMPERATURE
