import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from molwave.core import (AMU, DomainError, MaterialGrating, OpticalGrating, Particle,
                          VelocityDistribution, de_broglie_wavelength, MEV_NM3)
from molwave.farfield import (FarFieldPattern, SlitTransmission, effective_slit_width,
                              farfield_material, farfield_optical, open_interval,
                              optical_order_weights, recoil_shift_weights, vdw_slit_transmission,
                              wall_phase)

C60 = Particle(720 * AMU, C3_wall=5 * MEV_NM3)
GRATING = MaterialGrating(100e-9, 0.5, 100e-9)


def test_open_slit_amplitude_is_sinc():
    a = 50e-9
    st_ = SlitTransmission((np.arange(256) + 0.5) * a / 256, np.ones(256), a)
    q = np.linspace(-1e8, 1e8, 101)
    assert np.allclose(st_.amplitude(q), a * np.sinc(q * a), rtol=0, atol=1e-13 * a)


def test_monochromatic_pattern_matches_n_slit_formula():
    p = Particle(720 * AMU)
    g = MaterialGrating(100e-9, 0.5)
    vd = VelocityDistribution(144.0)
    lam = de_broglie_wavelength(p.mass, 144.0)
    th = np.linspace(-3 * lam / 100e-9, 3 * lam / 100e-9, 1201)
    pat = farfield_material(g, p, vd, n_slits=7, angles=th)
    q = th / lam
    N = 7
    s = np.sin(np.pi * q * 100e-9)
    on_order = np.abs(s) < 1e-12
    grating = np.where(on_order, N ** 2, (np.sin(N * np.pi * q * 100e-9) / np.where(on_order, 1.0, s)) ** 2)
    ref = np.sinc(q * 50e-9) ** 2 * grating
    assert np.allclose(pat.intensity, ref / ref.max(), atol=1e-10)


def test_missing_even_orders_at_half_open_fraction():
    p = Particle(720 * AMU)
    vd = VelocityDistribution(144.0, 0.05 * 144.0)
    lam = de_broglie_wavelength(p.mass, 144.0)
    th = lam / 100e-9
    pat = farfield_material(MaterialGrating(100e-9, 0.5), p, vd, collimation=2e-6,
                            angles=np.linspace(-2.5 * th, 2.5 * th, 801), n_nodes=16)
    assert pat.value_near(2 * th, 0.2 * th) < 0.01 * pat.value_near(th, 0.2 * th)


def test_wall_phase_and_open_interval():
    v = 144.0
    lo, hi = open_interval(GRATING, C60, v, cutoff_phase=20.0)
    a = GRATING.slit_width
    assert lo + hi == pytest.approx(a)
    assert wall_phase(lo, a, C60.C3_wall, GRATING.thickness_b, v) == pytest.approx(20.0, rel=1e-10)
    assert open_interval(MaterialGrating(100e-9, 0.5), C60, v) == (0.0, a)


def test_vdw_transmission_properties():
    st_ = vdw_slit_transmission(GRATING, C60, 144.0)
    assert np.all(np.abs(st_.t) <= 1.0 + 1e-12)
    assert np.allclose(st_.t, st_.t[::-1])
    closed = np.abs(st_.phase) > 20.0
    assert np.all(st_.t[closed] == 0) and closed[0] and closed[-1]
    assert 0.4 < effective_slit_width(st_) / GRATING.slit_width < 0.6


@settings(max_examples=25, deadline=None)
@given(st.floats(0.5, 20.0), st.floats(0.5, 20.0))
def test_effective_width_shrinks_with_wall_constant(c_lo, c_hi):
    c_lo, c_hi = sorted((c_lo, c_hi))
    w = [effective_slit_width(vdw_slit_transmission(GRATING, Particle(720 * AMU, C3_wall=c * MEV_NM3),
                                                    144.0)) for c in (c_lo, c_hi)]
    assert w[1] <= w[0]


@given(st.floats(0.0, 60.0))
def test_optical_orders_sum_to_one(phi0):
    n, p = optical_order_weights(phi0)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(p, special.jv(n, phi0 / 2) ** 2)


@given(st.floats(0.0, 30.0))
def test_recoil_moments(n0):
    s, w = recoil_shift_weights(n0)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.sum(w * s) == pytest.approx(0.0, abs=1e-9)
    # each photon moves by one unit either way: variance = <k> = n0
    assert np.sum(w * s * s) == pytest.approx(n0, rel=1e-6, abs=1e-9)
    s, w = recoil_shift_weights(n0, recoil="plus")
    assert np.sum(w * s) == pytest.approx(n0, rel=1e-6, abs=1e-9)


def test_recoil_errors():
    with pytest.raises(DomainError):
        recoil_shift_weights(-1.0)
    with pytest.raises(DomainError):
        recoil_shift_weights(1.5, statistics="fixed")
    with pytest.raises(DomainError):
        recoil_shift_weights(1.0, recoil="sideways")


def test_optical_far_field_order_positions_and_mass():
    p = Particle(840 * AMU)
    g = OpticalGrating(532e-9, 4.0)
    vd = VelocityDistribution(130.0)
    lam = de_broglie_wavelength(p.mass, 130.0)
    step = lam / g.period_d / 50
    ang = np.arange(-400, 401) * step
    pat = farfield_optical(g, p, vd, angles=ang)
    n, w = optical_order_weights(4.0)
    for order, weight in zip(n, w):
        if abs(order) > 8:
            continue
        i = np.argmin(np.abs(ang - order * 50 * step))
        assert pat.density[i] * step == pytest.approx(weight, rel=1e-9)
    assert pat.total() == pytest.approx(1.0, rel=1e-9)  # orders beyond the grid carry < 1e-15


def test_absorption_blurs_optical_orders():
    p = Particle(840 * AMU)
    vd = VelocityDistribution(130.0)
    lam = de_broglie_wavelength(p.mass, 130.0)
    ang = np.linspace(-6, 6, 1201) * lam / 266e-9
    clean = farfield_optical(OpticalGrating(532e-9, 4.0), p, vd, angles=ang)
    hot = farfield_optical(OpticalGrating(532e-9, 4.0, 1.0), p, vd, angles=ang)
    half = np.argmin(np.abs(ang - 0.5 * lam / 266e-9))
    assert clean.intensity[half] == 0.0
    assert hot.intensity[half] > 0.0


def test_far_field_errors():
    p = Particle(720 * AMU)
    vd = VelocityDistribution(144.0)
    with pytest.raises(DomainError):
        farfield_material(GRATING, p, vd, collimation=-1.0)
    with pytest.raises(DomainError):
        farfield_material(GRATING, p, vd, n_slits=0)
    with pytest.raises(DomainError):
        vdw_slit_transmission(GRATING, p, 0.0)
    with pytest.raises(DomainError):
        FarFieldPattern([0.0, 1.0], [1.0])
