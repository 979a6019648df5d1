import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import load_preset
from molwave.core import (AMU, CONST, MEV_NM3, DomainError, InterferometerGeometry,
                          MaterialGrating, OpticalGrating, Particle, VelocityDistribution,
                          de_broglie_wavelength)
from molwave.farfield import open_interval, wall_phase
from molwave.nearfield import (TalbotSetup, absorption_cross_section, binary_coefficients,
                               classical_pattern, grating_fourier_coeffs, kdtl_mean_photons,
                               kdtl_phase, kdtl_visibility_vs_power, optical_coefficients,
                               self_image_coefficients, talbot_coefficient_harmonic,
                               talbot_lau_pattern, visibility_vs_velocity)

D = 990e-9
C70 = Particle(840 * AMU, C3_wall=20 * MEV_NM3)
C70_POINT = Particle(840 * AMU)
G1 = MaterialGrating(D, 0.48, 400e-9)
G2 = MaterialGrating(D, 0.56, 400e-9)


def tl_setup(L=0.22, **kw):
    return TalbotSetup(G1, G2, D, InterferometerGeometry(L, L), **kw)


def test_binary_coefficients_match_sampled_mask():
    N, f = 4096, 0.375  # slit edges fall on samples, which carry the mid value
    x = np.arange(N) / N
    dist = np.minimum(x, 1 - x)
    t = np.where(dist < f / 2, 1.0, 0.0)
    t[np.isclose(dist, f / 2)] = 0.5
    sampled = grating_fourier_coeffs(t, 16)
    assert np.allclose(sampled.b, binary_coefficients(f, 16).b, atol=1e-5)


def test_coefficient_indexing_and_sample_count():
    b = binary_coefficients(0.5, 3)
    assert b.J == 3
    assert b[0] == 0.5
    assert np.all(b[np.array([4, -7])] == 0)
    with pytest.raises(DomainError):
        grating_fourier_coeffs(np.ones(16), 3)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.0, 8.0), st.floats(0.05, 1.9))
def test_optical_self_image_matches_harmonic_sum(phi0, xi):
    v = 130.0
    g = OpticalGrating(532e-9, phi0, reference_velocity=v)
    lam = de_broglie_wavelength(C70.mass, v)
    L = xi * g.period_d ** 2 / lam
    A = self_image_coefficients(g, C70, v, L, n_harmonics=4)
    b = optical_coefficients(phi0, 40)
    H = [talbot_coefficient_harmonic(b, m, xi) for m in range(5)]
    assert np.allclose(A, H, rtol=0, atol=1e-12)


def test_vdw_self_image_matches_sampled_harmonic_sum():
    v = 130.0
    lam = de_broglie_wavelength(C70.mass, v)
    lo, hi = open_interval(G2, C70, v, 20.0)
    N = 1 << 16
    y = np.fft.fftfreq(N, 1.0 / N) * D / N  # sample 0 at the slit center
    s = y + 0.5 * G2.slit_width
    t = np.zeros(N, complex)
    inside = (s > lo) & (s < hi)
    t[inside] = np.exp(1j * wall_phase(s[inside], G2.slit_width, G2.wall_constant(C70),
                                       G2.thickness_b, v))
    b = grating_fourier_coeffs(t, N // 8, D)
    for L in (0.05, 0.11):
        A = self_image_coefficients(G2, C70, v, L, n_harmonics=3)
        xi = lam * L / D ** 2
        H = [talbot_coefficient_harmonic(b, m, xi) for m in range(4)]
        # the sampled sum converges as 1/N towards the real-space form
        assert np.allclose(A, H, rtol=0, atol=2e-5)


@pytest.mark.parametrize("f", [0.3, 0.5, 0.56])
def test_talbot_self_imaging(f):
    v = 130.0
    g = MaterialGrating(D, f)
    lam = de_broglie_wavelength(C70_POINT.mass, v)
    m = np.arange(7)
    full = self_image_coefficients(g, C70_POINT, v, 2 * D ** 2 / lam, n_harmonics=6)
    half = self_image_coefficients(g, C70_POINT, v, D ** 2 / lam, n_harmonics=6)
    ref = f * np.sinc(m * f)
    assert np.allclose(full, ref, atol=1e-12)
    assert np.allclose(half, (-1.0) ** m * ref, atol=1e-12)


def test_classical_quadrature_matches_ray_tracing():
    s = tl_setup(mode="classical")
    q = classical_pattern(s, C70, 130.0, n_harmonics=2).density_coeffs
    mc = classical_pattern(s, C70, 130.0, n_harmonics=2, method="montecarlo",
                           n_rays=1_000_000, seed=3).density_coeffs
    assert mc[0] == pytest.approx(q[0], rel=1e-12)
    # one standard deviation is about A_0 / sqrt(n_rays) = 2.5e-4
    assert np.allclose(mc[1:], q[1:], rtol=0, atol=1.5e-3)


def test_montecarlo_is_seeded():
    s = tl_setup(mode="classical")
    a = classical_pattern(s, C70, 130.0, 2, method="montecarlo", n_rays=100_000, seed=5)
    b = classical_pattern(s, C70, 130.0, 2, method="montecarlo", n_rays=100_000, seed=5)
    c = classical_pattern(s, C70, 130.0, 2, method="montecarlo", n_rays=100_000, seed=6)
    assert np.array_equal(a.density_coeffs, b.density_coeffs)
    assert not np.array_equal(a.density_coeffs, c.density_coeffs)


def test_quantum_classical_difference_is_linear_in_xi():
    g = MaterialGrating(D, 0.56)
    v = 130.0
    lam = de_broglie_wavelength(C70_POINT.mass, v)
    slopes = []
    for xi in (1e-3, 2e-3, 4e-3):
        L = xi * D ** 2 / lam
        s = TalbotSetup(None, g, D, InterferometerGeometry(L, L))
        B = talbot_lau_pattern(s, C70_POINT, v, n_harmonics=2).density_coeffs
        C = classical_pattern(s, C70_POINT, v, n_harmonics=2).density_coeffs
        slopes.append(np.abs(B - C)[1:] / xi)
    slopes = np.array(slopes)
    assert np.all(slopes > 0.1)
    assert np.allclose(slopes, slopes[0], rtol=0.05)


def test_period_mismatch_is_rejected():
    bad_g2 = TalbotSetup(G1, MaterialGrating(800e-9, 0.5), D, InterferometerGeometry(0.22, 0.22))
    with pytest.raises(DomainError, match="resonant"):
        talbot_lau_pattern(bad_g2, C70, 130.0)
    with pytest.raises(DomainError, match="G3"):
        talbot_lau_pattern(TalbotSetup(G1, G2, 1000e-9, InterferometerGeometry(0.22, 0.22)), C70, 130.0)
    # doubling the G2 period with L12 = L23 selects the second G2 harmonic
    r, period = TalbotSetup(G1, MaterialGrating(2 * D, 0.5), D, InterferometerGeometry(0.22, 0.22)).resonance()
    assert (r, period) == (4, D)


def test_setup_errors():
    with pytest.raises(DomainError):
        tl_setup(mode="semiclassical")
    with pytest.raises(DomainError):
        talbot_lau_pattern(tl_setup(), C70, 0.0)
    with pytest.raises(DomainError):
        classical_pattern(tl_setup(), C70, 130.0, method="raytrace")
    with pytest.raises(DomainError):
        visibility_vs_velocity(tl_setup(), C70, [])
    with pytest.raises(DomainError):
        visibility_vs_velocity(tl_setup(), C70, [150.0, 120.0])


def test_visibility_vs_velocity_is_thread_independent():
    grid = [110.0, 150.0, 190.0]
    one = visibility_vs_velocity(tl_setup(), C70, grid, 0.1, n_nodes=8, threads=1)
    three = visibility_vs_velocity(tl_setup(), C70, grid, 0.1, n_nodes=8, threads=3)
    for key in one:
        assert np.array_equal(one[key].visibilities, three[key].visibilities)
        assert np.all((one[key].visibilities >= 0) & (one[key].visibilities <= 1))


# ------------------------------------------------------------ KDTLI

def test_kdtl_phase_scaling():
    base = kdtl_phase(0.5, 1e-38, 20e-6, 100.0)
    assert kdtl_phase(1.0, 1e-38, 20e-6, 100.0) == pytest.approx(2 * base)
    assert kdtl_phase(0.5, 1e-38, 20e-6, 200.0) == pytest.approx(0.5 * base)
    assert kdtl_mean_photons(1.0, 1e-21, 532e-9, 20e-6, 100.0) == pytest.approx(
        2 * kdtl_mean_photons(0.5, 1e-21, 532e-9, 20e-6, 100.0))


def test_absorption_cross_section():
    alpha = complex(0.0, 1e-39)
    assert absorption_cross_section(alpha, 532e-9) == pytest.approx(
        2 * math.pi / 532e-9 * 1e-39 / CONST.eps0)


def test_kdtl_zero_power_has_no_fringes():
    _, p, vd, setup = load_preset("c70_kdtl_power")
    curve = kdtl_visibility_vs_power(setup, p, [0.0, 0.1, 0.3, 0.5], vd, n_nodes=8)
    assert curve.visibilities[0] == 0.0
    assert np.all(np.diff(curve.visibilities) > 0)


def test_kdtl_rejects_material_g2():
    with pytest.raises(DomainError):
        kdtl_visibility_vs_power(tl_setup(), C70, [0.1], VelocityDistribution(130.0))
