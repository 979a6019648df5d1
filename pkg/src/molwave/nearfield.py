"""Talbot-Lau and Kapitza-Dirac-Talbot-Lau fringe formation.

The density in the plane of the third grating is written as harmonics of
the fringe period D.  For an incoherent periodic source G1, harmonic k
factorizes into a G1 coefficient and a G2 "Talbot coefficient" B_m with
m = k r, where r is the (integer) ratio between the projected G2 period
and D.  B_m is evaluated in real space,

    B_m = (1/d) int t(x - tau) t*(x + tau) exp(-2 pi i m x / d) dx,
    tau = m lambda L_eff / (2 d),    L_eff = L12 L23 / (L12 + L23),

which equals the harmonic sum  sum_j b_j b*_{j-m} exp(-i pi lambda L_eff
(j^2 - (j-m)^2) / d^2)  without truncation.  The classical counterpart
replaces t(x - tau) t*(x + tau) by its small-tau limit, i.e. straight rays
with the eikonal deflection lambda phi'(x) / 2 pi.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np
from scipy import special

from .core import (CONST, DomainError, InterferencePattern, MaterialGrating, OpticalGrating,
                   Particle, VelocityDistribution, VisibilityCurve, de_broglie_wavelength)
from .farfield import DEFAULT_CUTOFF_PHASE, open_interval

PERIOD_TOL = 1e-4
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


@dataclass
class GratingCoefficients:
    """Fourier coefficients b_j, j = -J..J, of a periodic transmission."""

    b: np.ndarray
    period: float = 1.0

    @property
    def J(self) -> int:
        return (self.b.size - 1) // 2

    def __getitem__(self, j):
        j = np.asarray(j)
        J = self.J
        out = np.where(np.abs(j) <= J, self.b[np.clip(j + J, 0, 2 * J)], 0.0)
        return out[()] if out.ndim == 0 else out


def grating_fourier_coeffs(t_samples, J: int, period: float = 1.0) -> GratingCoefficients:
    """b_j by the trapezoidal rule over uniform samples of one period.

    The samples are taken at x_i = i d / N; for a periodic function the
    trapezoidal rule is the plain mean.  Jump discontinuities should carry
    the mid value for second-order accuracy.
    """
    t = np.asarray(t_samples, dtype=complex)
    N = t.size
    if N < 8 * J or J < 0:
        raise DomainError(f"need at least {8 * J} samples per period, got {N}")
    spec = np.fft.fft(t) / N
    j = np.arange(-J, J + 1)
    return GratingCoefficients(spec[j % N], period)


def binary_coefficients(f: float, J: int, period: float = 1.0) -> GratingCoefficients:
    j = np.arange(-J, J + 1)
    return GratingCoefficients((f * np.sinc(j * f)).astype(complex), period)


def optical_coefficients(phi0: float, J: int, period: float = 1.0) -> GratingCoefficients:
    """exp(i phi0 cos^2(pi x / d)) = e^{i phi0/2} sum_j i^j J_j(phi0/2) e^{2 pi i j x / d}."""
    j = np.arange(-J, J + 1)
    b = np.exp(0.5j * phi0) * (1j ** (j % 4)) * special.jv(j, 0.5 * phi0)
    return GratingCoefficients(b, period)


def talbot_coefficient_harmonic(b: GratingCoefficients, m: int, xi_eff: float) -> complex:
    """B_m as the coefficient sum with Talbot phases; xi_eff = lambda L_eff / d^2."""
    J = b.J
    j = np.arange(-J, J + 1)
    bj = b.b
    bjm = b[j - m]
    return complex(np.sum(bj * np.conj(bjm) * np.exp(-1j * np.pi * xi_eff * (j * j - (j - m) ** 2))))


# ------------------------------------------------------------ G2 models

class _SlitModel:
    """Periodic material grating transmission with the slit centered at x = 0."""

    def __init__(self, g: MaterialGrating, p: Optional[Particle], v: float, cutoff: float):
        self.d = g.period_d
        self.a = g.slit_width
        C3 = g.wall_constant(p)
        self.K = C3 * g.thickness_b / (CONST.hbar * v) if (C3 > 0 and g.thickness_b > 0) else 0.0
        lo, hi = open_interval(g, p, v, cutoff)
        self.h = 0.5 * (hi - lo)  # open region is [-h, h]

    def phase(self, y):
        if self.K == 0:
            return np.zeros_like(y)
        xi = y + 0.5 * self.a
        return self.K * (xi ** -3 + (self.a - xi) ** -3)

    def dphase(self, y):
        if self.K == 0:
            return np.zeros_like(y)
        xi = y + 0.5 * self.a
        return 3.0 * self.K * ((self.a - xi) ** -4 - xi ** -4)

    @property
    def open_fraction(self) -> float:
        return 2.0 * self.h / self.d


def _panels(lo, hi, n):
    e = np.linspace(lo, hi, n + 1)
    mid = 0.5 * (e[1:] + e[:-1])
    half = 0.5 * np.diff(e)
    x = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    w = (half[:, None] * _GL_W[None, :]).ravel()
    return x, w


def _material_B(model: _SlitModel, m: int, tau: float, panels: int = 48) -> complex:
    d, h = model.d, model.h
    if h <= 0:
        return 0j
    s = 2.0 * tau
    total = 0j
    # y in [-h, h] (first copy) and y + s - l d in [-h, h]
    lmin = math.floor((s - 2 * h) / d)
    lmax = math.ceil((s + 2 * h) / d)
    for l in range(lmin, lmax + 1):
        lo = max(-h, -h - s + l * d)
        hi = min(h, h - s + l * d)
        if hi <= lo:
            continue
        y, w = _panels(lo, hi, panels)
        y2 = y + s - l * d
        f = np.exp(1j * (model.phase(y) - model.phase(y2)) - 2j * np.pi * m * (y + tau) / d)
        total += np.sum(w * f)
    return total / d


def _material_C(model: _SlitModel, m: int, lever: float, panels: int = 48, step: float = 2.0) -> complex:
    """Classical coefficient; the ray shift in units of d is lever * phi' / (2 pi).

    The ray phase psi(y) = m lever phi'(y) + 2 pi m y / d is odd in y, so only
    [0, h] is integrated.  Near the wall psi grows like delta^-4 (delta is the
    wall distance), so panels uniform in delta^-4 keep about ``step`` radians
    each; a uniform set in y covers the slow linear part.
    """
    h, d = model.h, model.d
    if h <= 0:
        return 0j
    if model.K == 0 or m == 0:
        return complex(2.0 * h / d * np.sinc(2.0 * m * h / d))
    psi = lambda y: m * lever * model.dphase(y) + 2.0 * np.pi * m * y / d
    half_a = 0.5 * model.a
    u0, u1 = half_a ** -4, (half_a - h) ** -4
    n_edge = int(min(math.ceil(3.0 * model.K * abs(m * lever) * (u1 - u0) / step), 2_000_000))
    edges = np.linspace(0.0, h, panels + 1)
    if n_edge > 0:
        y_u = half_a - np.linspace(u0, u1, n_edge + 1) ** -0.25
        edges = np.unique(np.concatenate((edges, np.clip(y_u, 0.0, h))))
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * np.diff(edges)
    y = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    w = (half[:, None] * _GL_W[None, :]).ravel()
    return complex(2.0 * np.sum(w * np.cos(psi(y))) / d)


def _optical_B(phi0: float, m: int, tau: float, d: float) -> complex:
    return complex(special.jv(m, phi0 * math.sin(2.0 * math.pi * tau / d)))


def _optical_C(phi0: float, m: int, tau: float, d: float) -> complex:
    return complex(special.jv(m, phi0 * 2.0 * math.pi * tau / d))


# ------------------------------------------------------------ setup

@dataclass(frozen=True)
class TalbotSetup:
    """Three-grating arrangement.

    ``g1 = None`` means plane-wave illumination of G2.  ``g3_open_fraction``
    defaults to the G1 open fraction.
    """

    g1: Optional[MaterialGrating]
    g2: Union[MaterialGrating, OpticalGrating]
    g3_period: float
    geometry: "InterferometerGeometry"
    mode: str = "quantum"
    g3_open_fraction: Optional[float] = None

    def __post_init__(self):
        if self.mode not in ("quantum", "classical"):
            raise DomainError(f"unknown mode {self.mode!r}")
        if not self.g3_period > 0:
            raise DomainError("g3_period must be positive")

    @property
    def f3(self) -> float:
        if self.g3_open_fraction is not None:
            return self.g3_open_fraction
        return self.g1.open_fraction_f if self.g1 is not None else 1.0

    @property
    def d2(self) -> float:
        return self.g2.period_d

    def resonance(self):
        """(r, D): harmonic ratio and fringe period in the G3 plane."""
        L1, L2 = self.geometry.L12, self.geometry.L23
        if self.g1 is None:
            return 1, self.d2
        d1 = self.g1.period_d
        r_exact = self.d2 * (L1 + L2) / (d1 * L2)
        r = int(round(r_exact))
        if r < 1 or abs(r_exact - r) > PERIOD_TOL * r:
            raise DomainError(f"G2 period is not resonant with G1 (ratio {r_exact:.6g})")
        return r, d1 * L2 / L1

    def check_periods(self):
        r, D = self.resonance()
        if abs(self.g3_period - D) > PERIOD_TOL * D:
            raise DomainError(
                f"G3 period {self.g3_period:.6g} m does not match fringe period {D:.6g} m")
        return r, D

    def with_mode(self, mode: str) -> "TalbotSetup":
        return replace(self, mode=mode)

    def without_wall_interaction(self) -> "TalbotSetup":
        g2 = self.g2
        if isinstance(g2, MaterialGrating):
            g2 = replace(g2, C3=0.0)
        return replace(self, g2=g2)


def _mask_coeffs(f, k):
    return f * np.sinc(np.asarray(k) * f)


def absorption_factor(k, n0: float, shift: float, D: float):
    """Harmonic damping from Poisson(n0) photons with +-shift random recoil each."""
    if n0 == 0:
        return np.ones(np.shape(k))
    return np.exp(-n0 * (1.0 - np.cos(2.0 * np.pi * np.asarray(k) * shift / D)))


def _g2_state(setup: TalbotSetup, p: Particle, v: float, cutoff: float, v_ref):
    g2 = setup.g2
    if isinstance(g2, MaterialGrating):
        return _SlitModel(g2, p, v, cutoff), 0.0
    phi0, n0 = g2.at_velocity(v, v_ref)
    return phi0, n0


def _talbot_coefficients(setup: TalbotSetup, p: Particle, v: float, n_harmonics: int,
                         cutoff: float, mode: str, v_ref=None):
    """Density harmonics A_k, k = 0..n_harmonics, and the fringe period D."""
    r, D = setup.check_periods()
    lam = de_broglie_wavelength(p.mass, v)
    L1, L2 = setup.geometry.L12, setup.geometry.L23
    L_eff = L2 if setup.g1 is None else L1 * L2 / (L1 + L2)
    d2 = setup.d2
    state, n0 = _g2_state(setup, p, v, cutoff, v_ref)
    ks = np.arange(n_harmonics + 1)
    A = np.zeros(ks.size, dtype=complex)
    for k in ks:
        m = int(k * r)
        tau = m * lam * L_eff / (2.0 * d2)
        if isinstance(state, _SlitModel):
            if mode == "quantum":
                B = _material_B(state, m, tau)
            else:
                B = _material_C(state, m, lam * L_eff / d2)
        else:
            B = (_optical_B if mode == "quantum" else _optical_C)(state, m, tau, d2)
        a1 = 1.0 if setup.g1 is None else _mask_coeffs(setup.g1.open_fraction_f, k)
        A[k] = a1 * B
    if isinstance(setup.g2, OpticalGrating) and n0 > 0:
        shift = lam * L2 / setup.g2.laser_wavelength
        A *= absorption_factor(ks, n0, shift, D)
    A[0] = A[0].real
    return A, D


def _pattern(A, D, f3, n_samples=64):
    k = np.arange(A.size)
    S = A * _mask_coeffs(f3, k)
    return InterferencePattern(D, S, None, A).sampled(n_samples)


def talbot_lau_pattern(setup: TalbotSetup, p: Particle, v: float, n_harmonics: int = 8,
                       cutoff_phase: float = DEFAULT_CUTOFF_PHASE,
                       v_ref: Optional[float] = None) -> InterferencePattern:
    """Quantum fringe pattern in the G3 plane and the scanned signal S(x_s)."""
    if not v > 0:
        raise DomainError("velocity must be positive")
    A, D = _talbot_coefficients(setup, p, v, n_harmonics, cutoff_phase, "quantum", v_ref)
    return _pattern(A, D, setup.f3)


def classical_pattern(setup: TalbotSetup, p: Particle, v: float, n_harmonics: int = 8,
                      cutoff_phase: float = DEFAULT_CUTOFF_PHASE, method: str = "quadrature",
                      n_rays: int = 1_000_000, seed: int = 0,
                      v_ref: Optional[float] = None) -> InterferencePattern:
    """Ballistic (moire) pattern with the eikonal wall deflection inside G2.

    ``method='montecarlo'`` bins seeded random rays instead of using the
    deterministic quadrature; chunking is fixed so results do not depend on
    how the work is scheduled.
    """
    if not v > 0:
        raise DomainError("velocity must be positive")
    if method == "quadrature":
        A, D = _talbot_coefficients(setup, p, v, n_harmonics, cutoff_phase, "classical", v_ref)
    elif method == "montecarlo":
        A, D = _classical_montecarlo(setup, p, v, n_harmonics, cutoff_phase, n_rays, seed, v_ref)
    else:
        raise DomainError(f"unknown method {method!r}")
    return _pattern(A, D, setup.f3)


_MC_CHUNK = 1 << 16


def _classical_montecarlo(setup, p, v, n_harmonics, cutoff, n_rays, seed, v_ref):
    r, D = setup.check_periods()
    lam = de_broglie_wavelength(p.mass, v)
    L1, L2 = setup.geometry.L12, setup.geometry.L23
    d2 = setup.d2
    state, n0 = _g2_state(setup, p, v, cutoff, v_ref)
    if isinstance(state, _SlitModel):
        lo, hi = -state.h, state.h
        open_frac = state.open_fraction
        defl = lambda x: lam * state.dphase(x) / (2.0 * np.pi)
    else:
        lo, hi = -0.5 * d2, 0.5 * d2
        open_frac = 1.0
        phi0 = state
        defl = lambda x: -lam * 0.5 * phi0 * np.sin(2.0 * np.pi * x / d2) / d2
    if setup.g1 is not None:
        h1 = 0.5 * setup.g1.slit_width
        f1 = setup.g1.open_fraction_f
    ks = np.arange(n_harmonics + 1)
    acc = np.zeros(ks.size, dtype=complex)
    n_chunks = -(-n_rays // _MC_CHUNK)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    done = 0
    for child in children:
        n = min(_MC_CHUNK, n_rays - done)
        rng = np.random.Generator(np.random.Philox(child))
        x = lo + (hi - lo) * rng.random(n)
        if setup.g1 is None:
            x3 = x + defl(x) * L2
        else:
            x0 = -h1 + 2.0 * h1 * rng.random(n)
            x3 = x + (x - x0) * L2 / L1 + defl(x) * L2
        acc += np.exp(-2j * np.pi * np.outer(ks, x3) / D).sum(axis=1)
        done += n
    A0 = open_frac * (1.0 if setup.g1 is None else f1)
    A = A0 * acc / n_rays
    if isinstance(setup.g2, OpticalGrating) and n0 > 0:
        A *= absorption_factor(ks, n0, lam * L2 / setup.g2.laser_wavelength, D)
    A[0] = A[0].real
    return A, D


def self_image_coefficients(g2: Union[MaterialGrating, OpticalGrating], p: Particle, v: float,
                            L: float, n_harmonics: int = 8,
                            cutoff_phase: float = DEFAULT_CUTOFF_PHASE) -> np.ndarray:
    """Intensity harmonics at distance L behind G2 under plane-wave illumination."""
    from .core import InterferometerGeometry
    setup = TalbotSetup(None, g2, g2.period_d, InterferometerGeometry(L, L))
    A, _ = _talbot_coefficients(setup, p, v, n_harmonics, cutoff_phase, "quantum")
    return A


def averaged_pattern(setup: TalbotSetup, p: Particle, v_dist: VelocityDistribution,
                     n_nodes: int = 24, n_harmonics: int = 1, mode: Optional[str] = None,
                     cutoff_phase: float = DEFAULT_CUTOFF_PHASE) -> InterferencePattern:
    """Scanned signal harmonics averaged incoherently over the velocity distribution."""
    mode = mode or setup.mode
    vs, ws = v_dist.nodes(n_nodes)
    S = None
    D = None
    for v, w in zip(vs, ws):
        A, D = _talbot_coefficients(setup, p, v, n_harmonics, cutoff_phase, mode, v_dist.mean_v)
        term = w * A * _mask_coeffs(setup.f3, np.arange(A.size))
        S = term if S is None else S + term
    return InterferencePattern(D, S)


def _visibility(S) -> float:
    return float(min(2.0 * abs(S[1]) / S[0].real, 1.0)) if S[0].real > 0 else 0.0


CURVE_KEYS = ("quantum_vdw", "quantum_point", "classical_vdw", "classical_point")


def visibility_vs_velocity(setup: TalbotSetup, p: Particle, v_grid: Sequence[float],
                           v_spread_rel: Union[float, Sequence[float]] = 0.0,
                           n_nodes: int = 24, curves: Sequence[str] = CURVE_KEYS,
                           cutoff_phase: float = DEFAULT_CUTOFF_PHASE,
                           threads: int = 1) -> dict:
    """Visibility against mean velocity for quantum/classical x wall-on/off.

    At each mean velocity the scanned-signal harmonics are averaged over a
    Gaussian of relative width ``v_spread_rel`` (standard deviation).
    """
    v_grid = np.asarray(v_grid, dtype=float)
    if v_grid.size == 0:
        raise DomainError("empty velocity grid")
    if np.any(np.diff(v_grid) <= 0):
        raise DomainError("velocity grid must be ascending")
    spread = np.broadcast_to(np.asarray(v_spread_rel, dtype=float), v_grid.shape)
    if np.any(spread < 0):
        raise DomainError("velocity spread must be >= 0")
    point_setup = setup.without_wall_interaction()
    point_p = replace(p, C3_wall=0.0)
    variants = {
        "quantum_vdw": (setup, p, "quantum"),
        "quantum_point": (point_setup, point_p, "quantum"),
        "classical_vdw": (setup, p, "classical"),
        "classical_point": (point_setup, point_p, "classical"),
    }

    def one(args):
        key, i = args
        s, pp, mode = variants[key]
        dist = VelocityDistribution(v_grid[i], spread[i] * v_grid[i])
        pat = averaged_pattern(s, pp, dist, n_nodes, 1, mode, cutoff_phase)
        return _visibility(pat.fourier_coeffs)

    jobs = [(key, i) for key in curves for i in range(v_grid.size)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            vals = list(ex.map(one, jobs))
    else:
        vals = [one(j) for j in jobs]
    out = {}
    for n, key in enumerate(curves):
        vis = vals[n * v_grid.size:(n + 1) * v_grid.size]
        out[key] = VisibilityCurve("velocity_mps", v_grid, np.array(vis), label=key)
    return out


# ------------------------------------------------------------ KDTLI

def kdtl_phase(power: float, alpha_re: float, waist_y: float, v: float) -> float:
    """Peak eikonal phase of a retro-reflected Gaussian standing wave.

    The time-averaged dipole potential is -Re(alpha) I / (2 c eps0); the
    beam waist along the flight direction integrates out.
    """
    return 4.0 * math.sqrt(2.0 * math.pi) * alpha_re * power / (
        CONST.h * CONST.c * CONST.eps0 * waist_y * v)


def kdtl_mean_photons(power: float, sigma_abs: float, laser_wavelength: float,
                      waist_y: float, v: float) -> float:
    """Mean absorbed photon number, averaged over the standing-wave position."""
    antinode = 8.0 * sigma_abs * power * laser_wavelength / (
        math.sqrt(2.0 * math.pi) * CONST.h * CONST.c * waist_y * v)
    return 0.5 * antinode


def absorption_cross_section(alpha_optical: complex, laser_wavelength: float) -> float:
    """sigma = k Im(alpha) / eps0."""
    return 2.0 * math.pi / laser_wavelength * alpha_optical.imag / CONST.eps0


def kdtl_visibility_vs_power(setup: TalbotSetup, p: Particle, powers: Sequence[float],
                             v_dist: VelocityDistribution, n_nodes: int = 16,
                             threads: int = 1) -> VisibilityCurve:
    """Visibility of the KDTLI signal against laser power.

    phi0 follows Re(alpha_optical); absorption uses ``p.sigma_abs_laser``
    when set, otherwise k Im(alpha_optical)/eps0.
    """
    g2 = setup.g2
    if not isinstance(g2, OpticalGrating):
        raise DomainError("KDTLI requires an optical G2")
    if g2.waist_y <= 0:
        raise DomainError("laser waist_y must be positive")
    powers = np.asarray(powers, dtype=float)
    if np.any(powers < 0):
        raise DomainError("laser power must be >= 0")
    sigma = p.sigma_abs_laser if p.sigma_abs_laser > 0 else \
        absorption_cross_section(complex(p.alpha_optical), g2.laser_wavelength)
    vs, ws = v_dist.nodes(n_nodes)
    vref = v_dist.mean_v

    def one(P):
        phi_ref = kdtl_phase(P, complex(p.alpha_optical).real, g2.waist_y, vref)
        n_ref = kdtl_mean_photons(P, sigma, g2.laser_wavelength, g2.waist_y, vref)
        g = replace(g2, phase_amplitude_phi0=abs(phi_ref), mean_absorbed_photons_n0=max(n_ref, 0.0),
                    power=P, reference_velocity=vref)
        s = replace(setup, g2=g)
        S = None
        for v, w in zip(vs, ws):
            A, _ = _talbot_coefficients(s, p, v, 1, DEFAULT_CUTOFF_PHASE, setup.mode, vref)
            term = w * A * _mask_coeffs(s.f3, np.arange(2))
            S = term if S is None else S + term
        return _visibility(S)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            vis = list(ex.map(one, powers))
    else:
        vis = [one(P) for P in powers]
    return VisibilityCurve("power_W", powers, np.array(vis))
