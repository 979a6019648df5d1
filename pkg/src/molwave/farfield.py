"""Fraunhofer diffraction behind material and standing-light-wave gratings."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special, stats

from .core import (CONST, DomainError, MaterialGrating, OpticalGrating, Particle,
                   VelocityDistribution, de_broglie_wavelength)

DEFAULT_CUTOFF_PHASE = 20.0


@dataclass
class SlitTransmission:
    """Complex transmission sampled at cell midpoints across one slit of width ``a``."""

    grid: np.ndarray
    t: np.ndarray
    a: float
    phase: Optional[np.ndarray] = None

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.t = np.asarray(self.t, dtype=complex)
        if self.grid.shape != self.t.shape:
            raise DomainError("grid and transmission differ in length")
        if np.any(np.abs(self.t) > 1 + 1e-12):
            raise DomainError("|t| exceeds one")
        if self.phase is None:
            self.phase = np.angle(self.t)

    @property
    def step(self) -> float:
        return self.a / self.grid.size

    def amplitude(self, q):
        """Slit Fourier integral  int t(xi) exp(-2 pi i q xi) dxi  at spatial frequency q.

        Each cell is treated as piecewise constant, so a fully open slit gives
        the exact sinc.  The origin is the slit center.
        """
        q = np.asarray(q, dtype=float)
        h = self.step
        x = self.grid - 0.5 * self.a
        open_ = np.abs(self.t) > 0
        x, t = x[open_], self.t[open_]
        out = np.empty(q.shape, dtype=complex)
        flat_q, flat_out = q.ravel(), out.ravel()
        chunk = max(1, 2_000_000 // max(x.size, 1))
        for i in range(0, flat_q.size, chunk):
            qq = flat_q[i:i + chunk]
            ph = np.exp(-2j * np.pi * np.multiply.outer(qq, x))
            flat_out[i:i + chunk] = (ph @ t) * h * np.sinc(qq * h)
        return out


@dataclass
class FarFieldPattern:
    """Angular intensity normalized to unit maximum.

    ``norm`` converts back to a probability density per radian, so
    ``intensity * norm`` integrates to the transmitted fraction.
    """

    angles: np.ndarray
    intensity: np.ndarray
    norm: float = 1.0

    def __post_init__(self):
        self.angles = np.asarray(self.angles, dtype=float)
        self.intensity = np.asarray(self.intensity, dtype=float)
        if self.angles.shape != self.intensity.shape:
            raise DomainError("angles and intensity differ in length")

    @property
    def density(self) -> np.ndarray:
        return self.intensity * self.norm

    def total(self) -> float:
        return _trapz(self.density, self.angles)

    def value_near(self, theta: float, half_width: float) -> float:
        """Largest normalized intensity within theta +- half_width."""
        m = np.abs(self.angles - theta) <= half_width
        if not np.any(m):
            raise DomainError("no grid point near requested angle")
        return float(self.intensity[m].max())


def _normalized(angles, dens) -> FarFieldPattern:
    peak = float(dens.max())
    if not peak > 0:
        return FarFieldPattern(angles, np.zeros_like(dens), 0.0)
    return FarFieldPattern(angles, dens / peak, peak)


def _trapz(y, x):
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


# ------------------------------------------------------------------ slits

def wall_phase(xi, a, C3, b, v):
    """Eikonal phase from both walls of a slit, xi measured from one wall."""
    xi = np.asarray(xi, dtype=float)
    return C3 * b / (CONST.hbar * v) * (xi ** -3 + (a - xi) ** -3)


def open_interval(g: MaterialGrating, p: Optional[Particle], v: float,
                  cutoff_phase: float = DEFAULT_CUTOFF_PHASE):
    """Edges (xi_lo, xi_hi) of the transmitting region, measured from one wall."""
    a = g.slit_width
    C3 = g.wall_constant(p)
    if C3 == 0 or g.thickness_b == 0:
        return 0.0, a
    k = C3 * g.thickness_b / (CONST.hbar * v)
    # phase is smallest at the center; solve k (x^-3 + (a-x)^-3) = cutoff on (0, a/2]
    if 16.0 * k / a ** 3 >= cutoff_phase:
        return 0.5 * a, 0.5 * a
    from scipy.optimize import brentq
    f = lambda x: k * (x ** -3 + (a - x) ** -3) - cutoff_phase
    lo = brentq(f, 0.5 * (k / cutoff_phase) ** (1 / 3), 0.5 * a,
                xtol=1e-15 * a, rtol=4 * np.finfo(float).eps)
    return lo, a - lo


def vdw_slit_transmission(g: MaterialGrating, p: Particle, v: float,
                          cutoff_phase: float = DEFAULT_CUTOFF_PHASE,
                          n_samples: int = 1024) -> SlitTransmission:
    """Slit transmission dressed by the wall potential -C3/r^3 (eikonal)."""
    if not v > 0:
        raise DomainError("velocity must be positive")
    if n_samples < 256:
        raise DomainError("need at least 256 samples per slit")
    C3 = g.wall_constant(p)
    if C3 < 0:
        raise DomainError("C3 must be >= 0")
    a = g.slit_width
    xi = (np.arange(n_samples) + 0.5) * a / n_samples
    if C3 == 0 or g.thickness_b == 0:
        return SlitTransmission(xi, np.ones(n_samples, complex), a, np.zeros(n_samples))
    phi = wall_phase(xi, a, C3, g.thickness_b, v)
    t = np.where(np.abs(phi) > cutoff_phase, 0.0, np.exp(1j * phi))
    return SlitTransmission(xi, t, a, phi)


def effective_slit_width(st: SlitTransmission, threshold_phase: float = math.pi) -> float:
    """Width of the central contiguous region with |phase| < threshold and |t| > 0."""
    good = (np.abs(st.phase) < threshold_phase) & (np.abs(st.t) > 0)
    n = good.size
    c = n // 2
    if not (good[c] or good[c - 1 if n % 2 == 0 else c]):
        return 0.0
    start = c if good[c] else c - 1
    lo = start
    while lo > 0 and good[lo - 1]:
        lo -= 1
    hi = start
    while hi < n - 1 and good[hi + 1]:
        hi += 1
    return (hi - lo + 1) * st.step


# ------------------------------------------------------------- patterns

def _grating_factor_sq(q, d, n_slits):
    """|sum_{n<N} exp(-2 pi i q n d)|^2."""
    r = q * d - np.round(q * d)
    s = np.sin(np.pi * r)
    small = np.abs(s) < 1e-12
    ratio = np.where(small, float(n_slits), np.sin(np.pi * n_slits * r) / np.where(small, 1.0, s))
    return ratio ** 2


def _tophat(angles, dens, width):
    """Moving average of width ``width`` evaluated on ``angles`` (uniform)."""
    if width <= 0:
        return dens
    cum = np.concatenate(([0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(angles))))
    hi = np.interp(angles + 0.5 * width, angles, cum)
    lo = np.interp(angles - 0.5 * width, angles, cum)
    return (hi - lo) / width


def default_angles(v_dist: VelocityDistribution, p: Particle, width: float, n: int = 2048):
    lam = de_broglie_wavelength(p.mass, v_dist.mean_v)
    span = 5.0 * lam / width
    return np.linspace(-span, span, n)


def farfield_material(g: MaterialGrating, p: Particle, v_dist: VelocityDistribution,
                      collimation: float = 0.0, n_slits: int = 100,
                      angles: Optional[np.ndarray] = None, n_angles: int = 2048,
                      cutoff_phase: float = DEFAULT_CUTOFF_PHASE, n_nodes: int = 64,
                      n_samples: int = 1024, oversample: int = 8) -> FarFieldPattern:
    """Velocity- and collimation-averaged far-field pattern of an N-slit grating.

    Intensity per velocity is (1/lambda)|F(theta/lambda)|^2 |G_N|^2 with F
    the slit amplitude and G_N the N-slit array factor.  The result is a
    density per radian (see ``FarFieldPattern.norm``) per incident slit area.
    """
    if n_slits < 1:
        raise DomainError("n_slits must be >= 1")
    if collimation < 0:
        raise DomainError("collimation must be >= 0")
    if v_dist.v_max <= 0:
        raise DomainError("empty velocity window")
    if angles is None:
        angles = default_angles(v_dist, p, g.slit_width, n_angles)
    angles = np.asarray(angles, dtype=float)
    vs, ws = v_dist.nodes(n_nodes)
    d = g.period_d

    # fine internal grid resolving the N-slit peaks, extended for the top-hat
    lam_min = de_broglie_wavelength(p.mass, vs.max())
    step_out = np.min(np.diff(angles)) if angles.size > 1 else lam_min / d
    peak_w = lam_min / (n_slits * d)
    fine_step = min(step_out, peak_w / oversample) if collimation > 0 else None
    if fine_step is not None:
        lo = angles.min() - collimation
        hi = angles.max() + collimation
        n_f = int(math.ceil((hi - lo) / fine_step)) + 1
        work = np.linspace(lo, hi, min(n_f, 400_000))
    else:
        work = angles

    dens = np.zeros_like(work)
    for v, w in zip(vs, ws):
        lam = de_broglie_wavelength(p.mass, v)
        st = vdw_slit_transmission(g, p, v, cutoff_phase, n_samples)
        q = work / lam
        amp = st.amplitude(q)
        dens += w * np.abs(amp) ** 2 * _grating_factor_sq(q, d, n_slits) / lam
    dens /= n_slits * g.slit_width
    if fine_step is not None:
        dens = np.interp(angles, work, _tophat(work, dens, collimation))
    return _normalized(angles, dens)


def _box_deposit(edges, centers, weights, width):
    """Histogram density of weighted boxes [c - w/2, c + w/2] on cell ``edges``."""
    out = np.zeros(edges.size - 1)
    cell = np.diff(edges)
    if width <= 0:
        idx = np.searchsorted(edges, centers, side="right") - 1
        ok = (idx >= 0) & (idx < out.size)
        np.add.at(out, idx[ok], weights[ok])
        return out / cell
    lo = centers - 0.5 * width
    hi = centers + 0.5 * width
    i0 = np.clip(np.searchsorted(edges, lo, side="right") - 1, 0, out.size - 1)
    i1 = np.clip(np.searchsorted(edges, hi, side="right") - 1, 0, out.size - 1)
    for a, b, c0, c1, wt in zip(lo, hi, i0, i1, weights):
        for k in range(c0, c1 + 1):
            ov = min(b, edges[k + 1]) - max(a, edges[k])
            if ov > 0:
                out[k] += wt * ov / width
    return out / cell


def optical_order_weights(phi0: float, tol: float = 1e-15):
    """Diffraction orders n and probabilities J_n(phi0/2)^2 of the phase grating."""
    if phi0 < 0:
        raise DomainError("phi0 must be >= 0")
    z = 0.5 * phi0
    nmax = int(z + 10.0 * max(z, 1.0) ** (1 / 3) + 20)
    n = np.arange(-nmax, nmax + 1)
    p = special.jv(n, z) ** 2
    keep = p > tol * p.max()
    return n[keep], p[keep]


def recoil_shift_weights(n0: float, tail: float = 1e-9, statistics: str = "poisson",
                         recoil: str = "symmetric"):
    """Distribution of net recoil (in half grating periods) after absorption.

    Photon number is Poisson(n0) (or exactly n0 for ``statistics='fixed'``);
    each photon kicks by +1 or -1 with equal probability (``'plus'`` forces +1).
    Returns integer shifts and weights summing to one.
    """
    if n0 < 0:
        raise DomainError("n0 must be >= 0")
    if statistics == "fixed":
        if n0 != int(n0):
            raise DomainError("fixed photon number must be an integer")
        kmax = int(n0)
        pk = np.zeros(kmax + 1)
        pk[kmax] = 1.0
    elif statistics == "poisson":
        kmax = int(stats.poisson.ppf(1.0 - tail, n0)) + 1 if n0 > 0 else 0
        while stats.poisson.cdf(kmax, n0) <= 1.0 - tail:
            kmax += 1
        pk = stats.poisson.pmf(np.arange(kmax + 1), n0)
        pk = pk / pk.sum()
    else:
        raise DomainError(f"unknown photon statistics {statistics!r}")
    shifts = np.arange(-kmax, kmax + 1)
    w = np.zeros(shifts.size)
    for k in range(kmax + 1):
        if pk[k] == 0:
            continue
        if recoil == "plus":
            w[k + kmax] += pk[k]
        elif recoil == "symmetric":
            kp = np.arange(k + 1)
            w[2 * kp - k + kmax] += pk[k] * stats.binom.pmf(kp, k, 0.5)
        else:
            raise DomainError(f"unknown recoil model {recoil!r}")
    keep = w > 0
    return shifts[keep], w[keep] / w[keep].sum()


def apply_shift_distribution(base: FarFieldPattern, shifts, weights, period_shift: float,
                             renormalize: bool = True) -> FarFieldPattern:
    """Incoherent mixture sum_j w_j I(theta - j*period_shift) (zero outside the grid)."""
    dens = np.zeros_like(base.angles)
    for s, w in zip(shifts, weights):
        dens += w * np.interp(base.angles - s * period_shift, base.angles, base.density,
                              left=0.0, right=0.0)
    if not renormalize:
        return FarFieldPattern(base.angles, dens, 1.0)
    return _normalized(base.angles, dens)


def absorption_shifted_pattern(base: FarFieldPattern, n0: float, period_shift: float,
                               statistics: str = "poisson", recoil: str = "symmetric"
                               ) -> FarFieldPattern:
    """Blur ``base`` by photon-absorption recoil; each photon shifts by +-period_shift."""
    if n0 == 0:
        return FarFieldPattern(base.angles.copy(), base.intensity.copy(), base.norm)
    shifts, w = recoil_shift_weights(n0, statistics=statistics, recoil=recoil)
    return apply_shift_distribution(base, shifts, w, period_shift)


def farfield_optical(g: OpticalGrating, p: Particle, v_dist: VelocityDistribution,
                     collimation: float = 0.0, angles: Optional[np.ndarray] = None,
                     n_angles: int = 2048, n_nodes: int = 64,
                     absorption: bool = True) -> FarFieldPattern:
    """Far field behind a standing light wave of period lambda_L/2.

    Each order n sits at n*lambda/(lambda_L/2) with weight J_n(phi0/2)^2 and
    is smeared by a top-hat of the collimation width.  Absorbed photons add
    +-lambda/lambda_L recoil; phi0 and n0 scale as 1/v about the reference
    velocity.
    """
    if g.phase_amplitude_phi0 < 0:
        raise DomainError("phi0 must be >= 0")
    if collimation < 0:
        raise DomainError("collimation must be >= 0")
    vs, ws = v_dist.nodes(n_nodes)
    if angles is None:
        lam = de_broglie_wavelength(p.mass, v_dist.mean_v)
        span = max(6.0, g.phase_amplitude_phi0) * lam / g.period_d
        angles = np.linspace(-span, span, n_angles)
    angles = np.asarray(angles, dtype=float)
    h = np.diff(angles)
    edges = np.concatenate(([angles[0] - 0.5 * h[0]], 0.5 * (angles[1:] + angles[:-1]),
                            [angles[-1] + 0.5 * h[-1]]))
    centers, weights = [], []
    for v, w in zip(vs, ws):
        lam = de_broglie_wavelength(p.mass, v)
        phi0, n0 = g.at_velocity(v, v_dist.mean_v)
        orders, pw = optical_order_weights(phi0)
        theta = orders * lam / g.period_d
        if absorption and n0 > 0:
            sh, sw = recoil_shift_weights(n0)
            theta = (theta[:, None] + sh[None, :] * lam / g.laser_wavelength).ravel()
            pw = (pw[:, None] * sw[None, :]).ravel()
        centers.append(theta)
        weights.append(w * pw)
    dens = _box_deposit(edges, np.concatenate(centers), np.concatenate(weights), collimation)
    return _normalized(angles, dens)
