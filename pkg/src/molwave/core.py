"""Constants, domain types and elementary matter-wave relations.

Everything is SI internally. Convenience conversions (amu, cubic angstrom
polarizabilities, meV nm^3 wall constants) live here so the configuration
layer can convert at the boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.constants as sc
from scipy import special, stats


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


@dataclass(frozen=True)
class PhysicalConstants:
    h: float
    hbar: float
    k_B: float
    c: float
    amu: float
    g_earth: float
    Omega0: float
    eps0: float

    def __post_init__(self):
        for name in ("h", "hbar", "k_B", "c", "amu", "g_earth", "Omega0", "eps0"):
            if not getattr(self, name) > 0:
                raise DomainError(f"constant {name} must be positive")


CONST = PhysicalConstants(
    h=sc.h,
    hbar=sc.h / (2.0 * math.pi),
    k_B=sc.k,
    c=sc.c,
    amu=sc.physical_constants["atomic mass constant"][0],
    g_earth=sc.g,
    Omega0=7.2921159e-5,
    eps0=sc.epsilon_0,
)

AMU = CONST.amu
EV = sc.electron_volt
# 1 meV nm^3 in J m^3
MEV_NM3 = 1e-3 * EV * 1e-27


def alpha_from_volume(alpha_A3: complex) -> complex:
    """Convert a polarizability volume in cubic angstrom to C m^2/V."""
    return 4.0 * math.pi * CONST.eps0 * alpha_A3 * 1e-30


def alpha_to_volume(alpha_si: complex) -> complex:
    return alpha_si / (4.0 * math.pi * CONST.eps0 * 1e-30)


# Internal heating per absorbed energy for C70: about 170 K for one 514 nm photon.
C70_CALORIC_SLOPE_K_PER_EV = 170.0 / (CONST.h * CONST.c / 514e-9 / EV)


@dataclass(frozen=True)
class Particle:
    """The molecule under test.

    ``emission_model`` is any object with a ``sigma(lambda_m)`` method and a
    ``cutoff_wavelength`` attribute; see :class:`molwave.decoherence.EmissionSpectrum`.
    """

    mass: float
    alpha_static: float = 0.0
    alpha_optical: complex = 0j
    sigma_abs_laser: float = 0.0
    C3_wall: float = 0.0
    internal_temperature: float = 0.0
    caloric_slope: float = C70_CALORIC_SLOPE_K_PER_EV
    emission_model: Optional[object] = None
    name: str = ""

    def __post_init__(self):
        if not self.mass > 0:
            raise DomainError("mass must be positive")
        if self.internal_temperature < 0:
            raise DomainError("internal_temperature must be >= 0")
        if self.sigma_abs_laser < 0:
            raise DomainError("sigma_abs_laser must be >= 0")
        if self.C3_wall < 0:
            raise DomainError("C3_wall must be >= 0")
        if self.caloric_slope < 0:
            raise DomainError("caloric_slope must be >= 0")


@dataclass(frozen=True)
class VelocityDistribution:
    """Truncated longitudinal velocity distribution.

    ``gaussian`` is a normal density with standard deviation ``sigma_v``.
    ``effusive_flux`` is the flux-weighted Maxwellian v^3 exp(-v^2/alpha^2);
    its width is fixed by the mean (alpha = 4 mean / (3 sqrt(pi))), so
    ``sigma_v`` only records the implied spread.
    """

    mean_v: float
    sigma_v: float = 0.0
    shape: str = "gaussian"
    v_min: Optional[float] = None
    v_max: Optional[float] = None

    def __post_init__(self):
        if not self.mean_v > 0:
            raise DomainError("mean_v must be positive")
        if self.sigma_v < 0:
            raise DomainError("sigma_v must be >= 0")
        if self.shape not in ("gaussian", "effusive_flux"):
            raise DomainError(f"unknown velocity shape {self.shape!r}")
        if self.shape == "effusive_flux":
            object.__setattr__(self, "sigma_v", self._effusive_sigma())
        lo, hi = self._default_window()
        if self.v_min is None:
            object.__setattr__(self, "v_min", lo)
        if self.v_max is None:
            object.__setattr__(self, "v_max", hi)
        if self.v_min < 0:
            raise DomainError("v_min must be >= 0")
        if not self.v_min < self.v_max:
            raise DomainError("v_min must be below v_max")

    @classmethod
    def effusive(cls, T: float, mass: float, v_min=None, v_max=None) -> "VelocityDistribution":
        alpha = math.sqrt(2.0 * CONST.k_B * T / mass)
        return cls(mean_v=0.75 * math.sqrt(math.pi) * alpha, shape="effusive_flux",
                   v_min=v_min, v_max=v_max)

    @property
    def alpha(self) -> float:
        return 4.0 * self.mean_v / (3.0 * math.sqrt(math.pi))

    def _effusive_sigma(self) -> float:
        a = self.alpha
        # <v^2> = 2 a^2 for v^3 exp(-v^2/a^2)
        return math.sqrt(max(2.0 * a * a - self.mean_v ** 2, 0.0))

    def _default_window(self):
        if self.sigma_v == 0:
            eps = 1e-9 * self.mean_v
            return self.mean_v - eps, self.mean_v + eps
        if self.shape == "gaussian":
            return max(0.0, self.mean_v - 5.0 * self.sigma_v), self.mean_v + 5.0 * self.sigma_v
        return 0.0, 4.5 * self.alpha

    @property
    def is_monochromatic(self) -> bool:
        return self.sigma_v == 0

    def _cdf_raw(self, v):
        v = np.asarray(v, dtype=float)
        if self.shape == "gaussian":
            return stats.norm.cdf(v, loc=self.mean_v, scale=self.sigma_v)
        # v^2 ~ Gamma(2, alpha^2)
        return special.gammainc(2.0, (v / self.alpha) ** 2)

    def _pdf_raw(self, v):
        v = np.asarray(v, dtype=float)
        if self.shape == "gaussian":
            return stats.norm.pdf(v, loc=self.mean_v, scale=self.sigma_v)
        a = self.alpha
        return np.where(v >= 0, 2.0 * v ** 3 / a ** 4 * np.exp(-(v / a) ** 2), 0.0)

    def _mass(self) -> float:
        return float(self._cdf_raw(self.v_max) - self._cdf_raw(self.v_min))

    def pdf(self, v):
        """Normalized density on the truncation window (zero outside)."""
        if self.is_monochromatic:
            raise DomainError("a monochromatic distribution has no density")
        v = np.asarray(v, dtype=float)
        inside = (v >= self.v_min) & (v <= self.v_max)
        return np.where(inside, self._pdf_raw(v) / self._mass(), 0.0)

    def cdf(self, v):
        v = np.clip(np.asarray(v, dtype=float), self.v_min, self.v_max)
        if self.is_monochromatic:
            return np.where(v >= self.mean_v, 1.0, 0.0)
        return (self._cdf_raw(v) - self._cdf_raw(self.v_min)) / self._mass()

    def nodes(self, n: int = 64):
        """Quadrature nodes and weights (weights sum to one)."""
        if self.is_monochromatic or n == 1:
            return np.array([self.mean_v]), np.array([1.0])
        x, w = np.polynomial.legendre.leggauss(n)
        half = 0.5 * (self.v_max - self.v_min)
        v = self.v_min + half * (x + 1.0)
        wt = w * half * self._pdf_raw(v)
        return v, wt / wt.sum()

    def ppf(self, q):
        """Inverse of :meth:`cdf` on the truncation window."""
        q = np.asarray(q, dtype=float)
        if np.any((q < 0) | (q > 1)):
            raise DomainError("quantiles must lie in [0, 1]")
        if self.is_monochromatic:
            return np.full(q.shape, self.mean_v)[()]
        lo, hi = self._cdf_raw(self.v_min), self._cdf_raw(self.v_max)
        u = lo + (hi - lo) * q
        if self.shape == "gaussian":
            v = stats.norm.ppf(u, loc=self.mean_v, scale=self.sigma_v)
        else:
            v = self.alpha * np.sqrt(special.gammaincinv(2.0, u))
        return np.clip(v, self.v_min, self.v_max)[()]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.is_monochromatic:
            return np.full(size, self.mean_v)
        return np.atleast_1d(self.ppf(rng.random(size)))

    def mean_inverse_square(self, n: int = 64) -> float:
        v, w = self.nodes(n)
        return float(np.sum(w / v ** 2))


@dataclass(frozen=True)
class MaterialGrating:
    """Nanofabricated grating. ``C3`` of ``None`` defers to the particle's wall constant."""

    period_d: float
    open_fraction_f: float
    thickness_b: float = 0.0
    C3: Optional[float] = None

    def __post_init__(self):
        if not self.period_d > 0:
            raise DomainError("period_d must be positive")
        if not 0 < self.open_fraction_f < 1:
            raise DomainError("open_fraction_f must lie in (0, 1)")
        if self.thickness_b < 0:
            raise DomainError("thickness_b must be >= 0")
        if self.C3 is not None and self.C3 < 0:
            raise DomainError("C3 must be >= 0")

    @property
    def slit_width(self) -> float:
        return self.open_fraction_f * self.period_d

    def wall_constant(self, p: Optional[Particle] = None) -> float:
        if self.C3 is not None:
            return self.C3
        return p.C3_wall if p is not None else 0.0


@dataclass(frozen=True)
class OpticalGrating:
    """Standing light wave phase grating.

    ``phase_amplitude_phi0`` and ``mean_absorbed_photons_n0`` refer to
    ``reference_velocity``; both scale as 1/v.  ``None`` for the reference
    velocity means the mean of whatever velocity distribution is in use.
    """

    laser_wavelength: float
    phase_amplitude_phi0: float = 0.0
    mean_absorbed_photons_n0: float = 0.0
    power: float = 0.0
    waist_y: float = 0.0
    waist_z: float = 0.0
    reference_velocity: Optional[float] = None

    def __post_init__(self):
        if not self.laser_wavelength > 0:
            raise DomainError("laser_wavelength must be positive")
        if self.phase_amplitude_phi0 < 0:
            raise DomainError("phase_amplitude_phi0 must be >= 0")
        if self.mean_absorbed_photons_n0 < 0:
            raise DomainError("mean_absorbed_photons_n0 must be >= 0")
        if self.power < 0:
            raise DomainError("power must be >= 0")

    @property
    def period_d(self) -> float:
        return 0.5 * self.laser_wavelength

    def at_velocity(self, v: float, v_ref: Optional[float] = None):
        """(phi0, n0) for a molecule of speed v."""
        ref = self.reference_velocity or v_ref or v
        scale = ref / v
        return self.phase_amplitude_phi0 * scale, self.mean_absorbed_photons_n0 * scale


@dataclass(frozen=True)
class InterferometerGeometry:
    L12: float
    L23: float
    tilt_theta: float = 0.0
    orientation_phi: float = 0.0
    collimation_angle: float = 0.0

    def __post_init__(self):
        if not (self.L12 > 0 and self.L23 > 0):
            raise DomainError("grating separations must be positive")
        if self.collimation_angle < 0:
            raise DomainError("collimation_angle must be >= 0")

    @property
    def L_eff(self) -> float:
        return self.L12 * self.L23 / (self.L12 + self.L23)

    @property
    def total_length(self) -> float:
        return self.L12 + self.L23


@dataclass
class InterferencePattern:
    """Periodic count-rate pattern.

    ``fourier_coeffs[m]`` is the m-th harmonic of the scanned signal S(x_s),
    m = 0..M; negative harmonics follow from hermiticity.  ``density_coeffs``
    optionally holds the harmonics of the molecular density before the
    scanning mask.
    """

    period: float
    fourier_coeffs: Optional[np.ndarray] = None
    samples: Optional[tuple] = None
    density_coeffs: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.period > 0:
            raise DomainError("period must be positive")
        if self.fourier_coeffs is not None:
            c = np.asarray(self.fourier_coeffs, dtype=complex)
            if c.size and (c[0].real < 0 or abs(c[0].imag) > 1e-12 * max(abs(c[0]), 1e-300)):
                raise DomainError("A_0 must be real and non-negative")
            if c.size:
                c[0] = c[0].real
            self.fourier_coeffs = c

    def signal(self, x) -> np.ndarray:
        """S(x) reconstructed from the harmonics."""
        if self.fourier_coeffs is None:
            raise DomainError("pattern has no Fourier coefficients")
        x = np.asarray(x, dtype=float)
        c = self.fourier_coeffs
        m = np.arange(1, c.size)
        ph = np.exp(2j * np.pi * np.multiply.outer(x, m) / self.period)
        return c[0].real + 2.0 * np.real(ph @ c[1:]) if c.size > 1 else np.full(x.shape, c[0].real)

    def sampled(self, n: int = 64) -> "InterferencePattern":
        x = np.arange(n) * self.period / n
        return InterferencePattern(self.period, self.fourier_coeffs, (x, self.signal(x)),
                                   self.density_coeffs)


@dataclass
class VisibilityCurve:
    sweep_name: str
    sweep_values: np.ndarray
    visibilities: np.ndarray
    uncertainties: Optional[np.ndarray] = None
    flags: Optional[list] = None
    label: str = ""

    def __post_init__(self):
        self.sweep_values = np.asarray(self.sweep_values, dtype=float)
        self.visibilities = np.asarray(self.visibilities, dtype=float)
        if self.sweep_values.shape != self.visibilities.shape:
            raise DomainError("sweep values and visibilities differ in length")
        finite = self.visibilities[np.isfinite(self.visibilities)]
        if np.any(finite < 0) or np.any(finite > 1):
            raise DomainError("visibility outside [0, 1]")


# ---------------------------------------------------------------- relations

def _positive(name, *vals):
    for v in vals:
        if not np.all(np.asarray(v) > 0):
            raise DomainError(f"{name} requires positive arguments")


def de_broglie_wavelength(mass, v):
    _positive("de_broglie_wavelength", mass, v)
    return CONST.h / (np.asarray(mass, dtype=float) * np.asarray(v, dtype=float))[()]


def most_probable_velocity(T, mass):
    _positive("most_probable_velocity", mass)
    if np.any(np.asarray(T) < 0):
        raise DomainError("temperature must be >= 0")
    return np.sqrt(2.0 * CONST.k_B * np.asarray(T, dtype=float) / mass)[()]


def coherence_length(lambda_mean, lambda_spread):
    """Longitudinal coherence length lambda^2 / delta lambda."""
    _positive("coherence_length", lambda_mean, lambda_spread)
    return lambda_mean ** 2 / lambda_spread


def talbot_length(d, lambda_dB):
    _positive("talbot_length", d, lambda_dB)
    return d * d / lambda_dB


def medium_index(V_pot, E):
    """sqrt(1 - V/E) on the principal branch (Im n >= 0 for V > E)."""
    if not np.all(np.asarray(E) > 0):
        raise DomainError("energy must be positive")
    n = np.sqrt(1.0 - np.asarray(V_pot, dtype=float) / E + 0j)
    return complex(n) if n.ndim == 0 else n


def visibility_from_extrema(S_max, S_min):
    if S_min < 0 or S_max <= 0:
        raise DomainError("count rates must satisfy S_max > 0, S_min >= 0")
    if S_min > S_max:
        raise DomainError("S_min exceeds S_max")
    return (S_max - S_min) / (S_max + S_min)


def visibility_of_pattern(p: InterferencePattern, method: str = "auto") -> float:
    """Fringe visibility from harmonics (2|A1|/A0) or from sampled extrema."""
    has_c = p.fourier_coeffs is not None and p.fourier_coeffs.size > 0
    has_s = p.samples is not None and len(p.samples[1]) > 0
    if method == "auto":
        method = "harmonic" if has_c else "extrema"
    if method == "harmonic":
        if not has_c:
            raise DomainError("empty pattern")
        a0 = p.fourier_coeffs[0].real
        if not a0 > 0:
            raise DomainError("A_0 must be positive")
        a1 = abs(p.fourier_coeffs[1]) if p.fourier_coeffs.size > 1 else 0.0
        return float(min(max(2.0 * a1 / a0, 0.0), 1.0))
    if method == "extrema":
        if not has_s:
            raise DomainError("empty pattern")
        s = np.asarray(p.samples[1], dtype=float)
        return float(visibility_from_extrema(s.max(), max(s.min(), 0.0)))
    raise DomainError(f"unknown method {method!r}")


def sinusoid_pattern(period: float, visibility: float, mean: float = 1.0,
                     phase: float = 0.0) -> InterferencePattern:
    """A pure first-harmonic pattern with the given visibility."""
    return InterferencePattern(period, np.array([mean, 0.5 * visibility * mean * np.exp(1j * phase)]))
