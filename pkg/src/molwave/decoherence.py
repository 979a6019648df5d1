"""Collisional and thermal-emission decoherence."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate, special

from .core import CONST, EV, DomainError, Particle, de_broglie_wavelength, talbot_length

# 4 pi Gamma(9/10) / (5 sin(pi/5))
SIGMA_EFF_PREFACTOR = 4.0 * math.pi * math.gamma(0.9) / (5.0 * math.sin(math.pi / 5.0))

DECOMPOSITION_TEMPERATURE = 5000.0


class HeatingWarning(UserWarning):
    """Internal temperature clamped at the decomposition limit."""


@dataclass(frozen=True)
class GasEnvironment:
    gas_mass: float
    temperature: float
    pressure: float = 0.0
    C6: float = 0.0
    forward_amplitude_f0: complex = 0j

    def __post_init__(self):
        if not self.gas_mass > 0:
            raise DomainError("gas_mass must be positive")
        if not self.temperature > 0:
            raise DomainError("gas temperature must be positive")
        if self.pressure < 0:
            raise DomainError("pressure must be >= 0")
        if self.C6 < 0:
            raise DomainError("C6 must be >= 0")
        if complex(self.forward_amplitude_f0).imag < 0:
            raise DomainError("Im f0 must be >= 0")

    @property
    def thermal_velocity(self) -> float:
        return math.sqrt(2.0 * CONST.k_B * self.temperature / self.gas_mass)

    @property
    def number_density(self) -> float:
        return self.pressure / (CONST.k_B * self.temperature)


def effective_cross_section(v_m: float, gas: GasEnvironment) -> float:
    """Thermally averaged cross section for a van der Waals (C6/r^6) interaction."""
    if not v_m > 0:
        raise DomainError("v_m must be positive")
    if not gas.C6 > 0:
        raise DomainError("C6 must be positive")
    vg = gas.thermal_velocity
    coupling = (3.0 * math.pi * gas.C6 / (2.0 * CONST.hbar)) ** 0.4
    return SIGMA_EFF_PREFACTOR * coupling * vg ** 0.6 / v_m * (1.0 + 0.2 * (v_m / vg) ** 2)


def collisional_log_visibility(p_g, L: float, T: float, sigma_eff: float):
    """ln(V/V0) = -2 L sigma p / (k_B T)."""
    p_g = np.asarray(p_g, dtype=float)
    if np.any(p_g < 0):
        raise DomainError("pressure must be >= 0")
    slope = -2.0 * L * sigma_eff / (CONST.k_B * T)
    return (slope * p_g)[()]


def collisional_visibility(p_g, L: float, T: float, sigma_eff: float):
    return np.exp(collisional_log_visibility(p_g, L, T, sigma_eff))[()]


def c6_for_cross_section(sigma_eff: float, v_m: float, gas_mass: float, T: float) -> float:
    """Invert ``effective_cross_section`` for the C6 coefficient."""
    vg = math.sqrt(2.0 * CONST.k_B * T / gas_mass)
    coupling = sigma_eff / (SIGMA_EFF_PREFACTOR * vg ** 0.6 / v_m * (1.0 + 0.2 * (v_m / vg) ** 2))
    return coupling ** 2.5 * 2.0 * CONST.hbar / (3.0 * math.pi)


@dataclass(frozen=True)
class GasMediumResult:
    index: complex
    phase_per_length: float
    attenuation_per_length: float
    k: float


def gas_refractive_index(n_gas: float, gas: GasEnvironment, p: Particle, E: float) -> GasMediumResult:
    """Complex index 1 + pi hbar^2 n_gas f0 / (m* E) with the reduced mass m*."""
    if not E > 0:
        raise DomainError("energy must be positive")
    if n_gas < 0:
        raise DomainError("gas density must be >= 0")
    m_red = p.mass * gas.gas_mass / (p.mass + gas.gas_mass)
    # keep n - 1 separate: it is far below double resolution for dilute gases
    dn = math.pi * CONST.hbar ** 2 * n_gas * complex(gas.forward_amplitude_f0) / (m_red * E)
    k = math.sqrt(2.0 * m_red * E) / CONST.hbar
    return GasMediumResult(1.0 + dn, k * dn.real, 2.0 * k * dn.imag, k)


def total_cross_section(f0: complex, k: float) -> float:
    """Optical theorem."""
    return 4.0 * math.pi * complex(f0).imag / k


# ------------------------------------------------------------- emission

@dataclass(frozen=True)
class EmissionSpectrum:
    """Absorption cross section sigma(lambda) of the hot molecule.

    ``powerlaw_with_gap``: sigma0 (lambda_ref / lambda)^exponent for photon
    energies above ``gap_energy`` and zero below.  ``table``: linear
    interpolation of (lambda, sigma) samples.
    """

    model: str = "powerlaw_with_gap"
    gap_energy: Optional[float] = None
    sigma0: float = 0.0
    lambda_ref: float = 400e-9
    exponent: float = 2.0
    sigma_abs_table: Optional[tuple] = None

    def __post_init__(self):
        if self.model not in ("table", "powerlaw_with_gap"):
            raise DomainError(f"unknown emission model {self.model!r}")
        if self.model == "table":
            if self.sigma_abs_table is None:
                raise DomainError("table model needs sigma_abs_table")
            lam, sig = (np.asarray(a, dtype=float) for a in self.sigma_abs_table)
            if lam.size < 2 or lam.shape != sig.shape:
                raise DomainError("table needs matching columns with >= 2 rows")
            if np.any(np.diff(lam) <= 0):
                raise DomainError("table wavelengths must be strictly ascending")
            if np.any(sig < 0):
                raise DomainError("cross sections must be >= 0")
            object.__setattr__(self, "sigma_abs_table", (lam, sig))
        else:
            if self.sigma0 < 0:
                raise DomainError("sigma0 must be >= 0")
            if self.gap_energy is not None and not self.gap_energy > 0:
                raise DomainError("gap_energy must be positive")

    @property
    def cutoff_wavelength(self) -> float:
        """Longest wavelength with non-zero cross section."""
        if self.model == "table":
            lam = self.sigma_abs_table[0]
            if self.gap_energy is not None:
                return min(lam[-1], CONST.h * CONST.c / self.gap_energy)
            return float(lam[-1])
        if self.gap_energy is None:
            return math.inf
        return CONST.h * CONST.c / self.gap_energy

    @property
    def min_wavelength(self) -> float:
        return float(self.sigma_abs_table[0][0]) if self.model == "table" else 0.0

    def sigma(self, lam):
        lam = np.asarray(lam, dtype=float)
        if np.any(lam <= 0):
            raise DomainError("wavelength must be positive")
        if self.model == "table":
            tl, ts = self.sigma_abs_table
            if np.any(lam < tl[0]):
                raise DomainError("wavelength below the tabulated range")
            out = np.interp(lam, tl, ts, right=0.0)
        else:
            out = self.sigma0 * (self.lambda_ref / lam) ** self.exponent
        out = np.where(lam > self.cutoff_wavelength, 0.0, out)
        return out[()]


def load_sigma_table(path) -> EmissionSpectrum:
    """Two-column text file: wavelength in nm, cross section in m^2; '#' comments."""
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != 2:
        raise DomainError("sigma table needs exactly two columns")
    return EmissionSpectrum(model="table", sigma_abs_table=(data[:, 0] * 1e-9, data[:, 1]))


GAP_C70 = 1.5 * EV


def c70_emission(sigma0: float = 1.5e-21) -> EmissionSpectrum:
    """Default C70 grey-body cross section with a 1.5 eV gap."""
    return EmissionSpectrum("powerlaw_with_gap", gap_energy=GAP_C70, sigma0=sigma0)


def spectral_emission_rate(lam, T: float, spec: EmissionSpectrum):
    """Photons per second per unit wavelength: sigma(lambda) (2 pi c / lambda^4) / (e^{hc/lambda kT} - 1)."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise DomainError("wavelength must be positive")
    if T < 0:
        raise DomainError("temperature must be >= 0")
    if T == 0:
        return np.zeros(lam.shape)[()]
    x = CONST.h * CONST.c / (lam * CONST.k_B * T)
    with np.errstate(over="ignore"):
        occ = 1.0 / np.expm1(x)
    return (spec.sigma(lam) * 2.0 * math.pi * CONST.c / lam ** 4 * occ)[()]


def _wavelength_window(T, spec: EmissionSpectrum):
    hi = spec.cutoff_wavelength
    # below x = hc / (lambda k T) ~ 700 the Planck factor underflows
    lo = max(spec.min_wavelength, CONST.h * CONST.c / (700.0 * CONST.k_B * T))
    if not math.isfinite(hi):
        hi = CONST.h * CONST.c / (1e-3 * CONST.k_B * T)
    return lo, hi


def thermal_exponent(T: float, d: float, L: float, v_z: float, lambda_dB: float,
                     spec: EmissionSpectrum, epsabs: float = 1e-8, epsrel: float = 1e-11) -> float:
    """Exponent of the thermal visibility factor (nested adaptive quadrature).

    (1/v) int_0^{2L} dz int dlambda R(lambda) [1 - sinc(2 pi d (L - |z - L|) / (lambda L_T))].
    The integrand is symmetric about z = L, so the z range is folded to [0, L].
    """
    if not v_z > 0:
        raise DomainError("v_z must be positive")
    if T <= 0:
        return 0.0
    LT = talbot_length(d, lambda_dB)
    lo, hi = _wavelength_window(T, spec)
    if not hi > lo:
        return 0.0
    # split the wavelength range around the Planck peak for robust adaptivity
    peak = CONST.h * CONST.c / (4.965114231744276 * CONST.k_B * T)
    pts = [p for p in (0.5 * peak, peak, 2.0 * peak, 5.0 * peak) if lo < p < hi]

    def inner(lam):
        beta = 2.0 * math.pi * d / (lam * LT)
        f = lambda z: 1.0 - np.sinc(beta * z / math.pi)
        # one subdivision per half oscillation at least
        limit = 200 + int(2.0 * beta * L / math.pi)
        val, _ = integrate.quad(f, 0.0, L, epsabs=1e-14 * L, epsrel=1e-12, limit=limit)
        return val

    def outer(lam):
        r = spectral_emission_rate(lam, T, spec)
        return 0.0 if r == 0 else r * inner(lam)

    val, _ = integrate.quad(outer, lo, hi, points=pts or None, epsabs=epsabs * v_z / 2.0,
                            epsrel=epsrel, limit=500)
    return 2.0 * val / v_z


def thermal_exponent_closed(T, d, L, v_z, lambda_dB, spec: EmissionSpectrum) -> float:
    """Same exponent using int_0^L (1 - sinc(beta z)) dz = L - Si(beta L)/beta."""
    LT = talbot_length(d, lambda_dB)
    lo, hi = _wavelength_window(T, spec)

    def f(lam):
        beta = 2.0 * math.pi * d / (lam * LT)
        return spectral_emission_rate(lam, T, spec) * (L - special.sici(beta * L)[0] / beta)

    peak = CONST.h * CONST.c / (4.965114231744276 * CONST.k_B * T)
    pts = [p for p in (0.5 * peak, peak, 2.0 * peak, 5.0 * peak) if lo < p < hi]
    val, _ = integrate.quad(f, lo, hi, points=pts or None, epsabs=0, epsrel=1e-12, limit=500)
    return 2.0 * val / v_z


def thermal_visibility(T: float, setup, p: Particle, v_z: float,
                       spec: Optional[EmissionSpectrum] = None) -> float:
    """V/V0 for a molecule emitting thermally at internal temperature T.

    Uses the symmetric geometry of ``setup`` (L = L12, period of G2).
    """
    spec = spec or p.emission_model
    if spec is None:
        return 1.0
    g = setup.geometry
    if abs(g.L12 - g.L23) > 1e-9 * g.L12:
        raise DomainError("thermal decoherence requires the symmetric geometry L12 = L23")
    lam = de_broglie_wavelength(p.mass, v_z)
    x = thermal_exponent(T, setup.g2.period_d, g.L12, v_z, lam, spec)
    if not math.isfinite(x):
        raise DomainError("divergent emission integral")
    return math.exp(-x)


def heated_temperature(T0: float, n_photons: float, photon_energy: float, p: Particle,
                       clamp: bool = True) -> float:
    """Linear caloric model T0 + n E slope, clamped at the decomposition limit."""
    if n_photons < 0:
        raise DomainError("photon number must be >= 0")
    T = T0 + n_photons * photon_energy / EV * p.caloric_slope
    if clamp and T > DECOMPOSITION_TEMPERATURE:
        warnings.warn(f"internal temperature {T:.0f} K exceeds {DECOMPOSITION_TEMPERATURE:.0f} K; "
                      "clamped", HeatingWarning, stacklevel=2)
        T = DECOMPOSITION_TEMPERATURE
    return T


def heated_temperature_poisson(T0: float, mean_photons: float, photon_energy: float, p: Particle,
                               rng: np.random.Generator, size: int) -> np.ndarray:
    """Samples of the heated temperature with Poisson photon numbers (clamped silently)."""
    if mean_photons < 0:
        raise DomainError("mean photon number must be >= 0")
    n = rng.poisson(mean_photons, size)
    T = T0 + n * photon_energy / EV * p.caloric_slope
    return np.minimum(T, DECOMPOSITION_TEMPERATURE)
