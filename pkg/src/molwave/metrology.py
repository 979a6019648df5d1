"""Deflectometry and KDTLI polarizability fits."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy import optimize

from .core import (DomainError, InterferometerGeometry, Particle, VelocityDistribution,
                   VisibilityCurve)
from .nearfield import TalbotSetup, kdtl_phase, kdtl_visibility_vs_power


@dataclass(frozen=True)
class DeflectionElectrode:
    """Field region producing a force alpha (E.grad)E = alpha gradient_coeff U^2.

    ``position_z`` is the electrode center measured from G1.
    """

    gradient_coeff: float
    effective_length: float
    position_z: float

    def __post_init__(self):
        if self.gradient_coeff < 0:
            raise DomainError("gradient_coeff must be >= 0")
        if not self.effective_length > 0:
            raise DomainError("effective_length must be positive")

    def span(self):
        h = 0.5 * self.effective_length
        return self.position_z - h, self.position_z + h


def lever_arm(electrode: DeflectionElectrode, geometry: InterferometerGeometry) -> float:
    """K_geom in m^2: fringe displacement at G3 is K_geom * a / v^2.

    A constant acceleration over dz at position z moves the moire fringe by
    w(z) dz / v^2 with w = z L23/L12 before G2 and w = L12 + L23 - z after.
    """
    L1, L2 = geometry.L12, geometry.L23
    z0, z1 = electrode.span()
    if z0 < 0 or z1 > L1 + L2:
        raise DomainError("electrode must lie between G1 and G3")

    def prim(z):
        # antiderivative of w, continuous at z = L1
        if z <= L1:
            return 0.5 * z * z * L2 / L1
        return 0.5 * L1 * L2 + (L1 + L2) * (z - L1) - 0.5 * (z * z - L1 * L1)

    return prim(z1) - prim(z0)


def deflection_acceleration(p: Particle, electrode: DeflectionElectrode, U):
    U = np.asarray(U, dtype=float)
    return (p.alpha_static * electrode.gradient_coeff * U * U / p.mass)[()]


def deflection_shift(p: Particle, electrode: DeflectionElectrode, U, v_z,
                     geometry: InterferometerGeometry):
    """Fringe displacement x_d = K_geom (alpha/m) G U^2 / v^2 in metres."""
    v_z = np.asarray(v_z, dtype=float)
    if np.any(v_z <= 0):
        raise DomainError("v_z must be positive")
    K = lever_arm(electrode, geometry)
    return (K * deflection_acceleration(p, electrode, U) / (v_z * v_z))[()]


RESOLVABLE_SHIFT = 10e-9


@dataclass
class ScanDataset:
    """Fringe phase against electrode voltage."""

    U: np.ndarray
    phase: np.ndarray
    sigma_phase: np.ndarray
    contrast: Optional[np.ndarray] = None
    shift_m: Optional[np.ndarray] = None

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=float)
        self.phase = np.asarray(self.phase, dtype=float)
        self.sigma_phase = np.asarray(self.sigma_phase, dtype=float)
        if not (self.U.shape == self.phase.shape == self.sigma_phase.shape):
            raise DomainError("dataset columns must have equal length")
        if np.any(self.sigma_phase < 0):
            raise DomainError("phase errors must be >= 0")

    @property
    def resolvable(self) -> bool:
        """True when the largest mean displacement reaches the 10 nm scale."""
        return self.shift_m is not None and float(np.max(np.abs(self.shift_m))) >= RESOLVABLE_SHIFT

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["U_volt", "phase_rad", "sigma_phase_rad"])
            for row in zip(self.U, self.phase, self.sigma_phase):
                w.writerow([repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path) -> "ScanDataset":
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        if not rows or rows[0] != ["U_volt", "phase_rad", "sigma_phase_rad"]:
            raise DomainError("expected header U_volt,phase_rad,sigma_phase_rad")
        data = np.array(rows[1:], dtype=float).reshape(-1, 3)
        return cls(data[:, 0], data[:, 1], data[:, 2])


def scan_fringe_vs_voltage(setup: TalbotSetup, p: Particle, electrode: DeflectionElectrode,
                           voltages: Sequence[float], v_dist: VelocityDistribution,
                           noise_seed: Optional[int] = None, counts_per_point: float = 1e6,
                           visibility0: float = 0.3, n_nodes: int = 64) -> ScanDataset:
    """Synthetic deflectometry scan.

    The reported phase is 2 pi <x_d>/d with the flux-weighted mean over
    ``v_dist``, which is exactly quadratic in U.  The fringe contrast is
    visibility0 |<exp(2 pi i x_d / d)>|, reduced by velocity dispersion.  The
    shot-noise phase error is sqrt(2) / (V sqrt(N)); with ``noise_seed`` set,
    Gaussian noise of that size is added.
    """
    U = np.asarray(voltages, dtype=float)
    if U.size == 0:
        raise DomainError("voltage list is empty")
    d = setup.g3_period
    geom = setup.geometry
    K = lever_arm(electrode, geom)
    a = deflection_acceleration(p, electrode, U)
    mean_shift = K * np.atleast_1d(a) * v_dist.mean_inverse_square()
    phase = 2.0 * math.pi * mean_shift / d
    vs, ws = v_dist.nodes(n_nodes)
    phases_v = 2.0 * math.pi * K * np.atleast_1d(a)[:, None] / (vs[None, :] ** 2 * d)
    contrast = visibility0 * np.abs(np.exp(1j * phases_v) @ ws)
    with np.errstate(divide="ignore"):
        sigma = math.sqrt(2.0) / (contrast * math.sqrt(counts_per_point))
    if noise_seed is not None:
        rng = np.random.default_rng(noise_seed)
        phase = phase + sigma * rng.standard_normal(U.size)
    return ScanDataset(U, phase, sigma, contrast, mean_shift)


@dataclass(frozen=True)
class FitResult:
    value: complex
    std_error: complex
    covariance: np.ndarray
    residual_norm: float
    chi2: float = float("nan")
    dof: int = 0
    params: Optional[np.ndarray] = None


def fit_static_polarizability(data: ScanDataset, electrode: DeflectionElectrode, p_mass: float,
                              v_dist: VelocityDistribution, geometry: InterferometerGeometry,
                              period: float, v_moment_rel_error: float = 0.0) -> FitResult:
    """Weighted fit phase = phi0 + c U^2, then alpha from c.

    ``v_moment_rel_error`` is the relative uncertainty of <1/v^2>; it is added
    in quadrature to the statistical error.
    """
    U2 = data.U ** 2
    if np.unique(data.U).size < 3:
        raise DomainError("need at least 3 distinct voltages")
    X = np.column_stack([np.ones_like(U2), U2])
    sig = data.sigma_phase
    if np.all(sig > 0):
        w = 1.0 / sig
    elif np.all(sig == 0):
        w = np.ones_like(U2)
    else:
        raise DomainError("phase errors must be all positive or all zero")
    Xw = X * w[:, None]
    yw = data.phase * w
    if np.linalg.matrix_rank(Xw) < 2:
        raise DomainError("rank-deficient design")
    beta, *_ = np.linalg.lstsq(Xw, yw, rcond=None)
    resid = yw - Xw @ beta
    chi2 = float(resid @ resid)
    dof = U2.size - 2
    cov = np.linalg.inv(Xw.T @ Xw)
    if np.all(sig == 0):
        cov = cov * (chi2 / dof if dof > 0 else 0.0)
    K = lever_arm(electrode, geometry)
    scale = p_mass * period / (2.0 * math.pi * K * electrode.gradient_coeff * v_dist.mean_inverse_square())
    alpha = beta[1] * scale
    var = (scale ** 2) * cov[1, 1] + (alpha * v_moment_rel_error) ** 2
    J = np.diag([1.0, scale])
    return FitResult(alpha, math.sqrt(var), J @ cov @ J.T, math.sqrt(chi2), chi2, dof, beta)


def fit_optical_polarizability(curve: VisibilityCurve, p: Particle, v_dist: VelocityDistribution,
                               setup: TalbotSetup, sigma=None, n_nodes: int = 16,
                               alpha_guess: Optional[float] = None, max_nfev: int = 200) -> FitResult:
    """Least-squares fit of (Re alpha, Im alpha) to a KDTLI power sweep.

    Absorption is always derived from Im alpha here, so ``p.sigma_abs_laser``
    is ignored.  Without ``alpha_guess`` a coarse log-spaced scan over Re alpha
    picks the starting point.
    """
    powers = np.asarray(curve.sweep_values, dtype=float)
    V = np.asarray(curve.visibilities, dtype=float)
    if powers.size < 3:
        raise DomainError("need at least 3 powers")
    w = np.ones_like(V) if sigma is None else 1.0 / np.asarray(sigma, dtype=float)
    base = replace(p, sigma_abs_laser=0.0)

    def model(x):
        q = replace(base, alpha_optical=complex(x[0], x[1]))
        return kdtl_visibility_vs_power(setup, q, powers, v_dist, n_nodes).visibilities

    def resid(x):
        return (model(x) - V) * w

    if alpha_guess is None:
        # phi0 is linear in Re alpha: scan candidate scales
        phi_unit = kdtl_phase(float(powers.max()), 1.0, setup.g2.waist_y, v_dist.mean_v)
        grid = np.geomspace(0.2, 20.0, 41) / phi_unit
        costs = [float(np.sum(resid([a, 0.0]) ** 2)) for a in grid]
        alpha_guess = float(grid[int(np.argmin(costs))])
    # solve in units of the guess; SI polarizabilities (~1e-39) would sit
    # inside the solver's absolute feasibility margin around the Im >= 0 bound
    unit = abs(alpha_guess)
    sol = optimize.least_squares(lambda y: resid(y * unit), np.array([math.copysign(1.0, alpha_guess), 0.01]),
                                 bounds=([-np.inf, 0.0], [np.inf, np.inf]),
                                 xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=max_nfev)
    if not sol.success and sol.status <= 0:
        raise DomainError(f"optical fit did not converge: {sol.message} (nfev={sol.nfev})")
    sol.x = sol.x * unit
    J = sol.jac / unit
    chi2 = float(sol.fun @ sol.fun)
    dof = powers.size - 2
    try:
        cov = np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError:
        cov = np.full((2, 2), np.inf)
    if sigma is None:
        cov = cov * (chi2 / dof if dof > 0 else 0.0)
    err = np.sqrt(np.abs(np.diag(cov)))
    return FitResult(complex(sol.x[0], sol.x[1]), complex(err[0], err[1]), cov,
                     math.sqrt(chi2), chi2, dof, sol.x)
