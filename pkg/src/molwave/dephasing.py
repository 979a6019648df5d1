"""Phase averaging from grating vibrations and inertial forces."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special

from .core import CONST, DomainError


@dataclass(frozen=True)
class VibrationSpec:
    model: str = "gaussian_jitter"
    amplitude_or_sigma: float = 0.0
    frequency: Optional[float] = None  # informational

    def __post_init__(self):
        if self.model not in ("gaussian_jitter", "sinusoidal"):
            raise DomainError(f"unknown vibration model {self.model!r}")
        if self.amplitude_or_sigma < 0:
            raise DomainError("vibration amplitude must be >= 0")


def _vibration_factor(spec: VibrationSpec, x):
    if spec.model == "gaussian_jitter":
        return np.exp(-0.5 * x * x)
    return np.abs(special.j0(x))


def vibration_visibility(spec: VibrationSpec, d: float) -> float:
    """Reduction of the first fringe harmonic by a fluctuating grating offset."""
    if not d > 0:
        raise DomainError("period must be positive")
    return float(_vibration_factor(spec, 2.0 * math.pi * spec.amplitude_or_sigma / d))


@dataclass(frozen=True)
class VibrationReport:
    factors: np.ndarray = field(repr=False)  # per harmonic 1..n
    visibility_factor: float
    detrimental: bool


def vibration_harmonic_factors(spec: VibrationSpec, d: float, harmonic_weights=None,
                               threshold: float = 0.9) -> VibrationReport:
    """Reduction factors for fringe harmonics k = 1..n.

    A displacement x shifts harmonic k by 2 pi k x / d, so sharp patterns with
    strong higher harmonics lose more.  ``harmonic_weights`` gives the relative
    amplitude of each harmonic (default: first harmonic only).  The
    configuration is flagged as detrimental when the weighted factor drops
    below ``threshold``.
    """
    if not d > 0:
        raise DomainError("period must be positive")
    w = np.array([1.0] if harmonic_weights is None else harmonic_weights, dtype=float)
    if w.ndim != 1 or w.size == 0 or np.any(w < 0) or not w.sum() > 0:
        raise DomainError("harmonic weights must be a non-empty non-negative vector")
    k = np.arange(1, w.size + 1)
    f = _vibration_factor(spec, 2.0 * math.pi * k * spec.amplitude_or_sigma / d)
    combined = float(np.sum(w * f) / np.sum(w))
    return VibrationReport(f, combined, combined < threshold)


def acceleration_visibility(a: float, L: float, d: float, v_z: float, sigma_v: float) -> float:
    """exp(-2 (pi a L^2 sigma_v / (d v^3))^2).

    Linear in the velocity deviation.  The neglected curvature term is about
    3 phi0 (sigma_v / v)^2 with phi0 = pi a L^2 / (d v^2); once it exceeds
    ~0.1 rad the result drifts from the exact average by a few percent, and
    :func:`montecarlo_acceleration_visibility` should be used instead.
    """
    if not v_z > 0:
        raise DomainError("v_z must be positive")
    if sigma_v < 0:
        raise DomainError("sigma_v must be >= 0")
    x = math.pi * a * L * L * sigma_v / (d * v_z ** 3)
    return math.exp(-2.0 * x * x)


@dataclass(frozen=True)
class InertialSpec:
    source: str = "direct"
    acceleration_a: float = 0.0
    tilt_theta: float = 0.0
    velocity: float = 0.0
    latitude_phi: float = 0.0
    g: float = CONST.g_earth
    omega: float = CONST.Omega0

    def __post_init__(self):
        if self.source not in ("direct", "gravity", "coriolis"):
            raise DomainError(f"unknown inertial source {self.source!r}")
        if self.source == "coriolis" and self.velocity < 0:
            raise DomainError("velocity must be >= 0")


def inertial_acceleration(spec: InertialSpec) -> float:
    if spec.source == "gravity":
        return spec.g * math.sin(spec.tilt_theta)
    if spec.source == "coriolis":
        return 2.0 * spec.velocity * spec.omega * math.cos(spec.latitude_phi)
    return spec.acceleration_a


def fringe_shift_from_acceleration(a, L: float, d: float, v_z):
    """Ballistic sag over both stages in fringe phase, 2 pi a L^2 / (d v^2)."""
    v_z = np.asarray(v_z, dtype=float)
    if np.any(v_z <= 0):
        raise DomainError("v_z must be positive")
    return (2.0 * math.pi * np.asarray(a, dtype=float) * L * L / (d * v_z * v_z))[()]


def fringe_shift_derivative(a, L: float, d: float, v_z):
    """d(shift)/dv = -4 pi a L^2 / (d v^3)."""
    v_z = np.asarray(v_z, dtype=float)
    return (-4.0 * math.pi * np.asarray(a, dtype=float) * L * L / (d * v_z ** 3))[()]


def montecarlo_acceleration_visibility(a: float, L: float, d: float, v_z: float, sigma_v: float,
                                       n: int = 1_000_000, seed: int = 0,
                                       chunk: int = 1 << 16) -> float:
    """|<exp(i phi(v))>| over a Gaussian velocity spread.

    The averaged phase is half the two-stage sag, phi = pi a L^2 / (d v^2),
    which is the normalization under which the Gaussian closed form is the
    small-spread limit.  Draws are split into fixed-size chunks with spawned
    child streams, so the result depends only on ``seed`` and ``n``.
    """
    if sigma_v < 0 or not v_z > 0:
        raise DomainError("need v_z > 0 and sigma_v >= 0")
    if sigma_v == 0:
        return 1.0
    n_chunks = -(-n // chunk)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    acc = 0j
    left = n
    for ss in children:
        m = min(chunk, left)
        left -= m
        rng = np.random.Generator(np.random.Philox(ss))
        v = v_z + sigma_v * rng.standard_normal(m)
        v = v[v > 0]
        phi = math.pi * a * L * L / (d * v * v)
        acc += np.sum(np.exp(1j * phi))
    return abs(acc) / n
