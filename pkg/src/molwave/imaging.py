"""Synthetic surface-deposited interferograms with gravitational velocity encoding."""
from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from decimal import Decimal
from typing import Optional, Sequence

import numpy as np

from .core import CONST, DomainError, Particle, VelocityDistribution, VisibilityCurve
from .nearfield import TalbotSetup, talbot_lau_pattern

N_VELOCITY_BINS = 64


def fall_height(v, flight_length: float, g: float = CONST.g_earth):
    """Vertical drop 0.5 g (L / v)^2 accumulated over the flight to the plate."""
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        raise DomainError("velocity must be positive")
    t = flight_length / v
    return (0.5 * g * t * t)[()]


def velocity_from_fall(y, flight_length: float, g: float = CONST.g_earth):
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise DomainError("fall height must be positive")
    return (flight_length * np.sqrt(0.5 * g / y))[()]


def plate_step(scan_step: float, magnification: float) -> float:
    """magnification * scan_step rounded once, from the decimal representations."""
    return float(Decimal(repr(float(magnification))) * Decimal(repr(float(scan_step))))


@dataclass
class DepositImage:
    """Counts on the plate; rows are ordered by increasing fall height."""

    grid: np.ndarray
    x_axis: np.ndarray
    y_axis: np.ndarray
    magnification: float
    scan_step: float
    plate_step: float
    row_velocity: Optional[np.ndarray] = None
    fringe_period: Optional[float] = None  # on the plate
    expected_visibility: Optional[np.ndarray] = None

    def __post_init__(self):
        self.grid = np.asarray(self.grid)
        if self.grid.ndim != 2:
            raise DomainError("grid must be two-dimensional")
        if np.any(self.grid < 0):
            raise DomainError("counts must be >= 0")
        if self.grid.shape != (len(self.y_axis), len(self.x_axis)):
            raise DomainError("grid shape does not match the axes")
        if abs(self.plate_step - self.magnification * self.scan_step) > 1e-9 * abs(self.plate_step):
            raise DomainError("plate_step must equal magnification * scan_step")

    @property
    def row_counts(self) -> np.ndarray:
        return self.grid.sum(axis=1)

    def pgm_text(self, comment: str = "") -> str:
        """Plain 16-bit graymap; counts above 65535 are rescaled linearly."""
        g = self.grid.astype(np.int64)
        top = int(g.max()) if g.size else 0
        if top > 65535:
            g = (g * 65535) // top
        lines = ["P2"] + ([f"# {comment}"] if comment else [])
        lines += [f"{g.shape[1]} {g.shape[0]}", "65535"]
        lines += [" ".join(str(int(x)) for x in row) for row in g]
        return "\n".join(lines) + "\n"

    def write_pgm(self, path, comment: str = "") -> None:
        _atomic_write(path, self.pgm_text(comment))


def _atomic_write(path, text: str) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _velocity_bins(v_dist: VelocityDistribution, n_bins: int):
    """Equal-probability bins; each is represented by its median velocity."""
    if v_dist.is_monochromatic:
        return np.array([v_dist.mean_v]), np.array([1.0])
    q = (np.arange(n_bins) + 0.5) / n_bins
    return np.asarray(v_dist.ppf(q), dtype=float), np.full(n_bins, 1.0 / n_bins)


def simulate_deposit(setup: TalbotSetup, p: Particle, v_dist: VelocityDistribution,
                     scan_positions: Sequence[float], magnification: float, flight_length: float,
                     seed: int = 0, total_counts: float = 1e6, n_bins: int = N_VELOCITY_BINS,
                     n_harmonics: int = 8, threads: int = 1) -> DepositImage:
    """Poisson-sampled deposit image.

    Each velocity bin fills one row at its fall height.  The expected count at
    scan position x_s is total_counts * P(bin) * S(x_s; v) / (n_scan S_0(v)).
    Column k draws from its own child of ``SeedSequence(seed)``, so the image
    is independent of ``threads``.
    """
    if magnification < 1:
        raise DomainError("magnification must be >= 1")
    xs = np.asarray(scan_positions, dtype=float)
    if xs.size < 2:
        raise DomainError("need at least two scan positions")
    steps = np.diff(xs)
    step = float(steps[0])
    if not step > 0 or np.any(np.abs(steps - step) > 1e-9 * step):
        raise DomainError("scan positions must be uniform and ascending")
    vb, pb = _velocity_bins(v_dist, n_bins)
    order = np.argsort(-vb)  # fast molecules fall least
    vb, pb = vb[order], pb[order]
    rates = np.empty((vb.size, xs.size))
    vis = np.empty(vb.size)
    period = None
    for i, v in enumerate(vb):
        pat = talbot_lau_pattern(setup, p, float(v), n_harmonics=n_harmonics)
        period = pat.period
        S = pat.signal(xs)
        S0 = pat.fourier_coeffs[0].real
        rates[i] = total_counts * pb[i] * np.clip(S, 0.0, None) / (xs.size * S0)
        vis[i] = 2.0 * abs(pat.fourier_coeffs[1]) / S0
    children = np.random.SeedSequence(seed).spawn(xs.size)

    def column(k):
        rng = np.random.Generator(np.random.Philox(children[k]))
        return rng.poisson(rates[:, k])

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            cols = list(ex.map(column, range(xs.size)))
    else:
        cols = [column(k) for k in range(xs.size)]
    grid = np.stack(cols, axis=1)
    ps = plate_step(step, magnification)
    x_axis = (xs - xs[0]) * magnification
    y_axis = np.atleast_1d(fall_height(vb, flight_length))
    return DepositImage(grid, x_axis, y_axis, float(magnification), step, ps, vb,
                        period * magnification, vis)


def row_velocities(img: DepositImage, flight_length: float) -> np.ndarray:
    """Velocity of each row; uses the stored table when it reproduces the row heights."""
    if img.row_velocity is not None:
        if np.array_equal(np.atleast_1d(fall_height(img.row_velocity, flight_length)), img.y_axis):
            return np.asarray(img.row_velocity, dtype=float)
    return np.atleast_1d(velocity_from_fall(img.y_axis, flight_length))


def fit_row(x: np.ndarray, counts: np.ndarray, period: float):
    """Least-squares B + a cos + b sin at a fixed period; returns (V, sigma_V)."""
    k = 2.0 * math.pi / period
    X = np.column_stack([np.ones_like(x), np.cos(k * x), np.sin(k * x)])
    beta, *_ = np.linalg.lstsq(X, counts, rcond=None)
    B, a, b = beta
    if not B > 0:
        return float("nan"), float("nan")
    amp = math.hypot(a, b)
    V = amp / B
    # Poisson variance of each bin, estimated from the fitted model
    var = np.clip(X @ beta, 1.0, None)
    XtX_inv = np.linalg.inv(X.T @ X)
    cov = XtX_inv @ (X.T * var) @ X @ XtX_inv
    if amp > 0:
        g = np.array([-amp / B ** 2, a / (amp * B), b / (amp * B)])
    else:
        g = np.array([0.0, 1.0 / B, 0.0])
    return V, math.sqrt(float(g @ cov @ g))


def extract_row_visibility(img: DepositImage, flight_length: float, period: Optional[float] = None,
                           count_floor: float = 1e3) -> VisibilityCurve:
    """Fixed-period sinusoid fit per row, mapped to velocity.

    Rows with fewer than ``count_floor`` counts get V = nan and the flag
    ``below_floor``.  The curve is returned in ascending velocity order.
    """
    period = period or img.fringe_period
    if period is None:
        raise DomainError("fringe period on the plate is required")
    span = img.x_axis[-1] - img.x_axis[0] + img.plate_step
    if span < 2.0 * period:
        raise DomainError("rows must cover at least two fringe periods")
    v = row_velocities(img, flight_length)
    V = np.full(v.size, np.nan)
    sV = np.full(v.size, np.nan)
    flags = []
    for i, row in enumerate(img.grid):
        if row.sum() < count_floor:
            flags.append("below_floor")
            continue
        V[i], sV[i] = fit_row(img.x_axis, row.astype(float), period)
        flags.append("")
    order = np.argsort(v)
    return VisibilityCurve("velocity_mps", v[order], np.clip(V[order], 0.0, 1.0), sV[order],
                           [flags[i] for i in order])


def write_rows_csv(path, img: DepositImage, curve_rows: VisibilityCurve, flight_length: float) -> None:
    """Row table (row_index, y_m, v_mps, V, sigma_V) in image row order."""
    v = row_velocities(img, flight_length)
    lookup = {float(x): (V, s) for x, V, s in zip(curve_rows.sweep_values, curve_rows.visibilities,
                                                  curve_rows.uncertainties)}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row_index", "y_m", "v_mps", "V", "sigma_V"])
    for i, (y, vv) in enumerate(zip(img.y_axis, v)):
        V, s = lookup[float(vv)]
        w.writerow([i, repr(float(y)), repr(float(vv)), repr(float(V)), repr(float(s))])
    _atomic_write(path, buf.getvalue())
