"""De-multiplexing of summed photon counts into per-sensor phases and
count covariances.

Phase recovery uses partial sums of the 4x4 readout matrix: summing over one
sensor's phase index cancels that sensor's cosine modulation exactly, leaving
clean quadratures for the other sensor.  Covariances of the per-shot phase
functions survive in the excess variance (V - E) of each cell after Poisson
shot noise is subtracted; differencing cells that flip one sensor's readout
sign cancels the single-sensor excess terms and isolates the cross term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import (
    IncompleteMatrixError,
    IndeterminatePhaseError,
    InvalidContrastError,
    ScheduleSizeError,
)
from .spinmodel import PHASE_LABELS, CountMatrix, MomentMatrix

__all__ = [
    "PhaseEstimate",
    "CovarianceEstimate",
    "partial_sums",
    "mean_phases",
    "phases_from_totals",
    "quadrature_phase",
    "covariances",
    "covariance_of_correlated_phase",
    "demux_eight",
    "n_sensor_schedule",
    "n_sensor_mean_phases",
    "matrix_rows",
]

# Sign of each readout phase's contribution to the per-shot rate, written as
# rate = K + B * sign(label) * f(phi) with f = cos for x labels, sin for y.
_TRIG_SIGN = {"+x": -1.0, "+y": 1.0, "-x": 1.0, "-y": -1.0}

_IX, _IY, _IMX, _IMY = 0, 1, 2, 3  # indices of (+x, +y, -x, -y)


@dataclass(frozen=True)
class PhaseEstimate:
    """Recovered mean phase with its standard error and fitted contrast.

    phi lies in (-pi, pi]; contrast is the per-shot count-modulation
    amplitude recovered from the same data (c * eps * exp(-zeta) for a
    noiseless sensor, attenuated further by any phase noise).
    """

    phi: float
    sigma: float
    contrast: float


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    """The four count covariances with standard errors.

    Index convention: the first letter refers to sensor 1, the second to
    sensor 2; an x index estimates Cov with cos(phi_i), a y index with
    sin(phi_i).  Each value combines the two equivalent cell differences
    (forms a and b); the forms are retained for consistency checks.  Values
    may leave [-1, 1] transiently due to noise; this is flagged, not clamped.
    """

    cov_xx: float
    cov_xy: float
    cov_yx: float
    cov_yy: float
    sigma_xx: float
    sigma_xy: float
    sigma_yx: float
    sigma_yy: float
    forms: dict

    @property
    def out_of_range(self) -> bool:
        vals = (self.cov_xx, self.cov_xy, self.cov_yx, self.cov_yy)
        return any(abs(v) > 1.0 for v in vals)

    def value(self, pair: str) -> float:
        return getattr(self, f"cov_{pair}")

    def sigma(self, pair: str) -> float:
        return getattr(self, f"sigma_{pair}")


def _totals_array(counts) -> np.ndarray:
    if isinstance(counts, CountMatrix):
        return counts.totals
    arr = np.asarray(counts)
    if arr.shape[-2:] != (4, 4):
        raise IncompleteMatrixError("expected a full 4x4 combination grid")
    return arr


def partial_sums(counts):
    """Row and column sums of the readout matrix: (C_phi1, C_phi2).

    C_phi1[i] sums over all sensor-2 phases at fixed sensor-1 phase i and
    vice versa; both conserve the grand total exactly.
    """
    totals = _totals_array(counts)
    return totals.sum(axis=-1), totals.sum(axis=-2)


def quadrature_phase(partials, amplitude_shots):
    """Phase, standard error, and contrast from four quadrature sums.

    partials holds counts ordered (+x, +y, -x, -y) along the last axis; the
    phase is atan2(C[+y] - C[-y], C[-x] - C[+x]), which inverts the count
    model's cos(phi + offset) modulation over the full (-pi, pi] range.
    amplitude_shots converts the quadrature amplitude into a per-shot
    contrast.  Standard errors assume Poisson counting statistics.
    """
    p = np.asarray(partials, dtype=float)
    if p.shape[-1] != 4:
        raise IncompleteMatrixError("quadrature input must have 4 phase entries")
    num = p[..., _IY] - p[..., _IMY]
    den = p[..., _IMX] - p[..., _IX]
    r2 = num * num + den * den
    phi = np.arctan2(num, den)
    phi = np.where(phi <= -math.pi, phi + 2.0 * math.pi, phi)
    with np.errstate(divide="ignore", invalid="ignore"):
        var = (
            den * den * (p[..., _IY] + p[..., _IMY])
            + num * num * (p[..., _IX] + p[..., _IMX])
        ) / (r2 * r2)
        contrast = np.sqrt(r2) / amplitude_shots
    return phi, np.sqrt(var), contrast


def _phase_estimate(partials, amplitude_shots) -> PhaseEstimate:
    p = np.asarray(partials, dtype=float)
    num = p[_IY] - p[_IMY]
    den = p[_IMX] - p[_IX]
    if num == 0.0 and den == 0.0:
        raise IndeterminatePhaseError(
            "quadrature amplitude is zero; phase is indeterminate (no contrast)"
        )
    phi, sigma, contrast = quadrature_phase(p, amplitude_shots)
    return PhaseEstimate(float(phi), float(sigma), float(contrast))


def phases_from_totals(totals, n: int):
    """Vectorized phase recovery for stacked 4x4 count grids.

    totals has shape (..., 4, 4); returns (phi, sigma, contrast) arrays of
    shape (..., 2) ordered (sensor1, sensor2).
    """
    t = _totals_array(totals)
    c1 = t.sum(axis=-1)
    c2 = t.sum(axis=-2)
    out = [quadrature_phase(c, 4.0 * n) for c in (c1, c2)]
    phi = np.stack([out[0][0], out[1][0]], axis=-1)
    sigma = np.stack([out[0][1], out[1][1]], axis=-1)
    contrast = np.stack([out[0][2], out[1][2]], axis=-1)
    return phi, sigma, contrast


def mean_phases(counts):
    """Recover both sensors' mean phases from a full 16-combination matrix."""
    totals = _totals_array(counts)
    n = counts.n if isinstance(counts, CountMatrix) else 1
    c1, c2 = partial_sums(totals)
    return _phase_estimate(c1, 4.0 * n), _phase_estimate(c2, 4.0 * n)


# ---------------------------------------------------------------------------
# Count covariances
# ---------------------------------------------------------------------------

def _form_value(d, var_d, row_label, axis2):
    """One cell-difference estimate of a covariance from a fixed sensor-1 row."""
    i = PHASE_LABELS.index(row_label)
    s1 = _TRIG_SIGN[row_label]
    value = 0.0
    var = 0.0
    for l2 in (f"+{axis2}", f"-{axis2}"):
        j = PHASE_LABELS.index(l2)
        value += s1 * _TRIG_SIGN[l2] * d[i, j]
        var += var_d[i, j]
    return value, var


def covariances(moments: MomentMatrix, c_r1: float, c_r2: float) -> CovarianceEstimate:
    """Estimate the four phase-function covariances from count moments.

    For every cell, V - E equals the variance of the fluctuating per-shot
    rate; subtracting the cell in which sensor 2's readout sign is flipped
    removes both sensors' self-variance terms, and normalizing by the
    readout contrasts yields Cov(f1(phi1), f2(phi2)).  The two equivalent
    differences (sensor-1 row +a and row -a) are averaged; both are kept in
    `forms` so their agreement can be checked against the quoted errors.
    """
    if not (c_r1 > 0.0) or not (c_r2 > 0.0):
        raise InvalidContrastError("readout contrasts must be positive")
    d = moments.v - moments.e
    var_d = moments.var_ve()
    norm = c_r1 * c_r2
    values = {}
    sigmas = {}
    forms = {}
    for pair in ("xx", "xy", "yx", "yy"):
        a1, a2 = pair
        fa, va = _form_value(d, var_d, f"+{a1}", a2)
        fb, vb = _form_value(d, var_d, f"-{a1}", a2)
        forms[pair] = (fa / norm, fb / norm)
        values[pair] = 0.5 * (fa + fb) / norm
        sigmas[pair] = math.sqrt(va + vb) / (2.0 * norm)
    return CovarianceEstimate(
        cov_xx=values["xx"],
        cov_xy=values["xy"],
        cov_yx=values["yx"],
        cov_yy=values["yy"],
        sigma_xx=sigmas["xx"],
        sigma_xy=sigmas["xy"],
        sigma_yx=sigmas["yx"],
        sigma_yy=sigmas["yy"],
        forms=forms,
    )


def covariance_of_correlated_phase(cov: CovarianceEstimate, mean_phases_rad) -> float:
    """Isolate the covariance of the shared phase fluctuation.

    Nonzero mean phases rotate the correlation signal among the four count
    covariances.  To first order in the fluctuations the four estimates are a
    rotation of (Cov(sin d1, sin d2), Cov(cos d1, cos d2)) with orthonormal
    coefficient columns, so the inverse is the matching linear combination:

        c1 c2 * cov_yy + s1 s2 * cov_xx - s1 c2 * cov_xy - c1 s2 * cov_yx

    with ci = cos(mean_i), si = sin(mean_i).  For near-zero mean phases
    cov_yy already carries the whole signal and is returned directly.
    """
    m1, m2 = float(mean_phases_rad[0]), float(mean_phases_rad[1])
    if max(abs(m1), abs(m2)) < 0.05:
        return cov.cov_yy
    c1, s1 = math.cos(m1), math.sin(m1)
    c2, s2 = math.cos(m2), math.sin(m2)
    return (
        c1 * c2 * cov.cov_yy
        + s1 * s2 * cov.cov_xx
        - s1 * c2 * cov.cov_xy
        - c1 * s2 * cov.cov_yx
    )


# ---------------------------------------------------------------------------
# Reduced and generalized schedules
# ---------------------------------------------------------------------------

def demux_eight(counts: dict, n: int):
    """Recover both phases from the reduced row-plus-column schedule.

    counts maps (phase1, phase2) to totals for the combinations
    {(phi1, +x)} union {(+x, phi2)} (7 distinct cells, n shots each).  Within
    the fixed-column cells the sensor-2 contribution is constant and cancels
    in the quadrature differences, and vice versa.
    """
    for combo in [(l, "+x") for l in PHASE_LABELS] + [("+x", l) for l in PHASE_LABELS]:
        if combo not in counts:
            raise IncompleteMatrixError(f"reduced schedule is missing combination {combo}")
    p1 = np.array([counts[(l, "+x")] for l in PHASE_LABELS], dtype=float)
    p2 = np.array([counts[("+x", l)] for l in PHASE_LABELS], dtype=float)
    return _phase_estimate(p1, float(n)), _phase_estimate(p2, float(n))


def n_sensor_schedule(n_sensors: int):
    """Full factorial phase schedule for N sensors (4**N combinations)."""
    if not (1 <= n_sensors <= 6):
        raise ScheduleSizeError(f"sensor count {n_sensors} outside supported range 1..6")
    return list(product(PHASE_LABELS, repeat=n_sensors))


def n_sensor_mean_phases(counts, n: int):
    """Per-sensor phases from an N-dimensional count grid of shape (4,)*N.

    Summing over every other sensor's phase index reduces each sensor to the
    single-sensor quadrature problem; the per-partial amplitude scales with
    the 4**(N-1) cells entering each sum.
    """
    grid = np.asarray(counts)
    n_sensors = grid.ndim
    if grid.shape != (4,) * n_sensors:
        raise IncompleteMatrixError("count grid must have shape (4,)*N")
    if not (1 <= n_sensors <= 6):
        raise ScheduleSizeError(f"sensor count {n_sensors} outside supported range 1..6")
    scale = float(n) * 4.0 ** (n_sensors - 1)
    estimates = []
    for i in range(n_sensors):
        axes = tuple(j for j in range(n_sensors) if j != i)
        partial = grid.sum(axis=axes) if axes else grid
        estimates.append(_phase_estimate(np.asarray(partial, dtype=float), scale))
    return estimates


def matrix_rows(counts: CountMatrix, moments: MomentMatrix | None = None):
    """Serialize matrices to (label, total, e, v) rows, row-major order."""
    rows = []
    for i, l1 in enumerate(PHASE_LABELS):
        for j, l2 in enumerate(PHASE_LABELS):
            total = counts.totals[i, j]
            if moments is not None:
                rows.append((l1 + l2, total, moments.e[i, j], moments.v[i, j]))
            else:
                rows.append((l1 + l2, total, total / counts.n, math.nan))
    return rows
