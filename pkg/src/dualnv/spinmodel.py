"""Measurement physics: Ramsey phase accumulation, the summed two-sensor
photon-count model, per-shot Poisson sampling over the phase-cycled readout
schedule, and ODMR spectra.

Counts from both sensors arrive on one optical channel, so a shot yields a
single Poisson draw on the summed rate; per-sensor photons are never
individually observable.  Accumulation across shots uses integer power sums,
which makes parallel reduction exact and order-independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.special import j0

from .errors import IncompleteMatrixError
from .probe import NvSensor

__all__ = [
    "GAMMA_NV",
    "PHASE_LABELS",
    "PHASE_OFFSETS_RAD",
    "SCHEDULE_16",
    "EIGHT_SCHEDULE",
    "RamseyConfig",
    "CountMatrix",
    "MomentMatrix",
    "accumulate_phase",
    "expected_counts",
    "sample_count_shot",
    "run_readout_schedule",
    "run_subset_schedule",
    "expected_count_grid",
    "static_phase_sampler",
    "phase_sampler_from_decomposition",
    "correlated_phase_sampler",
    "OdmrSpectrum",
    "odmr_spectrum",
]

# NV gyromagnetic ratio, rad / (s T)
GAMMA_NV = 2.0 * math.pi * 28.0e9

# Microwave readout phases: Bloch-sphere axes of the second pi/2 pulse.
PHASE_LABELS = ("+x", "+y", "-x", "-y")
PHASE_OFFSETS_RAD = {
    "+x": 0.0,
    "+y": 0.5 * math.pi,
    "-x": math.pi,
    "-y": 1.5 * math.pi,
}

# Full factorial two-sensor schedule, row-major with the sensor-1 phase as
# the row index; cell (i, j) -> SCHEDULE_16[4*i + j].
SCHEDULE_16 = tuple(product(PHASE_LABELS, repeat=2))

# Reduced schedule: one row and one column of the full matrix; the shared
# ("+x", "+x") cell appears once, leaving 7 distinct combinations.
EIGHT_SCHEDULE = tuple(
    dict.fromkeys([(p, "+x") for p in PHASE_LABELS] + [("+x", p) for p in PHASE_LABELS])
)

_CHUNK = 1 << 20


@dataclass(frozen=True)
class RamseyConfig:
    """Sequence parameters: free evolution time, repetitions, gyromagnetic ratio."""

    tau_s: float
    n_shots: int
    gamma: float = GAMMA_NV

    def __post_init__(self):
        if not (self.tau_s > 0):
            raise ValueError("tau must be positive")
        if not (self.n_shots >= 1):
            raise ValueError("shot count must be at least 1")
        if not (self.gamma > 0):
            raise ValueError("gamma must be positive")


def accumulate_phase(cfg: RamseyConfig, b_projected_t: float) -> float:
    """Phase gamma * tau * B acquired during free evolution (radians)."""
    if not math.isfinite(b_projected_t):
        raise ValueError("projected field must be finite")
    return cfg.gamma * cfg.tau_s * b_projected_t


def _bracket_params(sensor: NvSensor, tau_s: float):
    """Per-shot rate is k - b*cos(phi + offset) with k, b derived here."""
    c = sensor.photon_yield
    eps = sensor.contrast
    att = math.exp(-sensor.dephasing.zeta(tau_s))
    k = c * (1.0 - 0.5 * eps)
    b = 0.5 * c * eps * att  # = readout_contrast / 2
    return k, b


def expected_counts(cfg: RamseyConfig, sensors, phases, combo) -> float:
    """Mean summed photon count for one phase combination over n shots."""
    total = 0.0
    for sensor, phi, label in zip(sensors, phases, combo, strict=True):
        k, b = _bracket_params(sensor, cfg.tau_s)
        total += k - b * math.cos(phi + PHASE_OFFSETS_RAD[label])
    return cfg.n_shots * total


def expected_count_grid(cfg: RamseyConfig, sensors, mean_phases, attenuations=(1.0, 1.0)) -> np.ndarray:
    """Mean counts for the full 4x4 schedule, optionally with extra phase-noise
    attenuation of the cosine term (e.g. J0 factors for arcsine noise)."""
    offs = np.array([PHASE_OFFSETS_RAD[l] for l in PHASE_LABELS])
    brackets = []
    for sensor, phi, att in zip(sensors, mean_phases, attenuations, strict=True):
        k, b = _bracket_params(sensor, cfg.tau_s)
        brackets.append(k - b * att * np.cos(phi + offs))
    return cfg.n_shots * (brackets[0][:, None] + brackets[1][None, :])


# ---------------------------------------------------------------------------
# Phase samplers
#
# A sampler is a callable (rng, size) -> (phi1, phi2) arrays of shape (size,)
# describing the joint per-shot phase distribution of the two sensors.
# ---------------------------------------------------------------------------

def static_phase_sampler(phi1: float, phi2: float):
    """Sampler for constant phases (no field fluctuations)."""

    def sample(rng, size: int):
        return np.full(size, phi1), np.full(size, phi2)

    return sample


def correlated_phase_sampler(mean_phases, amplitudes, sigmas=(0.0, 0.0)):
    """General sampler: shared sinusoidal sources plus independent noise.

    amplitudes has shape (n_sources, 2); source k contributes
    a[k, i] * sin(u_k) to sensor i with one shared uniform draw u_k per shot.
    sigmas are per-sensor Gaussian standard deviations (radians).
    """
    amps = np.atleast_2d(np.asarray(amplitudes, dtype=float))
    if amps.shape[1] != 2:
        raise ValueError("amplitudes must have shape (n_sources, 2)")
    m1, m2 = float(mean_phases[0]), float(mean_phases[1])
    s1, s2 = float(sigmas[0]), float(sigmas[1])
    if s1 < 0 or s2 < 0:
        raise ValueError("noise sigmas must be non-negative")

    def sample(rng, size: int):
        phi1 = np.full(size, m1)
        phi2 = np.full(size, m2)
        for a1, a2 in amps:
            if a1 == 0.0 and a2 == 0.0:
                continue
            s = np.sin(rng.uniform(0.0, 2.0 * math.pi, size))
            phi1 += a1 * s
            phi2 += a2 * s
        if s1 > 0.0:
            phi1 += rng.normal(0.0, s1, size)
        if s2 > 0.0:
            phi2 += rng.normal(0.0, s2, size)
        return phi1, phi2

    return sample


def phase_sampler_from_decomposition(mean_phases, correlated_amplitude, m, uncorrelated_sigmas=(0.0, 0.0)):
    """Sampler for the mean + correlated + uncorrelated phase decomposition.

    Per shot the phases are (mean1 + pc + u1, mean2 + m*pc + u2) where pc is
    arcsine-distributed with the given amplitude (pc = a*sin(u), u uniform)
    and u_i are independent zero-mean Gaussian draws.
    """
    a = float(correlated_amplitude)
    if a < 0:
        raise ValueError("correlated amplitude must be non-negative")
    if not math.isfinite(m):
        raise ValueError("correlation factor must be finite")
    return correlated_phase_sampler(mean_phases, [[a, m * a]], uncorrelated_sigmas)


# ---------------------------------------------------------------------------
# Count matrices
# ---------------------------------------------------------------------------

def _label_index(label: str) -> int:
    try:
        return PHASE_LABELS.index(label)
    except ValueError:
        raise ValueError(f"unknown phase label {label!r}") from None


@dataclass(frozen=True, eq=False)
class CountMatrix:
    """Accumulated photon totals for the 4x4 phase-combination grid.

    Storage is row-major with the sensor-1 phase as the row index, both axes
    ordered (+x, +y, -x, -y).  Sampled data is integer; expected-count
    matrices may hold reals.
    """

    totals: np.ndarray
    n: int

    def __post_init__(self):
        t = np.asarray(self.totals)
        if t.shape != (4, 4):
            raise IncompleteMatrixError("count matrix must be 4x4")
        if np.any(t < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "totals", t)
        if not (self.n >= 1):
            raise ValueError("shot count must be at least 1")

    @classmethod
    def from_rows(cls, rows, n: int) -> "CountMatrix":
        """Build from (label1, label2, total) rows; all 16 combos required."""
        totals = np.full((4, 4), -1.0)
        for l1, l2, value in rows:
            totals[_label_index(l1), _label_index(l2)] = value
        if np.any(totals < 0):
            raise IncompleteMatrixError("missing phase combinations in count rows")
        if np.allclose(totals, np.round(totals)):
            totals = totals.astype(np.int64)
        return cls(totals, n)

    def total(self, label1: str, label2: str):
        return self.totals[_label_index(label1), _label_index(label2)]

    @property
    def grand_total(self):
        return self.totals.sum()


@dataclass(frozen=True, eq=False)
class MomentMatrix:
    """Per-combination expectation and variance of photons per shot.

    Central moments up to fourth order are kept so that the sampling error of
    variance-minus-expectation differences can be estimated from the data.
    """

    n: int
    e: np.ndarray
    v: np.ndarray
    m3: np.ndarray
    m4: np.ndarray

    def __post_init__(self):
        for name in ("e", "v", "m3", "m4"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (4, 4):
                raise IncompleteMatrixError("moment matrix must be 4x4")
            object.__setattr__(self, name, arr)
        if np.any(self.e < 0) or np.any(self.v < -1e-12):
            raise ValueError("moments must be non-negative")
        if not (self.n >= 2):
            raise ValueError("variance needs at least 2 shots")

    @classmethod
    def from_power_sums(cls, s1, s2, s3, s4, n: int) -> "MomentMatrix":
        """Build from raw power sums of the per-shot counts (exact integers)."""
        s1 = np.asarray(s1, dtype=float)
        s2 = np.asarray(s2, dtype=float)
        s3 = np.asarray(s3, dtype=float)
        s4 = np.asarray(s4, dtype=float)
        e = s1 / n
        m2 = s2 / n - e * e
        m3 = s3 / n - 3.0 * e * s2 / n + 2.0 * e**3
        m4 = s4 / n - 4.0 * e * s3 / n + 6.0 * e * e * s2 / n - 3.0 * e**4
        v = m2 * (n / (n - 1.0))
        return cls(n, e, np.maximum(v, 0.0), m3, np.maximum(m4, 0.0))

    def var_ve(self) -> np.ndarray:
        """Sampling variance of the per-combination (V - E) statistic.

        Asymptotic delta-method estimate (m4 - m2^2 - 2 m3 + m2) / n; for a
        pure Poisson cell this reduces to 2 lambda^2 / n.
        """
        m2 = self.v * (self.n - 1.0) / self.n
        out = (self.m4 - m2 * m2 - 2.0 * self.m3 + m2) / self.n
        return np.maximum(out, 0.0)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def sample_count_shot(cfg: RamseyConfig, sensors, phase_sampler, combo, rng) -> int:
    """One shot: draw phases, then one Poisson count on the summed rate."""
    phi1, phi2 = phase_sampler(rng, 1)
    rate = _pair_rates(cfg, sensors, combo, phi1, phi2)
    return int(rng.poisson(rate[0]))


def _pair_rates(cfg, sensors, combo, phi1, phi2):
    (k1, b1) = _bracket_params(sensors[0], cfg.tau_s)
    (k2, b2) = _bracket_params(sensors[1], cfg.tau_s)
    o1 = PHASE_OFFSETS_RAD[combo[0]]
    o2 = PHASE_OFFSETS_RAD[combo[1]]
    rate = (k1 + k2) - b1 * np.cos(phi1 + o1) - b2 * np.cos(phi2 + o2)
    if rate.min() < -1e-12:
        raise RuntimeError("negative photon rate; sensor invariants violated")
    return np.maximum(rate, 0.0)


def _measure_combo(cfg, sensors, phase_sampler, combo, rng, n, chunk=_CHUNK):
    s1 = s2 = s3 = s4 = 0
    remaining = n
    while remaining > 0:
        m = min(chunk, remaining)
        phi1, phi2 = phase_sampler(rng, m)
        rate = _pair_rates(cfg, sensors, combo, phi1, phi2)
        k = rng.poisson(rate)
        kk = k * k
        s1 += int(k.sum())
        s2 += int(kk.sum())
        s3 += int((kk * k).sum())
        s4 += int((kk * kk).sum())
        remaining -= m
    return s1, s2, s3, s4


def run_readout_schedule(cfg: RamseyConfig, sensors, phase_sampler, rng, n: int | None = None):
    """Measure all 16 phase combinations with n repetitions each.

    Returns (CountMatrix, MomentMatrix).  Shots are sampled independently per
    combination; within a shot both sensors see the same field realization.
    """
    n = cfg.n_shots if n is None else int(n)
    totals = np.zeros((4, 4), dtype=np.int64)
    p2 = np.zeros((4, 4), dtype=np.int64)
    p3 = np.zeros((4, 4), dtype=np.int64)
    p4 = np.zeros((4, 4), dtype=np.int64)
    for i, l1 in enumerate(PHASE_LABELS):
        for j, l2 in enumerate(PHASE_LABELS):
            s1, s2, s3, s4 = _measure_combo(cfg, sensors, phase_sampler, (l1, l2), rng, n)
            totals[i, j] = s1
            p2[i, j] = s2
            p3[i, j] = s3
            p4[i, j] = s4
    return CountMatrix(totals, n), MomentMatrix.from_power_sums(totals, p2, p3, p4, n)


def run_subset_schedule(cfg: RamseyConfig, sensors, phase_sampler, rng, schedule, n: int | None = None):
    """Measure an explicit list of phase combinations; returns {combo: total}."""
    n = cfg.n_shots if n is None else int(n)
    out = {}
    for combo in schedule:
        s1, _, _, _ = _measure_combo(cfg, sensors, phase_sampler, combo, rng, n)
        out[tuple(combo)] = s1
    return out


def noise_attenuation(arcsine_amplitudes=(), gaussian_sigma: float = 0.0) -> float:
    """Mean cosine-contrast attenuation of per-shot phase noise.

    Arcsine noise of amplitude a multiplies the mean cosine by J0(a); Gaussian
    noise of width s by exp(-s^2/2).
    """
    att = math.exp(-0.5 * gaussian_sigma * gaussian_sigma)
    for a in np.atleast_1d(np.asarray(arcsine_amplitudes, dtype=float)):
        att *= float(j0(a))
    return att


# ---------------------------------------------------------------------------
# ODMR
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class OdmrSpectrum:
    """Normalized PL versus microwave frequency with dip metadata."""

    freqs_mhz: np.ndarray
    pl: np.ndarray
    centers_mhz: np.ndarray  # shape (n_sensors, 2), lower/upper transition
    distinct_centers: int
    overlapping: bool


def odmr_spectrum(
    sensors,
    bias_field_t,
    freqs_mhz,
    d0_mhz: float = 2870.0,
    dip_width_mhz: float = 8.0,
    dip_depth: float = 0.2,
    gamma: float = GAMMA_NV,
) -> OdmrSpectrum:
    """Continuous-wave ODMR spectrum of all sensors on the shared channel.

    Transition centers sit at d0 +- (gamma/2pi)|e . B| per sensor; the curve
    is 1 minus Lorentzian dips whose depths are weighted by each sensor's
    share of the total photon yield.  Overlapping dips are permitted and are
    flagged in the returned metadata.
    """
    freqs = np.asarray(freqs_mhz, dtype=float)
    bias = np.asarray(bias_field_t, dtype=float)
    if bias.ndim == 1:
        bias = np.tile(bias, (len(sensors), 1))
    if bias.shape != (len(sensors), 3):
        raise ValueError("bias field must be one 3-vector or one per sensor")
    yields = np.array([s.photon_yield for s in sensors], dtype=float)
    if yields.sum() <= 0:
        raise ValueError("at least one sensor must emit photons")
    weights = yields / yields.sum()

    centers = np.empty((len(sensors), 2))
    for i, sensor in enumerate(sensors):
        split_mhz = abs(float(sensor.axis.unit @ bias[i])) * gamma / (2.0 * math.pi) * 1e-6
        lo, hi = d0_mhz - split_mhz, d0_mhz + split_mhz
        if lo <= 0:
            raise ValueError("bias field too large: transition frequency not positive")
        centers[i] = (lo, hi)

    hw2 = (0.5 * dip_width_mhz) ** 2
    pl = np.ones_like(freqs)
    for i in range(len(sensors)):
        for c in centers[i]:
            pl -= dip_depth * weights[i] * hw2 / ((freqs - c) ** 2 + hw2)

    flat = np.sort(centers.ravel())
    gaps = np.diff(flat)
    distinct = 1 + int(np.sum(gaps > 1e-6))
    overlapping = bool(np.any(gaps < dip_width_mhz))
    return OdmrSpectrum(freqs, pl, centers, distinct, overlapping)
