"""Analytic magnetic field sources: uniform bias, film edge, current stripe.

Positions are nanometers in the lab frame, fields are tesla.  The sample
surface sits at z = 0 and all stray-field models are valid for z > 0 only.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import FieldDomainError, WaveformKindError

__all__ = [
    "MU0",
    "CurrentWaveform",
    "UniformField",
    "StripeEdge",
    "FiniteWire",
    "edge_field",
    "wire_field",
    "wire_field_per_amp",
    "sample_ac_instant",
    "total_field",
    "check_quasistatic",
]

MU0 = 4e-7 * math.pi  # T m / A
_NM = 1e-9

Z_HAT = np.array([0.0, 0.0, 1.0])


def _unit_inplane(v) -> np.ndarray:
    u = np.asarray(v, dtype=float)
    if u.shape != (3,) or abs(u[2]) > 1e-12:
        raise ValueError("direction must be an in-plane 3-vector")
    norm = math.hypot(u[0], u[1])
    if norm == 0.0:
        raise ValueError("direction must be nonzero")
    return u / norm


@dataclass(frozen=True)
class CurrentWaveform:
    """Drive current for a wire source: DC, or AC asynchronous to the sequence.

    An asynchronous AC drive runs free relative to the measurement timing, so
    each readout samples the sinusoid at an effectively uniform random phase.
    """

    kind: str  # "dc" | "ac"
    amplitude_a: float
    frequency_hz: float | None = None

    def __post_init__(self):
        if self.kind not in ("dc", "ac"):
            raise ValueError(f"unknown waveform kind {self.kind!r}")
        if not (self.amplitude_a >= 0):
            raise ValueError("amplitude must be non-negative")
        if self.kind == "ac":
            if self.frequency_hz is None or not (self.frequency_hz > 0):
                raise ValueError("AC waveform requires a positive frequency")

    def instantaneous(self, t_s: float) -> float:
        """Deterministic current value at absolute time t (seconds)."""
        if self.kind == "dc":
            return self.amplitude_a
        return self.amplitude_a * math.sin(2.0 * math.pi * self.frequency_hz * t_s)


def sample_ac_instant(waveform: CurrentWaveform, rng, size: int | None = None):
    """Draw instantaneous current values of an asynchronous AC waveform.

    Each draw is I0 * sin(u) with u uniform on [0, 2pi); the marginal law of
    the result is the arcsine distribution on [-I0, I0].
    """
    if waveform.kind != "ac":
        raise WaveformKindError("instantaneous sampling requires an AC waveform")
    u = rng.uniform(0.0, 2.0 * math.pi, size)
    return waveform.amplitude_a * np.sin(u)


@dataclass(frozen=True, eq=False)
class UniformField:
    """Position- and time-independent bias field (tesla)."""

    b_t: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.b_t, dtype=float)
        if b.shape != (3,) or not np.all(np.isfinite(b)):
            raise ValueError("bias field must be a finite 3-vector")
        object.__setattr__(self, "b_t", b)

    def field_at(self, r_nm, t_s: float = 0.0) -> np.ndarray:
        return self.b_t.copy()


@dataclass(frozen=True, eq=False)
class StripeEdge:
    """Straight edge of a uniformly out-of-plane magnetized thin film.

    The film occupies the half plane on the negative side of the edge along
    edge_normal.  sheet_moment_t_nm is mu0 * Ms * t in tesla*nanometer.  The
    stray field above the film is

        B(x, z) = sign * S / (2 pi) * (z n - x zhat) / (x^2 + z^2),

    with x the signed distance from the edge along the in-plane normal n and
    z the height above the film plane.  The out-of-plane component is odd in
    x with extrema at x = +-z, so its peak-to-peak feature width equals twice
    the standoff.
    """

    edge_position_nm: float
    edge_normal: np.ndarray
    sheet_moment_t_nm: float
    magnetization_sign: int = 1

    def __post_init__(self):
        object.__setattr__(self, "edge_normal", _unit_inplane(self.edge_normal))
        if not (self.sheet_moment_t_nm > 0):
            raise ValueError("sheet moment must be positive")
        if self.magnetization_sign not in (1, -1):
            raise ValueError("magnetization sign must be +1 or -1")

    def field_at(self, r_nm, t_s: float = 0.0) -> np.ndarray:
        return edge_field(self, r_nm)


def edge_field(source: StripeEdge, r_nm) -> np.ndarray:
    """Stray field of a film edge at a point (nm), in tesla."""
    r = np.asarray(r_nm, dtype=float)
    z = r[2]
    if z <= 0:
        raise FieldDomainError(f"edge field is defined for z > 0 only (got z = {z} nm)")
    n = source.edge_normal
    x = float(r[0] * n[0] + r[1] * n[1]) - source.edge_position_nm
    scale = source.magnetization_sign * source.sheet_moment_t_nm / (
        2.0 * math.pi * (x * x + z * z)
    )
    return scale * (z * n - x * Z_HAT)


@dataclass(frozen=True, eq=False)
class FiniteWire:
    """Flat current stripe of finite width, infinitely thin and long.

    direction is the in-plane unit vector of current flow; center_nm locates
    the stripe midline along the transverse axis t = direction x zhat.
    """

    width_nm: float
    center_nm: float
    direction: np.ndarray
    waveform: CurrentWaveform

    def __post_init__(self):
        object.__setattr__(self, "direction", _unit_inplane(self.direction))
        if not (self.width_nm > 0):
            raise ValueError("wire width must be positive")

    @property
    def transverse(self) -> np.ndarray:
        d = self.direction
        return np.array([d[1], -d[0], 0.0])

    def field_at(self, r_nm, t_s: float = 0.0) -> np.ndarray:
        return wire_field(self, r_nm, t_s)


def wire_field_per_amp(source: FiniteWire, r_nm) -> np.ndarray:
    """Field of the stripe per ampere of drive current (tesla / A).

    Uniform sheet current of width w: with u the transverse distance from the
    midline and z the height,

        B_t = mu0 / (2 pi w) * [atan((u + w/2)/z) - atan((u - w/2)/z)]
        B_z = mu0 / (4 pi w) * ln[((u - w/2)^2 + z^2) / ((u + w/2)^2 + z^2)]

    and the component along the current flow vanishes.
    """
    r = np.asarray(r_nm, dtype=float)
    z_nm = r[2]
    if z_nm <= 0:
        raise FieldDomainError(f"wire field is defined for z > 0 only (got z = {z_nm} nm)")
    t_hat = source.transverse
    u = (float(r[0] * t_hat[0] + r[1] * t_hat[1]) - source.center_nm) * _NM
    z = z_nm * _NM
    w = source.width_nm * _NM
    hw = 0.5 * w
    bt = MU0 / (2.0 * math.pi * w) * (math.atan2(u + hw, z) - math.atan2(u - hw, z))
    bz = MU0 / (4.0 * math.pi * w) * math.log(
        ((u - hw) ** 2 + z * z) / ((u + hw) ** 2 + z * z)
    )
    return bt * t_hat + bz * Z_HAT


def wire_field(source: FiniteWire, r_nm, t_s: float = 0.0) -> np.ndarray:
    """Instantaneous stripe field (tesla) at time t for the configured drive."""
    return source.waveform.instantaneous(t_s) * wire_field_per_amp(source, r_nm)


def total_field(sources, r_nm, t_s: float = 0.0) -> np.ndarray:
    """Componentwise superposition of all source fields at one point."""
    out = np.zeros(3)
    for src in sources:
        out += src.field_at(r_nm, t_s)
    return out


def check_quasistatic(waveform: CurrentWaveform, tau_s: float, limit: float = 0.01) -> bool:
    """Warn when an AC drive is too fast for the frozen-field treatment.

    The per-shot field is held constant over the phase accumulation window,
    which requires f * tau << 1.  Returns True when f * tau < limit.
    """
    if waveform.kind != "ac":
        return True
    ft = waveform.frequency_hz * tau_s
    if ft >= limit:
        warnings.warn(
            f"AC drive with f*tau = {ft:.3g} violates the quasi-static assumption "
            f"(limit {limit:g}); covariance results may be biased",
            stacklevel=2,
        )
        return False
    return True
