"""Sensor geometry: measurement axes, positions, and projection relations.

Angles follow the physics convention: theta is the polar angle measured
from +z (the out-of-plane sample normal), phi the azimuth from +x in the
xy plane.  Angles are degrees at the API boundary, radians internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateProjectionError

__all__ = [
    "SensorAxis",
    "DephasingModel",
    "NvSensor",
    "ProbePair",
    "axis_from_angles",
    "project_field",
    "correlation_factor",
]


@dataclass(frozen=True)
class SensorAxis:
    """Measurement axis of one spin sensor.

    Negative polar angles are accepted; (-theta, phi) describes the same
    direction as (theta, phi + 180) and both map to the same unit vector.
    """

    theta_deg: float
    phi_deg: float

    def __post_init__(self):
        if not (math.isfinite(self.theta_deg) and math.isfinite(self.phi_deg)):
            raise ValueError("axis angles must be finite")

    @property
    def unit(self) -> np.ndarray:
        """Unit vector (sin t cos p, sin t sin p, cos t) in the lab frame."""
        t = math.radians(self.theta_deg)
        p = math.radians(self.phi_deg)
        return np.array(
            [math.sin(t) * math.cos(p), math.sin(t) * math.sin(p), math.cos(t)]
        )

    def folded(self) -> "SensorAxis":
        """Equivalent axis with theta in [0, 180] and phi in (-180, 180]."""
        x, y, z = self.unit
        theta = math.degrees(math.acos(max(-1.0, min(1.0, z))))
        phi = math.degrees(math.atan2(y, x)) if abs(theta) > 1e-12 and abs(theta - 180.0) > 1e-12 else 0.0
        if phi <= -180.0:
            phi += 360.0
        return SensorAxis(theta, phi)


def axis_from_angles(theta_deg: float, phi_deg: float) -> SensorAxis:
    """Build a sensor axis from lab-frame polar/azimuthal angles in degrees."""
    return SensorAxis(float(theta_deg), float(phi_deg))


def project_field(axis: SensorAxis, field_t) -> float:
    """Project a field vector (tesla) onto the sensor axis: e . B."""
    b = np.asarray(field_t, dtype=float)
    if b.shape != (3,) or not np.all(np.isfinite(b)):
        raise ValueError("field must be a finite 3-vector")
    return float(axis.unit @ b)


def correlation_factor(
    axis1: SensorAxis,
    axis2: SensorAxis,
    shared_field_t,
    min_projection_t: float = 1e-15,
) -> float:
    """Ratio of the two sensors' projections of a shared field.

    Returns (e2 . B) / (e1 . B); this factor scales the correlated phase
    seen by sensor 2 relative to sensor 1 and is invariant under rescaling
    of the shared field.
    """
    p1 = project_field(axis1, shared_field_t)
    p2 = project_field(axis2, shared_field_t)
    if abs(p1) < min_projection_t:
        raise DegenerateProjectionError(
            f"reference projection {p1:.3e} T below threshold {min_projection_t:.3e} T"
        )
    return p2 / p1


@dataclass(frozen=True)
class DephasingModel:
    """Dephasing exponent zeta(tau) = (tau / t2_star)**exponent.

    t2_star may be math.inf for a sensor with no intrinsic dephasing.
    """

    t2_star_s: float
    exponent: float = 2.0

    def __post_init__(self):
        if not (self.t2_star_s > 0):
            raise ValueError("t2_star must be positive (or inf)")
        if not (self.exponent > 0):
            raise ValueError("dephasing exponent must be positive")

    @classmethod
    def from_zeta_at(cls, zeta: float, tau_s: float, exponent: float = 2.0) -> "DephasingModel":
        """Model with the given exponent value at a reference evolution time."""
        if zeta < 0:
            raise ValueError("zeta must be non-negative")
        if not (tau_s > 0):
            raise ValueError("tau must be positive")
        if zeta == 0.0:
            return cls(math.inf, exponent)
        return cls(tau_s / zeta ** (1.0 / exponent), exponent)

    def zeta(self, tau_s: float) -> float:
        if tau_s < 0:
            raise ValueError("tau must be non-negative")
        if math.isinf(self.t2_star_s):
            return 0.0
        return (tau_s / self.t2_star_s) ** self.exponent


@dataclass(frozen=True, eq=False)
class NvSensor:
    """One spin sensor: axis, position, and optical readout parameters.

    photon_yield is the mean number of photons detected per readout for the
    bright spin state; contrast is the fractional PL contrast between spin
    states.  position_nm holds the sensor offset from the probe apex in the
    lab frame, including the standoff above the sample as the z component.
    """

    axis: SensorAxis
    position_nm: np.ndarray
    photon_yield: float
    contrast: float
    dephasing: DephasingModel = field(default_factory=lambda: DephasingModel(math.inf))
    transition_frequencies_mhz: tuple = (2870.0, 2870.0)

    def __post_init__(self):
        pos = np.asarray(self.position_nm, dtype=float)
        if pos.shape != (3,) or not np.all(np.isfinite(pos)):
            raise ValueError("position must be a finite 3-vector (nm)")
        object.__setattr__(self, "position_nm", pos)
        # photon_yield 0 marks a dark sensor (useful for single-sensor runs)
        if not (self.photon_yield >= 0):
            raise ValueError("photon yield must be non-negative")
        if not (0.0 <= self.contrast <= 1.0):
            raise ValueError("contrast must lie in [0, 1]")
        if len(self.transition_frequencies_mhz) != 2:
            raise ValueError("two transition frequencies are required")

    def readout_contrast(self, tau_s: float) -> float:
        """Effective count-modulation amplitude c * eps * exp(-zeta(tau))."""
        return self.photon_yield * self.contrast * math.exp(-self.dephasing.zeta(tau_s))


@dataclass(frozen=True, eq=False)
class ProbePair:
    """Two sensors sharing one probe tip and one optical channel."""

    sensor1: NvSensor
    sensor2: NvSensor

    @property
    def separation_nm(self) -> np.ndarray:
        """Componentwise position difference r2 - r1."""
        return self.sensor2.position_nm - self.sensor1.position_nm

    @property
    def sensors(self):
        return (self.sensor1, self.sensor2)
