import math

import numpy as np
import pytest

from dualnv.probe import DephasingModel, NvSensor, ProbePair, SensorAxis

# Tip geometry used throughout: orientations (41, 94) and (-84, -161) deg,
# separation (-52, -96, 11) nm, standoffs 47 / 58 nm.
TIP2 = dict(
    theta1=41.0, phi1=94.0, theta2=-84.0, phi2=-161.0,
    dx=-52.0, dy=-96.0, dz=11.0, z1=47.0, z2=58.0,
)


def make_sensor(theta=0.0, phi=0.0, pos=(0.0, 0.0, 50.0), c=0.1, eps=0.2,
                zeta=0.7, tau=250e-9):
    deph = DephasingModel.from_zeta_at(zeta, tau) if zeta > 0 else DephasingModel(math.inf)
    return NvSensor(SensorAxis(theta, phi), np.asarray(pos, dtype=float), c, eps, deph)


def make_tip2_probe(c=0.1, eps=0.2, zeta=0.7, tau=250e-9):
    return ProbePair(
        make_sensor(TIP2["theta1"], TIP2["phi1"], (0.0, 0.0, TIP2["z1"]), c, eps, zeta, tau),
        make_sensor(TIP2["theta2"], TIP2["phi2"],
                    (TIP2["dx"], TIP2["dy"], TIP2["z2"]), c, eps, zeta, tau),
    )


def bright_pair(c=4.0, eps=1.0, zeta=0.0):
    """High-flux sensors for sharp statistical checks of the estimators."""
    return (make_sensor(0, 0, c=c, eps=eps, zeta=zeta),
            make_sensor(90, 0, c=c, eps=eps, zeta=zeta))


def sin_product_expectation(a1, a2, n=100_001):
    """Quadrature oracle for E[sin(a1 sin u) sin(a2 sin u)], u uniform."""
    u = np.linspace(0.0, 2.0 * math.pi, n)
    return float(np.trapezoid(np.sin(a1 * np.sin(u)) * np.sin(a2 * np.sin(u)), u) / (2.0 * math.pi))


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)
