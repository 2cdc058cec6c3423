"""Fast built-in consistency checks runnable from the command line."""

from __future__ import annotations

import math

import numpy as np

from . import demux
from .probe import DephasingModel, NvSensor, ProbePair, SensorAxis
from .spinmodel import (
    CountMatrix,
    RamseyConfig,
    expected_count_grid,
    phase_sampler_from_decomposition,
    run_readout_schedule,
    static_phase_sampler,
)

_TEST_PROBE = ProbePair(
    NvSensor(SensorAxis(0.0, 0.0), np.zeros(3), photon_yield=1.5, contrast=0.5,
             dephasing=DephasingModel.from_zeta_at(0.2, 250e-9)),
    NvSensor(SensorAxis(90.0, 0.0), np.zeros(3), photon_yield=1.2, contrast=0.4,
             dephasing=DephasingModel.from_zeta_at(0.3, 250e-9)),
)
_CFG = RamseyConfig(tau_s=250e-9, n_shots=20000)


def check_round_trip(grid: int = 8, corrupt: bool = False):
    """Noiseless demux must reproduce the phases fed into the count model."""
    phis = np.linspace(-math.pi, math.pi, grid, endpoint=False) + math.pi / grid
    worst = 0.0
    for p1 in phis:
        for p2 in phis:
            expected = expected_count_grid(_CFG, _TEST_PROBE.sensors, (p1, p2))
            if corrupt:
                expected = expected.T  # deliberately break the sign convention
            counts = CountMatrix(expected, _CFG.n_shots)
            e1, e2 = demux.mean_phases(counts)
            worst = max(worst, abs(e1.phi - p1), abs(e2.phi - p2))
    return worst < 1e-9, f"max round-trip error {worst:.3e} rad"


def check_poisson_identity(seed: int = 11):
    """Static phases leave no excess variance: V - E compatible with zero."""
    rng = np.random.default_rng(seed)
    sampler = static_phase_sampler(0.4, -0.7)
    _, moments = run_readout_schedule(_CFG, _TEST_PROBE.sensors, sampler, rng)
    dev = np.abs(moments.v - moments.e) / np.sqrt(moments.var_ve())
    return float(dev.max()) < 5.0, f"max |V-E| deviation {dev.max():.2f} sigma"


def check_dual_covariance_forms(seed: int = 12):
    """The two equivalent covariance cell differences must agree."""
    rng = np.random.default_rng(seed)
    sampler = phase_sampler_from_decomposition((0.0, 0.0), 0.3, 1.0)
    _, moments = run_readout_schedule(_CFG, _TEST_PROBE.sensors, sampler, rng)
    cr = [s.readout_contrast(_CFG.tau_s) for s in _TEST_PROBE.sensors]
    cov = demux.covariances(moments, cr[0], cr[1])
    a, b = cov.forms["yy"]
    # the two forms use disjoint cells, so their difference carries twice the
    # per-form variance
    tol = 5.0 * math.sqrt(2.0) * 2.0 * cov.sigma_yy
    return abs(a - b) < tol, f"form difference {a - b:+.4f} (tolerance {tol:.4f})"


CHECKS = (
    ("phase round-trip", check_round_trip),
    ("poisson V=E", check_poisson_identity),
    ("covariance dual forms", check_dual_covariance_forms),
)


def run_selftest(out=print) -> bool:
    ok_all = True
    for name, check in CHECKS:
        ok, detail = check()
        ok_all &= ok
        out(f"selftest {name}: {'ok' if ok else 'FAIL'} ({detail})")
    return ok_all
