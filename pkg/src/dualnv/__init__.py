"""Multiplexed dual-sensor scanning magnetometry simulator.

Two spin-qubit sensors share one optical readout channel; phase-cycled
microwave pulses separate the per-sensor mean phases from the summed photon
counts, and count-variance differencing recovers the covariance of correlated
field fluctuations.
"""

from .demux import (
    CovarianceEstimate,
    PhaseEstimate,
    covariance_of_correlated_phase,
    covariances,
    demux_eight,
    mean_phases,
    n_sensor_mean_phases,
    n_sensor_schedule,
    partial_sums,
)
from .fields import (
    CurrentWaveform,
    FiniteWire,
    StripeEdge,
    UniformField,
    edge_field,
    sample_ac_instant,
    total_field,
    wire_field,
)
from .probe import (
    DephasingModel,
    NvSensor,
    ProbePair,
    SensorAxis,
    axis_from_angles,
    correlation_factor,
    project_field,
)
from .scanner import (
    EdgeSampleParams,
    EdgeScan,
    ProbeFitResult,
    ProbeGeometryGuess,
    ScanPath,
    ScanResult,
    estimate_sensitivity,
    fit_probe_geometry,
    line_path,
    mc_covariance_prediction,
    multiplexing_gain,
    run_scan,
    synthesize_edge_scans,
)
from .spinmodel import (
    GAMMA_NV,
    CountMatrix,
    MomentMatrix,
    RamseyConfig,
    accumulate_phase,
    expected_counts,
    odmr_spectrum,
    phase_sampler_from_decomposition,
    run_readout_schedule,
    sample_count_shot,
    static_phase_sampler,
)

__version__ = "0.1.0"
