"""Simulation and single-quadrature tomography toolkit for itinerant microwave
photon measurement chains.

Subpackages:
  fock         diagonal Fock-basis states, marginals, channels, statistics
  modes        temporal mode functions and quadrature extraction
  simulator    Monte-Carlo generator of synthetic chain data
  tomography   calibration, diagonal-state fits, error aggregation
  characterize dephasing/added-noise/efficiency fits and comparisons
  dataio       file formats (traces, tables, records, manifests)
  config       run configuration schema
  cli          command-line pipeline (simulate / reconstruct / report)
"""

from .fock import (
    MAX_FOCK,
    VACUUM_VARIANCE,
    DiagonalDensityMatrix,
    expected_measured_state,
    fidelity_diagonal,
    fock_marginal_matrix,
    fock_marginal_pdf,
    g2_zero,
    g2_zero_shorthand,
    loss_channel,
    mixture_pdf,
    sample_diagonal_state,
    sample_fock_marginal,
    thermal_state,
)
from .modes import (
    ModeOptimizationResult,
    TemporalMode,
    TemporalModeParams,
    TraceGrid,
    VoltageTrace,
    WindowFunction,
    background_window,
    extract_quadrature,
    extract_quadratures,
    mode_shape,
    mode_window_overlap,
    optimize_mode,
)
from .simulator import (
    ChainConfig,
    DephasingPoint,
    ProtocolConfig,
    SimulatedDataset,
    ThermalSweepPoint,
    TrialEngine,
    TrialRecord,
    default_grid,
    default_mode_params,
    default_protocol,
    qubit_decay_probability,
    simulate_dataset,
    simulate_dephasing_data,
    simulate_thermal_sweep,
    simulate_trial,
)
from .tomography import (
    CalibrationResult,
    QuadratureDataset,
    ReconstructionResult,
    calibrate_gain,
    fit_diagonal,
    reconstruct_with_errors,
    systematic_bounds,
)
from .characterize import (
    AddedNoiseModel,
    BackactionModel,
    EfficiencyCurve,
    ExpectationComparison,
    compare_to_expectation,
    efficiency_curve,
    efficiency_from_added_noise,
    fit_added_noise_model,
    fit_dephasing,
    fit_thermal_sweep,
    nbar_from_gain,
    planck_occupation,
)

__version__ = "0.1.0"
