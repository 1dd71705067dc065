import math

import numpy as np
import pytest

from photonchain import (
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
)
from photonchain.errors import (
    EmptyWindowError,
    GridMismatchError,
    ResolutionError,
    SingularWindowError,
)
from _oracles import normal_equation_quadrature

GRID = TraceGrid(0.01, 3000, 10.0)  # 30 us trace, pulse ends at 10 us
READOUTS = ((1.0, 4.0), (24.0, 28.0))
PARAMS = TemporalModeParams(rise_time_ns=150.0, decay_rate_khz=410.0, jpa_bandwidth_mhz=1.5)


@pytest.fixture
def window():
    return background_window(GRID, READOUTS)


@pytest.fixture
def mode():
    return mode_shape(PARAMS, GRID)


def test_mode_unit_norm_for_any_params():
    rng = np.random.default_rng(2)
    for _ in range(6):
        params = TemporalModeParams(
            rise_time_ns=rng.uniform(0, 400),
            decay_rate_khz=rng.uniform(100, 900),
            jpa_bandwidth_mhz=rng.uniform(0.3, 200),
        )
        f = mode_shape(params, GRID)
        assert np.sum(f.samples**2) * GRID.dt_us == pytest.approx(1.0, abs=1e-12)


def test_infinite_bandwidth_limit_is_pure_decay():
    # lambda*dt >> 1: the convolution kernel collapses to a delta
    params = TemporalModeParams(rise_time_ns=0.0, decay_rate_khz=410.0, jpa_bandwidth_mhz=5000.0)
    f = mode_shape(params, GRID)
    t = GRID.times()
    kappa = 2 * math.pi * 410e-3
    expected = np.where(t >= GRID.t0_us, np.exp(-0.5 * kappa * np.maximum(t - GRID.t0_us, 0)), 0.0)
    expected /= math.sqrt(np.sum(expected**2) * GRID.dt_us)
    assert np.allclose(f.samples, expected, atol=1e-12)


def test_default_mode_peaks_shortly_after_t0():
    # gain-bandwidth 43 MHz at 29 dB gain -> 1.53 MHz single-pole bandwidth
    bw = 43.0 / math.sqrt(10 ** (29 / 10))
    f = mode_shape(TemporalModeParams(150.0, 410.0, bw), GRID)
    t_peak = GRID.times()[np.argmax(f.samples)]
    assert 0.0 <= t_peak - GRID.t0_us <= 0.2


def test_mode_continuity_in_parameters():
    base = mode_shape(PARAMS, GRID)
    for field, value in (
        ("rise_time_ns", PARAMS.rise_time_ns),
        ("decay_rate_khz", PARAMS.decay_rate_khz),
        ("jpa_bandwidth_mhz", PARAMS.jpa_bandwidth_mhz),
    ):
        kwargs = {
            "rise_time_ns": PARAMS.rise_time_ns,
            "decay_rate_khz": PARAMS.decay_rate_khz,
            "jpa_bandwidth_mhz": PARAMS.jpa_bandwidth_mhz,
        }
        kwargs[field] = value * (1 + 1e-6)
        other = mode_shape(TemporalModeParams(**kwargs), GRID)
        dist = math.sqrt(np.sum((other.samples - base.samples) ** 2) * GRID.dt_us)
        assert dist < 1e-4


def test_mode_resolution_error_on_coarse_grid():
    grid = TraceGrid(1.0, 40, 10.0)  # amplitude falls by >50% per sample
    with pytest.raises(ResolutionError):
        mode_shape(TemporalModeParams(0.0, 410.0, 1.0), grid)


def test_mode_support_restriction():
    f = mode_shape(PARAMS, GRID, support_us=(GRID.t0_us - 1, GRID.t0_us + 8))
    t = GRID.times()
    outside = (t < GRID.t0_us - 1) | (t > GRID.t0_us + 8)
    assert np.all(f.samples[outside] == 0)
    assert np.sum(f.samples**2) * GRID.dt_us == pytest.approx(1.0, abs=1e-12)


def test_background_window_properties(window):
    t = GRID.times()
    for start, stop in READOUTS:
        assert np.all(window.samples[(t >= start) & (t < stop)] == 0)
    off = window.samples[window.samples > 0]
    assert np.allclose(off, off[0])  # piecewise constant
    assert np.sum(window.samples**2) * GRID.dt_us == pytest.approx(1.0, abs=1e-12)

    flat = background_window(GRID, ())
    assert np.allclose(flat.samples, 1.0 / math.sqrt(GRID.duration_us), atol=1e-12)

    with pytest.raises(EmptyWindowError):
        background_window(GRID, ((0.0, GRID.duration_us),))
    with pytest.raises(ValueError):
        background_window(GRID, ((5.0, 99.0),))


def test_extraction_projection_with_orthogonal_window():
    # a window that is zero over the whole mode support makes <f,b> = 0
    supported = mode_shape(PARAMS, GRID, support_us=(9.0, 20.0))
    win = background_window(GRID, ((9.0, 20.01),))
    assert mode_window_overlap(supported, win) == 0.0
    trace = VoltageTrace(3.7 * supported.samples, GRID)
    assert extract_quadrature(trace, supported, win) == pytest.approx(3.7, rel=1e-12)


def test_extraction_rejects_window_shaped_offsets(mode, window):
    for c in (0.5, -80.0):
        trace = VoltageTrace(c * window.samples, GRID)
        assert abs(extract_quadrature(trace, mode, window)) < 1e-10 * abs(c)


def test_extraction_matches_normal_equation_oracle(mode, window):
    rng = np.random.default_rng(5)
    for _ in range(5):
        trace = rng.normal(0, 1.0, GRID.n_samples)
        got = extract_quadratures(trace, mode, window)[0]
        want = normal_equation_quadrature(trace, mode.samples, window.samples)
        assert got == pytest.approx(want, abs=1e-10)


def test_extraction_linearity(mode, window):
    rng = np.random.default_rng(6)
    v1 = rng.normal(0, 1, GRID.n_samples)
    v2 = rng.normal(0, 1, GRID.n_samples)
    a, b = 2.3, -0.7
    lhs = extract_quadratures(a * v1 + b * v2, mode, window)[0]
    rhs = a * extract_quadratures(v1, mode, window)[0] + b * extract_quadratures(v2, mode, window)[0]
    assert lhs == pytest.approx(rhs, abs=1e-12 * max(abs(lhs), 1))


def test_extraction_drift_immunity(mode, window):
    rng = np.random.default_rng(7)
    trace = rng.normal(0, 1, GRID.n_samples)
    base = extract_quadratures(trace, mode, window)[0]
    for c in (1.0, 1e4):
        shifted = extract_quadratures(trace + c * window.samples, mode, window)[0]
        assert abs(shifted - base) < 1e-10 * c


def test_white_noise_variance_of_extraction(mode, window):
    rng = np.random.default_rng(8)
    sigma = 2.0
    n = 10_000
    traces = rng.normal(0, sigma, (n, GRID.n_samples))
    vq = extract_quadratures(traces, mode, window)
    overlap = mode_window_overlap(mode, window)
    expected = sigma**2 * GRID.dt_us / (1 - overlap**2)
    se = expected * math.sqrt(2.0 / (n - 1))
    assert abs(vq.var(ddof=1) - expected) < 3 * se


def test_singular_window_error():
    level = 1.0 / math.sqrt(GRID.duration_us)
    flat_mode = TemporalMode(np.full(GRID.n_samples, level), GRID)
    flat_window = WindowFunction(np.full(GRID.n_samples, level), GRID, ())
    with pytest.raises(SingularWindowError):
        extract_quadratures(np.zeros(GRID.n_samples), flat_mode, flat_window)


def test_grid_mismatch_error(mode, window):
    other = TraceGrid(0.02, 1500, 10.0)
    trace = VoltageTrace(np.zeros(1500), other)
    with pytest.raises(GridMismatchError):
        extract_quadrature(trace, mode, window)
    with pytest.raises(GridMismatchError):
        extract_quadratures(np.zeros((2, 1234)), mode, window)


def test_optimize_mode_started_at_optimum_returns_no_worse():
    from photonchain import optimize_mode
    from photonchain.simulator import ChainConfig, default_protocol, simulate_dataset, TrialEngine

    protocol = default_protocol(
        trace_length_us=30.0, t0_us=8.0, readout_intervals_us=((1.0, 4.0), (24.0, 28.0))
    )
    chain = ChainConfig(sample_dt_us=0.02)
    engine = TrialEngine("photon", protocol, chain)
    photon = simulate_dataset("photon", 800, protocol, chain, seed=31, keep_records=False)
    control = simulate_dataset("control", 800, protocol, chain, seed=32, keep_records=False)

    # objective value at the generating parameters, evaluated independently
    from photonchain import QuadratureDataset, calibrate_gain, fit_diagonal
    vq_c = extract_quadratures(control.traces, engine.mode, engine.window)
    vq_p = extract_quadratures(photon.traces, engine.mode, engine.window)
    cal = calibrate_gain(QuadratureDataset(vq_c), "squeezed", 0.0)
    rho00_start = float(fit_diagonal(QuadratureDataset(vq_p), cal, 3).populations[0])

    result = optimize_mode(
        photon.traces, control.traces, engine.grid, engine.window, engine.mode_params,
        n_max=3, support_us=(engine.grid.t0_us - 1.0, engine.grid.t0_us + 8.0),
    )
    assert result.rho00 <= rho00_start + 1e-12
    assert result.converged
