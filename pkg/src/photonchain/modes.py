"""Temporal mode functions, background windows, and quadrature extraction.

A voltage trace V(t) is reduced to one uncalibrated quadrature value V_q by an
exact two-regressor least squares against the unit-norm mode f(t) and the
unit-norm background window b(t):

    V_q = (<V, f> - <V, b><b, f>) / (1 - <f, b>^2),

which removes any slowly drifting dc offset supported on the window.  When the
mode/window overlap is small this reduces to the plain projection
<V, f> - <V, b><b, f>.  Inner products are integrals over the trace grid, so a
unit-norm mode carries units of 1/sqrt(us) and V_q of volt*sqrt(us).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import (
    ConvergenceError,
    EmptyWindowError,
    GridMismatchError,
    ResolutionError,
    SingularWindowError,
)

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class TraceGrid:
    """Uniform sample grid: spacing dt (us), sample count, and drive-pulse end t0 (us)."""

    dt_us: float
    n_samples: int
    t0_us: float = 0.0

    def __post_init__(self):
        if self.dt_us <= 0:
            raise ValueError("dt must be positive")
        if self.n_samples < 2:
            raise ValueError("need at least two samples")

    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.dt_us

    @property
    def duration_us(self) -> float:
        return self.n_samples * self.dt_us


@dataclass(frozen=True)
class TemporalModeParams:
    """Three-parameter mode family: linear rise, exponential energy decay, JPA low-pass."""

    rise_time_ns: float
    decay_rate_khz: float  # energy decay kappa_f / 2pi
    jpa_bandwidth_mhz: float  # single-pole low-pass bandwidth / 2pi

    def __post_init__(self):
        if self.rise_time_ns < 0:
            raise ValueError("rise time must be >= 0")
        if self.decay_rate_khz <= 0 or self.jpa_bandwidth_mhz <= 0:
            raise ValueError("decay rate and bandwidth must be positive")


def _check_unit_norm(samples, dt, what):
    norm = float(np.sum(samples * samples) * dt)
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"{what} must have unit L2 norm, got {norm!r}")


@dataclass(frozen=True, eq=False)
class TemporalMode:
    """Unit-norm mode matching function f(t) on a trace grid."""

    samples: np.ndarray
    grid: TraceGrid

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float)
        if samples.shape != (self.grid.n_samples,):
            raise ValueError("sample count must match the grid")
        _check_unit_norm(samples, self.grid.dt_us, "mode function")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)


@dataclass(frozen=True, eq=False)
class WindowFunction:
    """Unit-norm piecewise-constant background window, zero on readout intervals."""

    samples: np.ndarray
    grid: TraceGrid
    readout_intervals_us: tuple

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float)
        if samples.shape != (self.grid.n_samples,):
            raise ValueError("sample count must match the grid")
        _check_unit_norm(samples, self.grid.dt_us, "window function")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(
            self,
            "readout_intervals_us",
            tuple((float(a), float(b)) for a, b in self.readout_intervals_us),
        )


@dataclass(frozen=True, eq=False)
class VoltageTrace:
    """One sampled measurement record (volts) on a trace grid."""

    samples: np.ndarray
    grid: TraceGrid

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.shape != (self.grid.n_samples,):
            raise ValueError("sample count must match the grid")
        object.__setattr__(self, "samples", samples)


def _jpa_kernel(bandwidth_mhz, dt_us, n_cap):
    """Discrete single-pole impulse response with exact per-bin mass.

    Bin i carries the integral of lam * exp(-lam t) over [i dt, (i+1) dt], so
    the kernel sums to ~1 for any bandwidth and collapses to a delta when
    lam * dt >> 1 (arbitrarily large bandwidth degrades gracefully).
    """
    lam = TWO_PI * bandwidth_mhz  # 1/us
    step = lam * dt_us
    if step > 50.0:
        return np.array([1.0])
    n_k = min(int(math.ceil(30.0 / step)) + 1, n_cap)
    i = np.arange(n_k)
    return np.exp(-step * i) * -np.expm1(-step)


def mode_shape(params: TemporalModeParams, grid: TraceGrid, support_us=None) -> TemporalMode:
    """Construct the mode: linear ramp ending at t0, amplitude decay at kappa_f/2,
    convolved with the JPA impulse response, then L2-normalized.

    ``support_us`` optionally restricts the mode to a (start, stop) time window
    before normalization (used to confine it to the photon emission window).
    """
    kappa = TWO_PI * params.decay_rate_khz * 1e-3  # 1/us
    if 0.5 * kappa * grid.dt_us > 0.5:
        raise ResolutionError(
            f"grid dt {grid.dt_us} us cannot resolve amplitude decay at {params.decay_rate_khz} kHz"
        )
    t = grid.times()
    t0 = grid.t0_us
    amp = np.where(t >= t0, np.exp(-0.5 * kappa * np.maximum(t - t0, 0.0)), 0.0)
    rise = params.rise_time_ns * 1e-3
    if rise > 0:
        ramp = (t - (t0 - rise)) / rise
        amp = np.where((t >= t0 - rise) & (t < t0), np.clip(ramp, 0.0, 1.0), amp)

    kernel = _jpa_kernel(params.jpa_bandwidth_mhz, grid.dt_us, grid.n_samples)
    shaped = np.convolve(amp, kernel)[: grid.n_samples]

    if support_us is not None:
        lo, hi = support_us
        shaped = np.where((t >= lo) & (t <= hi), shaped, 0.0)

    norm = math.sqrt(float(np.sum(shaped * shaped)) * grid.dt_us)
    if norm == 0:
        raise ResolutionError("mode support contains no samples")
    return TemporalMode(shaped / norm, grid)


def background_window(grid: TraceGrid, readout_intervals_us) -> WindowFunction:
    """Unit-norm window that is constant except zero on the readout intervals."""
    t = grid.times()
    mask = np.ones(grid.n_samples, dtype=bool)
    for start, stop in readout_intervals_us:
        if not 0.0 <= start < stop <= grid.duration_us:
            raise ValueError(f"readout interval ({start}, {stop}) outside the trace span")
        mask &= ~((t >= start) & (t < stop))
    n_off = int(mask.sum())
    if n_off == 0:
        raise EmptyWindowError("readout intervals cover the entire trace")
    level = 1.0 / math.sqrt(n_off * grid.dt_us)
    return WindowFunction(np.where(mask, level, 0.0), grid, tuple(readout_intervals_us))


def mode_window_overlap(mode: TemporalMode, window: WindowFunction) -> float:
    if mode.grid != window.grid:
        raise GridMismatchError("mode and window live on different grids")
    return float(np.dot(mode.samples, window.samples) * mode.grid.dt_us)


def extract_quadratures(traces: np.ndarray, mode: TemporalMode, window: WindowFunction) -> np.ndarray:
    """Extract one V_q per row of a (n_traces, n_samples) matrix."""
    if mode.grid != window.grid:
        raise GridMismatchError("mode and window live on different grids")
    traces = np.atleast_2d(np.asarray(traces, dtype=float))
    if traces.shape[1] != mode.grid.n_samples:
        raise GridMismatchError(
            f"traces have {traces.shape[1]} samples, grid expects {mode.grid.n_samples}"
        )
    dt = mode.grid.dt_us
    overlap = float(np.dot(mode.samples, window.samples) * dt)
    denom = 1.0 - overlap * overlap
    if denom < 1e-12:
        raise SingularWindowError("mode and window are colinear; quadrature is undefined")
    vf = traces @ (mode.samples * dt)
    vb = traces @ (window.samples * dt)
    return (vf - vb * overlap) / denom


def extract_quadrature(trace: VoltageTrace, mode: TemporalMode, window: WindowFunction) -> float:
    """Uncalibrated quadrature value of a single trace (volt*sqrt(us))."""
    if trace.grid != mode.grid:
        raise GridMismatchError("trace and mode live on different grids")
    return float(extract_quadratures(trace.samples[None, :], mode, window)[0])


@dataclass(frozen=True, eq=False)
class ModeOptimizationResult:
    params: TemporalModeParams
    rho00: float
    n_evaluations: int
    converged: bool
    history: tuple  # (params, rho00) per accepted simplex step


def optimize_mode(
    photon_traces: np.ndarray,
    control_traces: np.ndarray,
    grid: TraceGrid,
    window: WindowFunction,
    initial: TemporalModeParams,
    *,
    n_max: int = 3,
    nbar_backaction: float = 0.0,
    support_us=None,
    max_iter: int = 500,
    f_tol: float = 1e-4,
    x_tol: float = 1e-3,
) -> ModeOptimizationResult:
    """Tune (rise, decay, bandwidth) to minimize the fitted zero-photon weight.

    Each candidate mode is applied to the held-out photon and control trace
    sets; the control set calibrates the gain and the photon set is fit in an
    (n_max+1)-element basis.  The returned parameters minimize the fitted p_0
    under a Nelder-Mead simplex seeded at 10% steps around ``initial``.  The
    held-out sets should not be reused for the final reconstruction.

    Raises ConvergenceError (carrying the best result seen) if the simplex
    does not converge within ``max_iter`` iterations.
    """
    from . import tomography  # deferred: keeps module import order flexible

    photon_traces = np.atleast_2d(np.asarray(photon_traces, dtype=float))
    control_traces = np.atleast_2d(np.asarray(control_traces, dtype=float))
    scale = np.array([initial.rise_time_ns, initial.decay_rate_khz, initial.jpa_bandwidth_mhz])
    history = []

    def objective(x):
        p = scale * x
        if np.any(p <= 0):
            return np.inf
        params = TemporalModeParams(*p)
        try:
            mode = mode_shape(params, grid, support_us=support_us)
        except ResolutionError:
            return np.inf
        vq_control = extract_quadratures(control_traces, mode, window)
        vq_photon = extract_quadratures(photon_traces, mode, window)
        cal = tomography.calibrate_gain(
            tomography.QuadratureDataset(vq_control, set_id="mode-opt-control"),
            "squeezed",
            nbar_backaction,
        )
        rho = tomography.fit_diagonal(
            tomography.QuadratureDataset(vq_photon, set_id="mode-opt-photon"), cal, n_max
        )
        rho00 = float(rho.populations[0])
        history.append((params, rho00))
        return rho00

    x0 = np.ones(3)
    simplex = np.vstack([x0] + [x0 + 0.1 * np.eye(3)[i] for i in range(3)])
    res = minimize(
        objective,
        x0,
        method="Nelder-Mead",
        options={
            "initial_simplex": simplex,
            "maxiter": max_iter,
            "fatol": f_tol,
            "xatol": x_tol,
        },
    )
    best = ModeOptimizationResult(
        params=TemporalModeParams(*(scale * res.x)),
        rho00=float(res.fun),
        n_evaluations=int(res.nfev),
        converged=bool(res.success),
        history=tuple(history),
    )
    if not res.success:
        raise ConvergenceError(
            f"mode optimization did not converge within {max_iter} iterations", best=best
        )
    return best


def mode_to_table(mode) -> tuple:
    """(time_us, amplitude) columns for CSV export; works for modes and windows."""
    return mode.grid.times(), np.asarray(mode.samples)
