"""Quadrature tomography: calibration, diagonal-state fits, and error aggregation.

A control (no-photon) measurement set calibrates the apparatus gain by a
maximum-likelihood Gaussian scale fit.  Because the cavity may hold a small
leakage occupation nbar, the control variance is pinned either at the vacuum
value 1/4 (squeezed assumption) or at 1/4 + nbar (amplified assumption); the
two assumptions bound the calibration systematics.  Calibrated photon sets are
then fit to the marginal of a diagonal state, by default with sample-level
maximum likelihood (EM over the mixture weights), optionally with a
histogram least-squares mode that mirrors binned fitting and feeds plots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import ConvergenceError, DataError, PairingError
from .fock import (
    VACUUM_VARIANCE,
    DiagonalDensityMatrix,
    fock_marginal_matrix,
    g2_zero,
    g2_zero_shorthand,
)

ASSUMPTIONS = ("squeezed", "amplified")


@dataclass(frozen=True, eq=False)
class QuadratureDataset:
    """Single-quadrature values from one measurement set.

    ``values`` are volt*sqrt(us) when uncalibrated, quadrature units otherwise.
    """

    values: np.ndarray
    calibrated: bool = False
    set_id: str = ""

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("a quadrature dataset must hold a non-empty 1-d vector")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class CalibrationResult:
    """Apparatus gain (volt*sqrt(us) per quadrature unit) under one assumption."""

    apparatus_gain: float
    assumed_control_variance: float
    assumption: str

    def __post_init__(self):
        if self.apparatus_gain <= 0:
            raise ValueError("apparatus gain must be positive")


def calibrate_gain(
    control: QuadratureDataset, assumption: str, nbar_backaction: float = 0.0
) -> CalibrationResult:
    """Gaussian scale fit of a control set: gain = rms / sqrt(target variance).

    The target variance is 1/4 for the squeezed assumption and 1/4 + nbar for
    the amplified assumption (the mean-photon identity var_x + var_p - 1/2 = n
    fixes the amplified quadrature once the squeezed one sits at vacuum).
    """
    if assumption not in ASSUMPTIONS:
        raise ValueError(f"assumption must be one of {ASSUMPTIONS}")
    if nbar_backaction < 0:
        raise ValueError("backaction occupation must be >= 0")
    values = control.values
    if not np.all(np.isfinite(values)):
        raise DataError(f"control set {control.set_id!r} contains non-finite values")
    target = VACUUM_VARIANCE + (nbar_backaction if assumption == "amplified" else 0.0)
    rms = math.sqrt(float(np.mean(values * values)))
    if rms == 0:
        raise DataError(f"control set {control.set_id!r} has zero spread")
    return CalibrationResult(rms / math.sqrt(target), target, assumption)


def calibrated_values(data: QuadratureDataset, calibration: CalibrationResult) -> np.ndarray:
    return data.values if data.calibrated else data.values / calibration.apparatus_gain


def _em_fit(values, n_max, tol, max_iter):
    pdfs = fock_marginal_matrix(n_max, values)
    rho = np.full(n_max + 1, 1.0 / (n_max + 1))
    log_lik = []
    for _ in range(max_iter):
        weights = np.maximum(pdfs @ rho, 1e-300)
        ll = float(np.log(weights).sum())
        if log_lik and ll - log_lik[-1] <= tol * abs(log_lik[-1]):
            log_lik.append(ll)
            rho = np.clip(rho, 0.0, None)
            return rho / rho.sum(), np.array(log_lik)
        log_lik.append(ll)
        rho = rho * (pdfs / weights[:, None]).mean(axis=0)
    raise ConvergenceError(
        f"EM did not converge within {max_iter} iterations",
        best=DiagonalDensityMatrix(np.clip(rho, 0, None) / rho.sum()),
    )


def freedman_diaconis_edges(values) -> np.ndarray:
    q75, q25 = np.percentile(values, [75, 25])
    width = 2.0 * (q75 - q25) * values.size ** (-1.0 / 3.0)
    if width <= 0:
        width = np.ptp(values) / max(int(math.sqrt(values.size)), 1) or 1.0
    lo, hi = float(np.min(values)), float(np.max(values))
    n_bins = max(int(math.ceil((hi - lo) / width)), 1)
    return np.linspace(lo, hi, n_bins + 1)


def _histogram_fit(values, n_max):
    edges = freedman_diaconis_edges(values)
    density, _ = np.histogram(values, bins=edges, density=True)
    centers = 0.5 * (edges[:-1] + edges[1:])
    design = fock_marginal_matrix(n_max, centers)

    def loss(p):
        return float(np.sum((design @ p - density) ** 2))

    x0 = np.full(n_max + 1, 1.0 / (n_max + 1))
    res = minimize(
        loss,
        x0,
        method="SLSQP",
        bounds=[(0.0, 1.0)] * (n_max + 1),
        constraints=[{"type": "eq", "fun": lambda p: p.sum() - 1.0}],
        options={"maxiter": 500, "ftol": 1e-14},
    )
    if not res.success:
        raise ConvergenceError(f"histogram fit failed: {res.message}")
    rho = np.clip(res.x, 0.0, None)
    return rho / rho.sum()


def fit_diagonal(
    data: QuadratureDataset,
    calibration: CalibrationResult,
    n_max: int = 3,
    *,
    method: str = "em",
    tol: float = 1e-8,
    max_iter: int = 10000,
) -> DiagonalDensityMatrix:
    """Fit diagonal populations to one calibrated quadrature set.

    ``method='em'`` maximizes the sample log-likelihood over the probability
    simplex (weights stay nonnegative and normalized by construction);
    ``method='histogram'`` least-squares fits a Freedman-Diaconis density
    histogram under the same simplex constraint.
    """
    values = calibrated_values(data, calibration)
    if not np.all(np.isfinite(values)):
        raise DataError(f"dataset {data.set_id!r} contains non-finite values")
    if method == "em":
        rho, _ = _em_fit(values, n_max, tol, max_iter)
    elif method == "histogram":
        rho = _histogram_fit(values, n_max)
    else:
        raise ValueError(f"unknown fit method {method!r}")
    return DiagonalDensityMatrix(rho)


def em_log_likelihood_trace(data: QuadratureDataset, calibration: CalibrationResult, n_max=3, **kw):
    """EM fit returning (state, per-iteration log-likelihoods); for diagnostics."""
    values = calibrated_values(data, calibration)
    rho, trace = _em_fit(values, n_max, kw.get("tol", 1e-8), kw.get("max_iter", 10000))
    return DiagonalDensityMatrix(rho), trace


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    """Aggregate over paired measurement sets with statistical and systematic errors.

    ``rho`` is the central (squeezed-assumption) state carrying stat_err and
    the elementwise systematic bounds; ``rho_amplified`` is the mean state
    under the amplified assumption.
    """

    rho: DiagonalDensityMatrix
    rho_amplified: DiagonalDensityMatrix
    per_set: tuple
    stat_err: np.ndarray
    sys_lo: np.ndarray
    sys_hi: np.ndarray
    n_sets: int
    g2: float
    g2_stat: float
    g2_sys_lo: float
    g2_sys_hi: float
    g2_shorthand: float

    def f_ideal(self) -> float:
        """Fidelity against the one-photon state: sqrt(p1)."""
        return math.sqrt(float(self.rho.padded(max(self.rho.n_max, 1)).populations[1]))

    def summary_record(self) -> dict:
        rec = self.rho.to_record()
        p1 = float(self.rho.padded(max(self.rho.n_max, 1)).populations[1])
        rec.update(
            {
                "n_sets": float(self.n_sets),
                "g2": self.g2,
                "g2_stat": self.g2_stat,
                "g2_sys_lo": self.g2_sys_lo,
                "g2_sys_hi": self.g2_sys_hi,
                "g2_shorthand": self.g2_shorthand,
                "f_vs_fock1": self.f_ideal(),
                "f_vs_fock1_stat": float(self.stat_err[1] / (2 * math.sqrt(p1))) if p1 > 0 else 0.0,
            }
        )
        return rec


def _safe_g2(populations):
    try:
        return g2_zero(DiagonalDensityMatrix(populations))
    except ValueError:
        return math.nan


def reconstruct_with_errors(
    photon_sets,
    control_sets,
    n_max: int = 3,
    nbar_backaction: float = 0.0,
    *,
    method: str = "em",
) -> ReconstructionResult:
    """Per-set calibration and fit, aggregated over paired photon/control sets.

    The central value and the standard deviation of the mean come from the
    squeezed-assumption pipeline; the full pipeline is repeated under the
    amplified assumption and the elementwise min/max of the two means gives
    the systematic bounds.
    """
    if len(photon_sets) != len(control_sets):
        raise PairingError(
            f"{len(photon_sets)} photon sets cannot pair with {len(control_sets)} control sets"
        )
    if len(photon_sets) < 2:
        raise PairingError("need at least 2 paired sets to estimate errors")

    fits = {}
    for assumption in ASSUMPTIONS:
        stack = []
        for photon, control in zip(photon_sets, control_sets):
            cal = calibrate_gain(control, assumption, nbar_backaction)
            stack.append(fit_diagonal(photon, cal, n_max, method=method).populations)
        fits[assumption] = np.vstack(stack)

    central = fits["squeezed"].mean(axis=0)
    n_sets = len(photon_sets)
    stat_err = fits["squeezed"].std(axis=0, ddof=1) / math.sqrt(n_sets)
    amplified = fits["amplified"].mean(axis=0)
    sys_lo = np.minimum(central, amplified)
    sys_hi = np.maximum(central, amplified)

    g2_sets = np.array([_safe_g2(row) for row in fits["squeezed"]])
    g2_central = _safe_g2(central)
    finite = np.isfinite(g2_sets)
    g2_stat = float(g2_sets[finite].std(ddof=1) / math.sqrt(finite.sum())) if finite.sum() > 1 else math.nan
    g2_amplified = _safe_g2(amplified)
    g2_pair = [v for v in (g2_central, g2_amplified) if math.isfinite(v)]
    try:
        shorthand = g2_zero_shorthand(DiagonalDensityMatrix(central))
    except ValueError:
        shorthand = math.nan

    rho = DiagonalDensityMatrix(central, stat_err=stat_err, sys_lo=sys_lo, sys_hi=sys_hi)
    return ReconstructionResult(
        rho=rho,
        rho_amplified=DiagonalDensityMatrix(amplified),
        per_set=tuple(DiagonalDensityMatrix(row) for row in fits["squeezed"]),
        stat_err=stat_err,
        sys_lo=sys_lo,
        sys_hi=sys_hi,
        n_sets=n_sets,
        g2=g2_central,
        g2_stat=g2_stat,
        g2_sys_lo=min(g2_pair) if g2_pair else math.nan,
        g2_sys_hi=max(g2_pair) if g2_pair else math.nan,
        g2_shorthand=shorthand,
    )


def systematic_bounds(result: ReconstructionResult):
    """Elementwise (low, high) over the two calibration-assumption pipelines."""
    return result.sys_lo.copy(), result.sys_hi.copy()


def histogram_model_table(values, rho: DiagonalDensityMatrix):
    """(bin_center, density, model_density) columns for histogram exports."""
    values = np.asarray(values, dtype=float)
    edges = freedman_diaconis_edges(values)
    density, _ = np.histogram(values, bins=edges, density=True)
    centers = 0.5 * (edges[:-1] + edges[1:])
    model = fock_marginal_matrix(rho.n_max, centers) @ rho.populations
    return centers, density, model
