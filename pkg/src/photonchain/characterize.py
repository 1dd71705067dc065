"""Parameter estimation for the measurement chain.

Covers the backaction/isolation fit from qubit dephasing, the added-noise
decomposition from thermal sweeps, efficiency interpolation through the
physical added-noise model (never by spline), and the measured-versus-expected
state comparison.  All fits are weighted least squares with inverse-variance
weights when point errors are supplied and unit weights otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import constants
from scipy.optimize import curve_fit

from .errors import ConditioningError, FitError, UnderdeterminedError
from .fock import DiagonalDensityMatrix, expected_measured_state, fidelity_diagonal


def db_to_linear(gain_db):
    return 10.0 ** (np.asarray(gain_db, dtype=float) / 10.0)


def nbar_from_gain(isolation_l: float, gain_db) -> float:
    """Cavity occupation from amplifier leakage: nbar = (1/4) L (G - 1)."""
    if isolation_l < 0:
        raise ValueError("isolation fraction must be >= 0")
    if np.any(np.asarray(gain_db) < 0):
        raise ValueError("gain must be >= 0 dB")
    out = 0.25 * isolation_l * (db_to_linear(gain_db) - 1.0)
    return out if np.ndim(gain_db) else float(out)


def dephasing_rate_khz(gain_db, isolation_l, gamma0_khz, kappa_khz):
    """Photon dephasing model Gamma = Gamma0 + kappa (2 nbar + 2 nbar^2)."""
    nbar = 0.25 * isolation_l * (db_to_linear(gain_db) - 1.0)
    return gamma0_khz + kappa_khz * (2.0 * nbar + 2.0 * nbar**2)


@dataclass(frozen=True, eq=False)
class BackactionModel:
    """Dephasing-fit result: leakage fraction L and intrinsic rate Gamma0."""

    isolation_l: float
    gamma0_khz: float
    kappa_khz: float
    covariance: np.ndarray  # over (L, Gamma0)

    @property
    def isolation_err(self) -> float:
        return float(math.sqrt(max(self.covariance[0, 0], 0.0)))

    @property
    def gamma0_err_khz(self) -> float:
        return float(math.sqrt(max(self.covariance[1, 1], 0.0)))

    def nbar(self, gain_db) -> float:
        return nbar_from_gain(self.isolation_l, gain_db)

    def nbar_err(self, gain_db) -> float:
        return float(0.25 * (db_to_linear(gain_db) - 1.0) * self.isolation_err)

    def gamma_khz(self, gain_db):
        return dephasing_rate_khz(gain_db, self.isolation_l, self.gamma0_khz, self.kappa_khz)


def fit_dephasing(gains_db, gamma_khz, kappa_khz, gamma_err_khz=None) -> BackactionModel:
    """Weighted least squares of the dephasing model over (L, Gamma0).

    ``kappa_khz`` is held fixed; parameter covariance comes from the Jacobian
    at the optimum (absolute when point errors are given).
    """
    gains_db = np.asarray(gains_db, dtype=float)
    gamma_khz = np.asarray(gamma_khz, dtype=float)
    if gains_db.size < 3:
        raise UnderdeterminedError("dephasing fit needs at least 3 gain points")

    def model(g_db, isolation_l, gamma0):
        return dephasing_rate_khz(g_db, isolation_l, gamma0, kappa_khz)

    # linear initializer ignoring the quadratic term
    g_lin = db_to_linear(gains_db)
    slope, intercept = np.polyfit(g_lin - 1.0, gamma_khz, 1)
    l0 = max(2.0 * slope / kappa_khz, 1e-12)
    p0 = (l0, max(intercept, 1e-6))
    try:
        popt, pcov = curve_fit(
            model,
            gains_db,
            gamma_khz,
            p0=p0,
            sigma=gamma_err_khz,
            absolute_sigma=gamma_err_khz is not None,
            bounds=([0.0, 0.0], [np.inf, np.inf]),
            maxfev=10000,
        )
    except RuntimeError as exc:
        raise FitError(f"dephasing fit did not converge: {exc}") from exc
    if np.any(popt < 0):
        raise FitError(f"dephasing fit returned negative parameters {popt}")
    return BackactionModel(float(popt[0]), float(popt[1]), float(kappa_khz), np.asarray(pcov))


def planck_occupation(temperature_mk: float, frequency_ghz: float = 5.8) -> float:
    """Input noise density in quanta: 1/(exp(h f / k T) - 1) + 1/2."""
    if temperature_mk <= 0:
        raise ValueError("temperature must be positive")
    x = constants.h * frequency_ghz * 1e9 / (constants.k * temperature_mk * 1e-3)
    if x > 700.0:  # expm1 would overflow; the occupation is the vacuum floor
        return 0.5
    return float(1.0 / math.expm1(x) + 0.5)


@dataclass(frozen=True, eq=False)
class ThermalSweepFit:
    """One gain point of a thermal sweep: S_out = G (S_in + N_add)."""

    chain_gain: float
    n_add: float
    chain_gain_err: float
    n_add_err: float
    residuals: np.ndarray


def fit_thermal_sweep(s_in, s_out, s_out_err=None) -> ThermalSweepFit:
    """Line fit of output vs input noise density; N_add = intercept / slope.

    Points are inverse-variance weighted when ``s_out_err`` is supplied.
    """
    s_in = np.asarray(s_in, dtype=float)
    s_out = np.asarray(s_out, dtype=float)
    if s_in.size < 3:
        raise UnderdeterminedError("thermal sweep fit needs at least 3 temperatures")
    if np.ptp(s_in) < 1e-9 * max(np.max(np.abs(s_in)), 1.0):
        raise ConditioningError("input noise densities show no spread")
    if s_out_err is not None:
        w = 1.0 / np.asarray(s_out_err, dtype=float) ** 2
        design = np.column_stack([s_in, np.ones_like(s_in)])
        cov = np.linalg.inv(design.T @ (w[:, None] * design))
        slope, intercept = cov @ (design.T @ (w * s_out))
    else:
        (slope, intercept), cov = np.polyfit(s_in, s_out, 1, cov=True)
    if slope <= 0:
        raise FitError(f"non-positive chain gain {slope} from thermal sweep")
    n_add = intercept / slope
    var_n = (
        cov[1, 1] / slope**2
        + (intercept**2 / slope**4) * cov[0, 0]
        - 2.0 * (intercept / slope**3) * cov[0, 1]
    )
    residuals = s_out - (slope * s_in + intercept)
    return ThermalSweepFit(
        float(slope),
        float(n_add),
        float(math.sqrt(max(cov[0, 0], 0.0))),
        float(math.sqrt(max(var_n, 0.0))),
        residuals,
    )


@dataclass(frozen=True, eq=False)
class AddedNoiseModel:
    """Added-noise decomposition N_add(G_jpa) = N_jpa + N_hemt / G_jpa."""

    n_jpa: float
    n_hemt: float
    covariance: np.ndarray
    gains_db: np.ndarray
    n_add_points: np.ndarray

    @property
    def n_jpa_err(self) -> float:
        return float(math.sqrt(max(self.covariance[0, 0], 0.0)))

    @property
    def n_hemt_err(self) -> float:
        return float(math.sqrt(max(self.covariance[1, 1], 0.0)))

    def n_add(self, gain_db):
        out = self.n_jpa + self.n_hemt / db_to_linear(gain_db)
        return out if np.ndim(gain_db) else float(out)

    def n_add_err(self, gain_db):
        z = 1.0 / db_to_linear(gain_db)
        var = self.covariance[0, 0] + z**2 * self.covariance[1, 1] + 2.0 * z * self.covariance[0, 1]
        out = np.sqrt(np.maximum(var, 0.0))
        return out if np.ndim(gain_db) else float(out)


def fit_added_noise_model(gains_db, n_add, n_add_err=None) -> AddedNoiseModel:
    """Weighted linear regression of N_add against 1/G_jpa."""
    gains_db = np.asarray(gains_db, dtype=float)
    n_add = np.asarray(n_add, dtype=float)
    if np.unique(gains_db).size < 2:
        raise UnderdeterminedError("added-noise model needs at least 2 distinct gains")
    z = 1.0 / db_to_linear(gains_db)
    design = np.column_stack([np.ones_like(z), z])
    if n_add_err is not None:
        w = 1.0 / np.asarray(n_add_err, dtype=float) ** 2
    else:
        w = np.ones_like(z)
    normal = design.T @ (w[:, None] * design)
    try:
        cov = np.linalg.inv(normal)
    except np.linalg.LinAlgError as exc:
        raise ConditioningError("degenerate gain spread in added-noise fit") from exc
    beta = cov @ (design.T @ (w * n_add))
    dof = gains_db.size - 2
    if n_add_err is None and dof > 0:
        resid = n_add - design @ beta
        cov = cov * float(resid @ (w * resid)) / dof
    return AddedNoiseModel(float(beta[0]), float(beta[1]), cov, gains_db.copy(), n_add.copy())


def efficiency_from_added_noise(n_add) -> float:
    """Single-quadrature measurement efficiency eta = 1 / (2 N_add + 1)."""
    if np.any(np.asarray(n_add) < 0):
        raise ValueError("added noise must be >= 0")
    out = 1.0 / (2.0 * np.asarray(n_add, dtype=float) + 1.0)
    return out if np.ndim(n_add) else float(out)


@dataclass(frozen=True, eq=False)
class EfficiencyCurve:
    """Efficiency over a gain range with a first-order propagated error band."""

    gains_db: np.ndarray
    eta: np.ndarray
    eta_err: np.ndarray
    model: AddedNoiseModel

    def eta_at(self, gain_db) -> float:
        return efficiency_from_added_noise(self.model.n_add(gain_db))

    def eta_err_at(self, gain_db) -> float:
        n = self.model.n_add(gain_db)
        return float(2.0 * self.model.n_add_err(gain_db) / (2.0 * n + 1.0) ** 2)


def efficiency_curve(model: AddedNoiseModel, gains_db) -> EfficiencyCurve:
    gains_db = np.asarray(gains_db, dtype=float)
    n = model.n_add(gains_db)
    eta = efficiency_from_added_noise(n)
    err = 2.0 * model.n_add_err(gains_db) / (2.0 * n + 1.0) ** 2
    return EfficiencyCurve(gains_db, np.asarray(eta), np.asarray(err), model)


@dataclass(frozen=True, eq=False)
class ExpectationComparison:
    """Measured state against the loss-and-efficiency expectation at one gain."""

    gain_db: float
    eta: float
    eta_err: float
    rho_expected: DiagonalDensityMatrix
    f_expected: float
    f_expected_stat: float
    f_expected_sys_lo: float
    f_expected_sys_hi: float
    f_ideal: float
    f_ideal_stat: float
    f_ideal_sys_lo: float
    f_ideal_sys_hi: float

    def to_record(self) -> dict:
        return {
            "gain_db": self.gain_db,
            "eta": self.eta,
            "eta_err": self.eta_err,
            "f_expected": self.f_expected,
            "f_expected_stat": self.f_expected_stat,
            "f_expected_sys_lo": self.f_expected_sys_lo,
            "f_expected_sys_hi": self.f_expected_sys_hi,
            "f_ideal": self.f_ideal,
            "f_ideal_stat": self.f_ideal_stat,
            "f_ideal_sys_lo": self.f_ideal_sys_lo,
            "f_ideal_sys_hi": self.f_ideal_sys_hi,
        }


def _fidelity_stat(rho, target, eta_slope=0.0, eta_err=0.0):
    """First-order error of F(rho, target) from the per-element stat errors."""
    if rho.stat_err is None:
        return 0.0
    n_max = max(rho.n_max, target.n_max)
    p = rho.padded(n_max).populations
    e = target.padded(n_max).populations
    stat = np.pad(rho.stat_err, (0, n_max - rho.n_max))
    ok = (p > 1e-12) & (e > 0)
    grad = np.zeros_like(p)
    grad[ok] = 0.5 * np.sqrt(e[ok] / p[ok])
    return float(math.sqrt(float(np.sum((grad * stat) ** 2)) + (eta_slope * eta_err) ** 2))


def compare_to_expectation(
    measured,
    kappa_khz: float,
    kappa_out_khz: float,
    eta_curve: EfficiencyCurve,
    gain_db: float,
) -> ExpectationComparison:
    """Fidelity of a reconstructed state against the measured-state expectation.

    ``measured`` is a tomography ReconstructionResult; its squeezed/amplified
    assumption states and the efficiency band span the systematic interval.
    """
    eta = eta_curve.eta_at(gain_db)
    eta_err = eta_curve.eta_err_at(gain_db)
    rho_exp = expected_measured_state(kappa_khz, kappa_out_khz, eta)

    rho = measured.rho
    f_expected = fidelity_diagonal(rho, rho_exp)
    d_eta = 1e-6
    f_plus = fidelity_diagonal(rho, expected_measured_state(kappa_khz, kappa_out_khz, min(eta + d_eta, 1.0)))
    eta_slope = (f_plus - f_expected) / d_eta
    f_expected_stat = _fidelity_stat(rho, rho_exp, eta_slope, eta_err)

    candidates = []
    ideal = DiagonalDensityMatrix.pure(1)
    ideal_candidates = []
    for state in (rho, measured.rho_amplified):
        for eta_c in (max(eta - eta_err, 1e-9), eta, min(eta + eta_err, 1.0)):
            exp_c = expected_measured_state(kappa_khz, kappa_out_khz, eta_c)
            candidates.append(fidelity_diagonal(state, exp_c))
        ideal_candidates.append(fidelity_diagonal(state, ideal))

    p1 = float(rho.padded(max(rho.n_max, 1)).populations[1])
    f_ideal = math.sqrt(p1)
    if rho.stat_err is not None and p1 > 0:
        f_ideal_stat = float(rho.stat_err[1] / (2.0 * math.sqrt(p1)))
    else:
        f_ideal_stat = 0.0

    return ExpectationComparison(
        gain_db=float(gain_db),
        eta=float(eta),
        eta_err=float(eta_err),
        rho_expected=rho_exp,
        f_expected=f_expected,
        f_expected_stat=f_expected_stat,
        f_expected_sys_lo=float(min(candidates)),
        f_expected_sys_hi=float(max(candidates)),
        f_ideal=f_ideal,
        f_ideal_stat=f_ideal_stat,
        f_ideal_sys_lo=float(min(ideal_candidates)),
        f_ideal_sys_hi=float(max(ideal_candidates)),
    )
