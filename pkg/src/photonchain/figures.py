"""Figure rendering for the report path.

Every function takes already-computed table data, renders one matplotlib
figure, and writes it to ``path`` (PNG).  Figures sit alongside the delimited
outputs they visualize; nothing here feeds back into the analysis.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

DPI = 150


def _save(fig, path):
    fig.savefig(path, dpi=DPI, bbox_inches="tight")
    plt.close(fig)


def save_histogram_figure(path, centers, density, model, title="Quadrature histogram"):
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    width = centers[1] - centers[0] if len(centers) > 1 else 0.1
    ax.bar(centers, density, width=width, alpha=0.5, label="data")
    ax.plot(centers, model, lw=1.6, label="diagonal-state fit")
    ax.set_xlabel("quadrature (vacuum units)")
    ax.set_ylabel("probability density")
    ax.set_title(title)
    ax.legend(frameon=False)
    _save(fig, path)


def save_density_matrix_figure(path, record, title="Density-matrix diagonal"):
    n_max = int(record["n_max"])
    ns = np.arange(n_max + 1)
    pops = [record[f"p{i}"] for i in ns]
    stat = [record.get(f"stat{i}", 0.0) for i in ns]
    fig, ax = plt.subplots(figsize=(4.6, 3.4))
    ax.bar(ns, pops, yerr=stat, capsize=3, alpha=0.8)
    for i in ns:
        lo, hi = record.get(f"sys_lo{i}"), record.get(f"sys_hi{i}")
        if lo is not None and hi is not None:
            ax.plot([i - 0.4, i + 0.4], [lo, lo], "k--", lw=0.9)
            ax.plot([i - 0.4, i + 0.4], [hi, hi], "k--", lw=0.9)
    ax.set_xticks(ns)
    ax.set_xlabel("photon number")
    ax.set_ylabel("population")
    ax.set_title(title)
    _save(fig, path)


def save_dephasing_figure(path, gains_db, gamma_khz, model_gains_db, model_gamma_khz):
    fig, ax = plt.subplots(figsize=(4.8, 3.4))
    ax.plot(gains_db, gamma_khz, "o", ms=4, label="data")
    ax.plot(model_gains_db, model_gamma_khz, lw=1.5, label="backaction fit")
    ax.set_xlabel("JPA gain (dB)")
    ax.set_ylabel(r"$\Gamma/2\pi$ (kHz)")
    ax.legend(frameon=False)
    _save(fig, path)


def save_nbar_figure(path, gains_db, nbar, nbar_err):
    fig, ax = plt.subplots(figsize=(4.8, 3.4))
    ax.plot(gains_db, nbar, lw=1.5)
    ax.plot(gains_db, np.asarray(nbar) - np.asarray(nbar_err), "k--", lw=0.9)
    ax.plot(gains_db, np.asarray(nbar) + np.asarray(nbar_err), "k--", lw=0.9)
    ax.set_xlabel("JPA gain (dB)")
    ax.set_ylabel(r"cavity occupation $\bar{n}$")
    _save(fig, path)


def save_efficiency_figure(path, gains_db, eta, eta_err, point_gains=None, point_eta=None):
    fig, ax = plt.subplots(figsize=(4.8, 3.4))
    ax.plot(gains_db, eta, lw=1.5, label="added-noise model")
    ax.plot(gains_db, np.asarray(eta) - np.asarray(eta_err), "k--", lw=0.9)
    ax.plot(gains_db, np.asarray(eta) + np.asarray(eta_err), "k--", lw=0.9)
    if point_gains is not None:
        ax.plot(point_gains, point_eta, "o", ms=5, label="thermal-sweep points")
        ax.legend(frameon=False)
    ax.set_xlabel("JPA gain (dB)")
    ax.set_ylabel(r"measurement efficiency $\eta_m$")
    _save(fig, path)


def save_fidelity_figure(path, gains_db, f_ideal, f_ideal_err, f_expected, f_expected_err):
    fig, ax = plt.subplots(figsize=(4.8, 3.4))
    ax.errorbar(gains_db, f_ideal, yerr=f_ideal_err, fmt="s", ms=4, label="vs ideal photon")
    ax.errorbar(gains_db, f_expected, yerr=f_expected_err, fmt="o", ms=4, label="vs expectation")
    ax.set_xlabel("JPA gain (dB)")
    ax.set_ylabel("fidelity")
    ax.set_ylim(0, 1.05)
    ax.legend(frameon=False)
    _save(fig, path)


def save_thermal_sweep_figure(path, table_rows, fits):
    """``table_rows``: (temperature_mk, gain_db, s_in, s_out); ``fits``: gain -> ThermalSweepFit."""
    rows = np.asarray(table_rows, dtype=float)
    fig, ax = plt.subplots(figsize=(4.8, 3.4))
    for gain in np.unique(rows[:, 1]):
        sel = rows[rows[:, 1] == gain]
        (line,) = ax.plot(sel[:, 2], sel[:, 3], "o", ms=4, label=f"{gain:g} dB")
        fit = fits.get(float(gain))
        if fit is not None:
            xs = np.linspace(sel[:, 2].min(), sel[:, 2].max(), 50)
            ax.plot(xs, fit.chain_gain * (xs + fit.n_add), color=line.get_color(), lw=1.2)
    ax.set_xlabel("input noise (quanta)")
    ax.set_ylabel("output noise (arb. units)")
    ax.set_yscale("log")
    ax.legend(frameon=False)
    _save(fig, path)


def save_mode_figure(path, times_us, mode_amp, window_amp=None):
    fig, ax = plt.subplots(figsize=(5.5, 3.2))
    ax.plot(times_us, mode_amp, lw=1.2, label="mode f(t)")
    if window_amp is not None:
        ax.plot(times_us, window_amp, lw=1.0, label="background window")
    ax.set_xlabel("time (us)")
    ax.set_ylabel(r"amplitude (1/$\sqrt{\mu s}$)")
    ax.legend(frameon=False)
    _save(fig, path)
