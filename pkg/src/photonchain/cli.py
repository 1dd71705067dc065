"""Command-line pipeline: simulate datasets, reconstruct states, build reports.

Exit codes: 0 success, 2 configuration error (message carries the field path),
3 I/O failure, 4 data mismatch (grids or set pairing), 5 missing stage outputs.
Every command writes the fully resolved configuration and a run manifest next
to its outputs; numeric outputs are byte-reproducible for a fixed seed.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, characterize, dataio, figures
from .config import RunConfig, config_hash, load_run_config, resolve_mode_params, save_run_config
from .errors import ConfigError, GridMismatchError, PairingError
from .modes import TraceGrid, background_window, mode_shape, optimize_mode
from .simulator import (
    default_grid,
    derive_set_seed,
    mode_support,
    simulate_dataset,
    simulate_dephasing_data,
    simulate_thermal_sweep,
)
from .tomography import (
    QuadratureDataset,
    calibrate_gain,
    calibrated_values,
    fit_diagonal,
    histogram_model_table,
    reconstruct_with_errors,
)
from .modes import extract_quadratures


class MissingStageError(Exception):
    """A required output of an earlier pipeline stage is absent."""

    def __init__(self, missing):
        super().__init__("missing stage outputs: " + ", ".join(str(m) for m in missing))
        self.missing = list(missing)


QUBIT_FREQ_NOTE = (
    "qubit_freq_ghz is metadata only; two inconsistent recorded values exist "
    "(3.495 and 4.385 GHz) and no computation depends on either"
)


def _load_config(args) -> RunConfig:
    cfg = load_run_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "gain_db", None) is not None:
        cfg = replace(cfg, chain=replace(cfg.chain, g_jpa_db=args.gain_db))
    if getattr(args, "trials", None) is not None:
        cfg = replace(cfg, tomography=replace(cfg.tomography, trials_per_set=args.trials))
    if getattr(args, "sets", None) is not None:
        cfg = replace(cfg, tomography=replace(cfg.tomography, n_sets=args.sets))
    return cfg


def _start_run(cfg: RunConfig, out_dir: Path, command: str):
    out_dir.mkdir(parents=True, exist_ok=True)
    save_run_config(cfg, out_dir / "resolved_config.json")
    return {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "config_sha256": config_hash(cfg),
        "outputs": ["resolved_config.json"],
        "timings_s": {},
        "notes": [QUBIT_FREQ_NOTE],
    }


def _finish_run(manifest, out_dir: Path, t_start):
    manifest["timings_s"]["total"] = round(time.monotonic() - t_start, 3)
    dataio.write_json(out_dir / "manifest.json", manifest)


def cmd_simulate(args) -> int:
    t_start = time.monotonic()
    cfg = _load_config(args)
    out_dir = Path(args.out)
    manifest = _start_run(cfg, out_dir, f"simulate --kind {args.kind}")
    opts = cfg.tomography
    char = cfg.characterization

    if args.kind in ("photon", "control"):
        tallies = []
        for k in range(opts.n_sets):
            set_seed = derive_set_seed(cfg.seed, 2 * k if args.kind == "photon" else 2 * k + 1)
            ds = simulate_dataset(
                args.kind, opts.trials_per_set, cfg.protocol, cfg.chain, set_seed,
                keep_records=False,
            )
            stem = f"{args.kind}_set{k}"
            if args.format == "csv":
                name = f"{stem}.csv"
                dataio.write_trace_csv(out_dir / name, ds.traces, ds.grid.dt_us, ds.grid.t0_us)
            else:
                name = f"{stem}.trc"
                dataio.write_trace_matrix(out_dir / name, ds.traces, ds.grid.dt_us)
            manifest["outputs"].append(name)
            if args.emit_plots:
                qname = f"{stem}_quadratures.csv"
                dataio.write_quadratures(out_dir / qname, ds.quadratures)
                manifest["outputs"].append(qname)
            tallies.append({"set": k, "seed": set_seed, **ds.tallies})
            print(
                f"{args.kind} set {k}: retained {ds.tallies['n_retained']}/{ds.tallies['n_trials']}"
                f" ({100 * ds.retained_fraction:.1f}%)"
            )
        manifest["tallies"] = tallies

    elif args.kind == "thermal-sweep":
        rows = simulate_thermal_sweep(
            char.sweep_temperatures_mk, char.sweep_gains_db, cfg.chain,
            scatter=char.sweep_scatter, seed=cfg.seed, frequency_ghz=char.noise_source_freq_ghz,
        )
        dataio.write_table(
            out_dir / "thermal_sweep.csv",
            ["temperature_mk", "gain_db", "s_in_quanta", "s_out_arb"],
            [(r.temperature_mk, r.gain_db, r.s_in_quanta, r.s_out) for r in rows],
            comment=f"noise source at {char.noise_source_freq_ghz} GHz",
        )
        manifest["outputs"].append("thermal_sweep.csv")
        print(f"thermal sweep: {len(rows)} points over {len(char.sweep_gains_db)} gains")

    elif args.kind == "dephasing":
        rows = simulate_dephasing_data(
            char.gain_grid_db, cfg.chain.isolation_l, char.dephasing_gamma0_khz,
            cfg.protocol.kappa_khz, scatter=char.dephasing_scatter, seed=cfg.seed,
        )
        dataio.write_table(
            out_dir / "dephasing.csv",
            ["gain_db", "gamma_over_2pi_khz"],
            [(r.gain_db, r.gamma_khz) for r in rows],
        )
        manifest["outputs"].append("dephasing.csv")
        print(f"dephasing: {len(rows)} gain points")

    _finish_run(manifest, out_dir, t_start)
    return 0


def _read_trace_file(path: Path, default_t0: float):
    if not path.exists():
        raise FileNotFoundError(path)
    if path.suffix == ".csv":
        traces, dt, t0 = dataio.read_trace_csv(path)
    else:
        traces, dt = dataio.read_trace_matrix(path)
        t0 = default_t0
    return traces, TraceGrid(dt, traces.shape[1], t0)


def cmd_reconstruct(args) -> int:
    t_start = time.monotonic()
    cfg = _load_config(args)
    out_dir = Path(args.out)
    manifest = _start_run(cfg, out_dir, "reconstruct")
    protocol, chain, opts = cfg.protocol, cfg.chain, cfg.tomography

    if len(args.photon) != len(args.control):
        raise PairingError(
            f"{len(args.photon)} photon files cannot pair with {len(args.control)} control files"
        )

    photon_sets, control_sets = [], []
    grid = None
    for group, paths in (("photon", args.photon), ("control", args.control)):
        for path in paths:
            traces, file_grid = _read_trace_file(Path(path), protocol.t0_us)
            if grid is None:
                grid = file_grid
            elif file_grid != grid:
                raise GridMismatchError(f"{path}: grid {file_grid} differs from {grid}")
            (photon_sets if group == "photon" else control_sets).append(traces)

    reference = default_grid(protocol, chain)
    if grid != reference:
        raise GridMismatchError(
            f"trace grid {grid} does not match the configured grid {reference}"
        )

    params = resolve_mode_params(cfg)
    window = background_window(grid, protocol.readout_intervals_us)
    support = mode_support(grid)

    if args.mode_optimize:
        if not args.opt_photon or not args.opt_control:
            raise ConfigError("--mode-optimize", "requires --opt-photon and --opt-control files")
        opt_photon, _ = _read_trace_file(Path(args.opt_photon), protocol.t0_us)
        opt_control, _ = _read_trace_file(Path(args.opt_control), protocol.t0_us)
        result = optimize_mode(
            opt_photon, opt_control, grid, window, params,
            n_max=opts.n_max, support_us=support,
        )
        params = result.params
        dataio.write_record(
            out_dir / "optimized_mode.csv",
            {
                "rise_time_ns": params.rise_time_ns,
                "decay_rate_khz": params.decay_rate_khz,
                "jpa_bandwidth_mhz": params.jpa_bandwidth_mhz,
                "rho00": result.rho00,
                "n_evaluations": result.n_evaluations,
            },
            comment="mode parameters tuned on held-out data before reconstruction",
        )
        manifest["outputs"].append("optimized_mode.csv")
        print(
            f"mode optimization: rho00={result.rho00:.4f} after {result.n_evaluations} evaluations"
        )

    mode = mode_shape(params, grid, support_us=support)
    nbar = characterize.nbar_from_gain(chain.isolation_l, chain.g_jpa_db)

    photon_q = [
        QuadratureDataset(extract_quadratures(tr, mode, window), set_id=f"photon:{i}")
        for i, tr in enumerate(photon_sets)
    ]
    control_q = [
        QuadratureDataset(extract_quadratures(tr, mode, window), set_id=f"control:{i}")
        for i, tr in enumerate(control_sets)
    ]

    result = reconstruct_with_errors(
        photon_q, control_q, opts.n_max, nbar, method=opts.fit_method
    )
    record = result.summary_record()
    record.update(
        {
            "gain_db": chain.g_jpa_db,
            "kappa_khz": protocol.kappa_khz,
            "kappa_out_khz": protocol.kappa_out_khz,
            "nbar_backaction": nbar,
        }
    )
    dataio.write_record(out_dir / "density_matrix.csv", record, comment=QUBIT_FREQ_NOTE)
    manifest["outputs"].append("density_matrix.csv")

    # pooled per-set-calibrated values feed the histogram exports
    pooled = {}
    for name, sets, controls in (
        ("photon", photon_q, control_q),
        ("control", control_q, control_q),
    ):
        values = np.concatenate(
            [
                calibrated_values(ds, calibrate_gain(ctl, "squeezed", nbar))
                for ds, ctl in zip(sets, controls)
            ]
        )
        pooled[name] = values
    control_fit = fit_diagonal(
        QuadratureDataset(pooled["control"], calibrated=True, set_id="control:pooled"),
        calibrate_gain(control_q[0], "squeezed", nbar),
        opts.n_max,
        method=opts.fit_method,
    )
    for name, rho in (("photon", result.rho), ("control", control_fit)):
        centers, density, model = histogram_model_table(pooled[name], rho)
        fname = f"histogram_{name}.csv"
        dataio.write_table(
            out_dir / fname,
            ["bin_center_quadrature", "density", "model_density"],
            zip(centers, density, model),
        )
        manifest["outputs"].append(fname)

    if args.emit_plots:
        for fname, obj in (("mode.csv", mode), ("window.csv", window)):
            dataio.write_table(
                out_dir / fname,
                ["time_us", "amplitude_per_sqrt_us"],
                zip(grid.times(), obj.samples),
            )
            manifest["outputs"].append(fname)
        for i, ds in enumerate(photon_q + control_q):
            fname = f"quadratures_{ds.set_id.replace(':', '_')}.csv"
            dataio.write_quadratures(out_dir / fname, ds)
            manifest["outputs"].append(fname)

    pops = ", ".join(f"p{i}={p:.4f}" for i, p in enumerate(result.rho.populations))
    print(f"reconstructed ({result.n_sets} sets): {pops}")
    print(f"g2(0) = {result.g2:.4f} (+- {result.g2_stat:.4f} stat)")
    _finish_run(manifest, out_dir, t_start)
    return 0


def cmd_report(args) -> int:
    t_start = time.monotonic()
    cfg = _load_config(args)
    out_dir = Path(args.out)
    protocol, char = cfg.protocol, cfg.characterization

    missing = []
    recon_records = []
    for rec_dir in args.reconstruction:
        rec_path = Path(rec_dir) / "density_matrix.csv"
        if not rec_path.exists():
            missing.append(rec_path)
        else:
            recon_records.append((Path(rec_dir), dataio.read_record(rec_path)))
    dephasing_path = Path(args.dephasing) if args.dephasing else None
    thermal_path = Path(args.thermal) if args.thermal else None
    for path in (dephasing_path, thermal_path):
        if path is not None and not path.exists():
            missing.append(path)
    if missing:
        raise MissingStageError(missing)

    manifest = _start_run(cfg, out_dir, "report")

    _, dephasing = dataio.read_table(dephasing_path)
    backaction = characterize.fit_dephasing(dephasing[:, 0], dephasing[:, 1], protocol.kappa_khz)
    dataio.write_record(
        out_dir / "backaction_fit.csv",
        {
            "isolation_l": backaction.isolation_l,
            "isolation_l_err": backaction.isolation_err,
            "gamma0_khz": backaction.gamma0_khz,
            "gamma0_khz_err": backaction.gamma0_err_khz,
            "kappa_khz": backaction.kappa_khz,
        },
    )
    residuals = dephasing[:, 1] - backaction.gamma_khz(dephasing[:, 0])
    dataio.write_table(
        out_dir / "dephasing_residuals.csv",
        ["gain_db", "gamma_over_2pi_khz", "model_khz", "residual_khz"],
        zip(dephasing[:, 0], dephasing[:, 1], backaction.gamma_khz(dephasing[:, 0]), residuals),
    )

    _, thermal = dataio.read_table(thermal_path)
    sweep_fits = {}
    for gain in np.unique(thermal[:, 1]):
        sel = thermal[thermal[:, 1] == gain]
        sweep_fits[float(gain)] = characterize.fit_thermal_sweep(sel[:, 2], sel[:, 3])
    gains = sorted(sweep_fits)
    noise_model = characterize.fit_added_noise_model(
        gains,
        [sweep_fits[g].n_add for g in gains],
        [fit.n_add_err for fit in (sweep_fits[g] for g in gains)] if args.weighted_noise else None,
    )
    dataio.write_record(
        out_dir / "added_noise_fit.csv",
        {
            "n_jpa": noise_model.n_jpa,
            "n_jpa_err": noise_model.n_jpa_err,
            "n_hemt": noise_model.n_hemt,
            "n_hemt_err": noise_model.n_hemt_err,
            **{f"n_add_at_{g:g}db": sweep_fits[g].n_add for g in gains},
        },
    )

    grid_db = np.asarray(char.gain_grid_db)
    curve = characterize.efficiency_curve(noise_model, grid_db)
    dataio.write_table(
        out_dir / "efficiency_curve.csv",
        ["gain_db", "eta", "eta_err"],
        zip(curve.gains_db, curve.eta, curve.eta_err),
    )
    nbar_grid = [backaction.nbar(g) for g in grid_db]
    nbar_err = [backaction.nbar_err(g) for g in grid_db]
    dataio.write_table(
        out_dir / "nbar_curve.csv",
        ["gain_db", "nbar", "nbar_err"],
        zip(grid_db, nbar_grid, nbar_err),
    )
    manifest["outputs"] += [
        "backaction_fit.csv",
        "dephasing_residuals.csv",
        "added_noise_fit.csv",
        "efficiency_curve.csv",
        "nbar_curve.csv",
    ]

    from .fock import DiagonalDensityMatrix
    from .tomography import ReconstructionResult

    header = None
    rows = []
    comparisons = []
    for rec_dir, record in sorted(recon_records, key=lambda item: item[1]["gain_db"]):
        rho = DiagonalDensityMatrix.from_record(record)
        # rebuild the pieces compare_to_expectation needs from the stored record
        if rho.sys_lo is not None and rho.sys_hi is not None:
            amplified = DiagonalDensityMatrix(_amplified_from_bounds(rho))
        else:
            amplified = rho
        measured = ReconstructionResult(
            rho=rho,
            rho_amplified=amplified,
            per_set=(),
            stat_err=rho.stat_err if rho.stat_err is not None else np.zeros(rho.n_max + 1),
            sys_lo=rho.sys_lo if rho.sys_lo is not None else rho.populations,
            sys_hi=rho.sys_hi if rho.sys_hi is not None else rho.populations,
            n_sets=int(record.get("n_sets", 0)),
            g2=record.get("g2", float("nan")),
            g2_stat=record.get("g2_stat", float("nan")),
            g2_sys_lo=record.get("g2_sys_lo", float("nan")),
            g2_sys_hi=record.get("g2_sys_hi", float("nan")),
            g2_shorthand=record.get("g2_shorthand", float("nan")),
        )
        gain_db = float(record["gain_db"])
        comparison = characterize.compare_to_expectation(
            measured, record["kappa_khz"], record["kappa_out_khz"], curve, gain_db
        )
        comparisons.append(comparison)
        row = dict(record)
        row.update(comparison.to_record())
        row["nbar_fit"] = backaction.nbar(gain_db)
        row["nbar_fit_err"] = backaction.nbar_err(gain_db)
        if header is None:
            header = list(row)
        rows.append([row.get(key, float("nan")) for key in header])

    dataio.write_table(out_dir / "report.csv", header, rows, comment=QUBIT_FREQ_NOTE)
    manifest["outputs"].append("report.csv")

    if not args.no_figures:
        fig_names = _render_figures(
            out_dir, dephasing, backaction, thermal, sweep_fits, curve, grid_db,
            nbar_grid, nbar_err, recon_records, comparisons,
        )
        manifest["outputs"] += fig_names

    print(
        f"report: {len(rows)} gain points; L={backaction.isolation_l:.3e}, "
        f"Gamma0/2pi={backaction.gamma0_khz:.1f} kHz, "
        f"N_jpa={noise_model.n_jpa:.3f}, N_hemt={noise_model.n_hemt:.1f}"
    )
    _finish_run(manifest, out_dir, t_start)
    return 0


def _amplified_from_bounds(rho):
    """Recover the amplified-assumption mean from the stored systematic bounds."""
    lo, hi = rho.sys_lo, rho.sys_hi
    other = np.where(np.isclose(rho.populations, lo), hi, lo)
    total = other.sum()
    return other / total if total > 0 else rho.populations


def _render_figures(
    out_dir, dephasing, backaction, thermal, sweep_fits, curve, grid_db,
    nbar_grid, nbar_err, recon_records, comparisons,
):
    names = []
    dense = np.linspace(grid_db.min(), grid_db.max(), 200)
    figures.save_dephasing_figure(
        out_dir / "fig_dephasing.png", dephasing[:, 0], dephasing[:, 1], dense,
        backaction.gamma_khz(dense),
    )
    names.append("fig_dephasing.png")
    figures.save_nbar_figure(out_dir / "fig_nbar.png", grid_db, nbar_grid, nbar_err)
    names.append("fig_nbar.png")
    point_gains = sorted(sweep_fits)
    figures.save_efficiency_figure(
        out_dir / "fig_efficiency.png", curve.gains_db, curve.eta, curve.eta_err,
        point_gains, [characterize.efficiency_from_added_noise(sweep_fits[g].n_add) for g in point_gains],
    )
    names.append("fig_efficiency.png")
    figures.save_thermal_sweep_figure(out_dir / "fig_thermal_sweep.png", thermal, sweep_fits)
    names.append("fig_thermal_sweep.png")
    if comparisons:
        figures.save_fidelity_figure(
            out_dir / "fig_fidelity.png",
            [c.gain_db for c in comparisons],
            [c.f_ideal for c in comparisons],
            [c.f_ideal_stat for c in comparisons],
            [c.f_expected for c in comparisons],
            [c.f_expected_stat for c in comparisons],
        )
        names.append("fig_fidelity.png")
    for rec_dir, record in recon_records:
        tag = f"{record['gain_db']:g}db"
        figures.save_density_matrix_figure(
            out_dir / f"fig_density_matrix_{tag}.png", record,
            title=f"Diagonal populations at {record['gain_db']:g} dB",
        )
        names.append(f"fig_density_matrix_{tag}.png")
        hist_path = rec_dir / "histogram_photon.csv"
        if hist_path.exists():
            _, table = dataio.read_table(hist_path)
            figures.save_histogram_figure(
                out_dir / f"fig_histogram_{tag}.png", table[:, 0], table[:, 1], table[:, 2],
                title=f"Photon-set quadrature histogram at {record['gain_db']:g} dB",
            )
            names.append(f"fig_histogram_{tag}.png")
    return names


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="photonchain",
        description="Simulate and analyze a single-quadrature photon measurement chain.",
    )
    parser.add_argument("--version", action="version", version=f"photonchain {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate synthetic datasets")
    sim.add_argument("--config", required=True, help="run configuration (JSON)")
    sim.add_argument(
        "--kind", required=True, choices=["photon", "control", "thermal-sweep", "dephasing"]
    )
    sim.add_argument("--out", required=True, help="output directory")
    sim.add_argument("--seed", type=int, help="override the master seed")
    sim.add_argument("--gain-db", type=float, help="override the JPA gain")
    sim.add_argument("--trials", type=int, help="override trials per set")
    sim.add_argument("--sets", type=int, help="override the number of sets")
    sim.add_argument("--format", choices=["binary", "csv"], default="binary")
    sim.add_argument("--emit-plots", action="store_true", help="also write plot-ready CSVs")

    rec = sub.add_parser("reconstruct", help="extract quadratures and fit the state")
    rec.add_argument("--config", required=True)
    rec.add_argument("--out", required=True)
    rec.add_argument("--photon", nargs="+", required=True, help="photon trace files")
    rec.add_argument("--control", nargs="+", required=True, help="control trace files")
    rec.add_argument("--seed", type=int)
    rec.add_argument("--gain-db", type=float)
    rec.add_argument("--mode-optimize", action="store_true", help="tune the mode on held-out files")
    rec.add_argument("--opt-photon", help="held-out photon trace file")
    rec.add_argument("--opt-control", help="held-out control trace file")
    rec.add_argument("--emit-plots", action="store_true")

    rep = sub.add_parser("report", help="consolidate fits and comparisons")
    rep.add_argument("--config", required=True)
    rep.add_argument("--out", required=True)
    rep.add_argument("--reconstruction", nargs="+", required=True, help="reconstruction directories")
    rep.add_argument("--dephasing", required=True, help="dephasing table CSV")
    rep.add_argument("--thermal", required=True, help="thermal sweep CSV")
    rep.add_argument("--weighted-noise", action="store_true", help="weight N_add points by their errors")
    rep.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    rep.add_argument("--emit-plots", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"simulate": cmd_simulate, "reconstruct": cmd_reconstruct, "report": cmd_report}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (GridMismatchError, PairingError) as exc:
        print(f"data mismatch: {exc}", file=sys.stderr)
        return 4
    except MissingStageError as exc:
        print(str(exc), file=sys.stderr)
        return 5
    except OSError as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return 3


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
