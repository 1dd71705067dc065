import json

import numpy as np
import pytest

from photonchain import dataio
from photonchain.cli import main

FAST_CONFIG = {
    "seed": 7,
    "protocol": {
        "trace_length_us": 30.0,
        "t0_us": 8.0,
        "readout_intervals_us": [[1.0, 4.0], [24.0, 28.0]],
        "p_pulse_fail": 0.2312744736858531,
    },
    "chain": {"sample_dt_us": 0.02},
    "tomography": {"n_sets": 2, "trials_per_set": 500},
    "characterization": {
        "sweep_temperatures_mk": [79.0, 200.0, 400.0, 650.0, 900.0],
        "gain_grid_db": [17.0, 21.0, 25.0, 29.0, 33.0],
    },
}


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(FAST_CONFIG))
    return path


def run(*argv):
    return main([str(a) for a in argv])


def simulate_all(config_path, tmp_path):
    base = tmp_path / "runs"
    assert run("simulate", "--config", config_path, "--kind", "photon", "--out", base / "photon") == 0
    assert run("simulate", "--config", config_path, "--kind", "control", "--out", base / "control") == 0
    assert run("simulate", "--config", config_path, "--kind", "thermal-sweep", "--out", base / "thermal") == 0
    assert run("simulate", "--config", config_path, "--kind", "dephasing", "--out", base / "dephasing") == 0
    return base


def test_full_pipeline(config_path, tmp_path, capsys):
    base = simulate_all(config_path, tmp_path)
    photon_files = sorted((base / "photon").glob("photon_set*.trc"))
    control_files = sorted((base / "control").glob("control_set*.trc"))
    assert len(photon_files) == 2 and len(control_files) == 2
    out = capsys.readouterr().out
    assert "retained" in out

    rec_dir = tmp_path / "recon"
    code = run(
        "reconstruct", "--config", config_path, "--out", rec_dir,
        "--photon", *photon_files, "--control", *control_files, "--emit-plots",
    )
    assert code == 0
    record = dataio.read_record(rec_dir / "density_matrix.csv")
    assert {"n_max", "p0", "p1", "gain_db", "g2", "f_vs_fock1"} <= set(record)
    assert (rec_dir / "histogram_photon.csv").exists()
    assert (rec_dir / "histogram_control.csv").exists()
    assert (rec_dir / "mode.csv").exists()  # --emit-plots extras
    assert (rec_dir / "resolved_config.json").exists()
    manifest = dataio.read_json(rec_dir / "manifest.json")
    assert manifest["seed"] == 7 and "density_matrix.csv" in manifest["outputs"]

    rep_dir = tmp_path / "report"
    code = run(
        "report", "--config", config_path, "--out", rep_dir,
        "--reconstruction", rec_dir,
        "--dephasing", base / "dephasing" / "dephasing.csv",
        "--thermal", base / "thermal" / "thermal_sweep.csv",
    )
    assert code == 0
    header, rows = dataio.read_table(rep_dir / "report.csv")
    for column in ("gain_db", "p0", "p1", "g2", "g2_sys_lo", "g2_sys_hi",
                   "eta", "nbar_fit", "f_ideal", "f_expected"):
        assert column in header
    assert rows.shape[0] == 1
    for name in ("backaction_fit.csv", "added_noise_fit.csv", "efficiency_curve.csv",
                 "nbar_curve.csv", "fig_dephasing.png", "fig_efficiency.png",
                 "fig_thermal_sweep.png", "fig_fidelity.png"):
        assert (rep_dir / name).exists(), name
    assert any(rep_dir.glob("fig_density_matrix_*.png"))
    assert any(rep_dir.glob("fig_histogram_*.png"))


def test_report_without_figures(config_path, tmp_path):
    base = simulate_all(config_path, tmp_path)
    photon_files = sorted((base / "photon").glob("*.trc"))
    control_files = sorted((base / "control").glob("*.trc"))
    rec_dir = tmp_path / "recon"
    run("reconstruct", "--config", config_path, "--out", rec_dir,
        "--photon", *photon_files, "--control", *control_files)
    rep_dir = tmp_path / "report_nofig"
    code = run(
        "report", "--config", config_path, "--out", rep_dir,
        "--reconstruction", rec_dir,
        "--dephasing", base / "dephasing" / "dephasing.csv",
        "--thermal", base / "thermal" / "thermal_sweep.csv",
        "--no-figures",
    )
    assert code == 0
    assert not list(rep_dir.glob("*.png"))
    assert (rep_dir / "report.csv").exists()

    # a rerun over the same inputs produces byte-identical numeric output
    rep_dir2 = tmp_path / "report_nofig2"
    run("report", "--config", config_path, "--out", rep_dir2,
        "--reconstruction", rec_dir,
        "--dephasing", base / "dephasing" / "dephasing.csv",
        "--thermal", base / "thermal" / "thermal_sweep.csv",
        "--no-figures")
    assert (rep_dir / "report.csv").read_bytes() == (rep_dir2 / "report.csv").read_bytes()


def test_simulate_reruns_are_byte_identical(config_path, tmp_path):
    for name in ("a", "b"):
        assert run("simulate", "--config", config_path, "--kind", "photon",
                   "--out", tmp_path / name, "--sets", 1, "--trials", 200) == 0
    a = (tmp_path / "a" / "photon_set0.trc").read_bytes()
    b = (tmp_path / "b" / "photon_set0.trc").read_bytes()
    assert a == b
    cfg_a = (tmp_path / "a" / "resolved_config.json").read_bytes()
    cfg_b = (tmp_path / "b" / "resolved_config.json").read_bytes()
    assert cfg_a == cfg_b


def test_reconstruct_reruns_are_byte_identical(config_path, tmp_path):
    base = simulate_all(config_path, tmp_path)
    photon_files = sorted((base / "photon").glob("*.trc"))
    control_files = sorted((base / "control").glob("*.trc"))
    outputs = []
    for name in ("r1", "r2"):
        run("reconstruct", "--config", config_path, "--out", tmp_path / name,
            "--photon", *photon_files, "--control", *control_files)
        outputs.append((tmp_path / name / "density_matrix.csv").read_bytes())
    assert outputs[0] == outputs[1]


def test_control_as_photon_reconstructs_vacuum(config_path, tmp_path):
    base = simulate_all(config_path, tmp_path)
    control_files = sorted((base / "control").glob("*.trc"))
    rec_dir = tmp_path / "vacuumish"
    code = run("reconstruct", "--config", config_path, "--out", rec_dir,
               "--photon", *control_files, "--control", *control_files)
    assert code == 0
    record = dataio.read_record(rec_dir / "density_matrix.csv")
    assert record["p0"] > 0.9


def test_mode_optimize_flag(config_path, tmp_path):
    base = simulate_all(config_path, tmp_path)
    photon_files = sorted((base / "photon").glob("*.trc"))
    control_files = sorted((base / "control").glob("*.trc"))
    rec_dir = tmp_path / "opt"
    code = run(
        "reconstruct", "--config", config_path, "--out", rec_dir,
        "--photon", *photon_files, "--control", *control_files,
        "--mode-optimize", "--opt-photon", photon_files[0], "--opt-control", control_files[0],
    )
    assert code == 0
    record = dataio.read_record(rec_dir / "optimized_mode.csv")
    assert {"rise_time_ns", "decay_rate_khz", "jpa_bandwidth_mhz", "rho00"} <= set(record)


def test_config_error_exit_code(config_path, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"chain": {"bogus": 1}}))
    code = run("simulate", "--config", bad, "--kind", "photon", "--out", tmp_path / "x")
    assert code == 2
    assert "chain.bogus" in capsys.readouterr().err


def test_io_error_exit_code(config_path, tmp_path):
    clash = tmp_path / "clash"
    clash.write_text("i am a file")
    code = run("simulate", "--config", config_path, "--kind", "photon", "--out", clash)
    assert code == 3
    assert run("simulate", "--config", tmp_path / "absent.json", "--kind", "photon",
               "--out", tmp_path / "y") == 3


def test_grid_mismatch_exit_code(config_path, tmp_path):
    base = simulate_all(config_path, tmp_path)
    photon_files = sorted((base / "photon").glob("*.trc"))
    control_files = sorted((base / "control").glob("*.trc"))
    # a trace file with a different sample interval cannot be reconstructed
    traces, _ = dataio.read_trace_matrix(photon_files[0])
    rogue = tmp_path / "rogue.trc"
    dataio.write_trace_matrix(rogue, traces, 0.05)
    code = run("reconstruct", "--config", config_path, "--out", tmp_path / "z",
               "--photon", rogue, photon_files[1], "--control", *control_files)
    assert code == 4
    # unequal set counts are a pairing (data mismatch) failure
    code = run("reconstruct", "--config", config_path, "--out", tmp_path / "z2",
               "--photon", *photon_files, "--control", control_files[0])
    assert code == 4


def test_missing_stage_exit_code(config_path, tmp_path, capsys):
    code = run(
        "report", "--config", config_path, "--out", tmp_path / "rep",
        "--reconstruction", tmp_path / "nowhere",
        "--dephasing", tmp_path / "no_dephasing.csv",
        "--thermal", tmp_path / "no_thermal.csv",
    )
    assert code == 5
    err = capsys.readouterr().err
    assert "no_dephasing.csv" in err and "no_thermal.csv" in err


def test_csv_trace_format(config_path, tmp_path):
    out = tmp_path / "csvrun"
    assert run("simulate", "--config", config_path, "--kind", "photon", "--out", out,
               "--sets", 1, "--trials", 50, "--format", "csv") == 0
    files = sorted(out.glob("photon_set*.csv"))
    assert files
    traces, dt, t0 = dataio.read_trace_csv(files[0])
    assert (dt, t0) == (0.02, 8.0)
    rec_dir = tmp_path / "csvrecon"
    # csv traces feed reconstruction the same way (paired with themselves as control)
    code = run("reconstruct", "--config", config_path, "--out", rec_dir,
               "--photon", files[0], files[0], "--control", files[0], files[0])
    assert code == 0
