"""File formats: trace matrices, quadrature sets, tables, records, manifests.

CSV files are self-describing (header row with units, optional leading comment
for grid metadata) and round-trip losslessly through this module because all
floats are written with ``repr``.  Trace matrices may also be stored in a
little-endian binary format:

    magic  b"IPTRC1"
    u32    n_trials
    u32    n_samples
    f64    dt (us)
    f64[]  payload, row-major (trial, sample)
"""

from __future__ import annotations

import csv
import hashlib
import json

import numpy as np

TRACE_MAGIC = b"IPTRC1"


def fmt(value) -> str:
    return repr(float(value))


def write_trace_matrix(path, traces, dt_us):
    traces = np.atleast_2d(np.asarray(traces, dtype="<f8"))
    with open(path, "wb") as fh:
        fh.write(TRACE_MAGIC)
        fh.write(np.asarray([traces.shape[0], traces.shape[1]], dtype="<u4").tobytes())
        fh.write(np.asarray([dt_us], dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(traces).tobytes())


def read_trace_matrix(path):
    with open(path, "rb") as fh:
        magic = fh.read(6)
        if magic != TRACE_MAGIC:
            raise ValueError(f"{path}: not a trace file (magic {magic!r})")
        n_trials, n_samples = np.frombuffer(fh.read(8), dtype="<u4")
        dt_us = float(np.frombuffer(fh.read(8), dtype="<f8")[0])
        payload = np.frombuffer(fh.read(int(n_trials) * int(n_samples) * 8), dtype="<f8")
    return payload.reshape(int(n_trials), int(n_samples)).copy(), dt_us


def write_trace_csv(path, traces, dt_us, t0_us=0.0):
    traces = np.atleast_2d(np.asarray(traces, dtype=float))
    times = np.arange(traces.shape[1]) * dt_us
    with open(path, "w", newline="") as fh:
        fh.write(f"# trace-grid dt_us={fmt(dt_us)} t0_us={fmt(t0_us)} n_trials={traces.shape[0]}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["trial"] + [f"v_at_{fmt(t)}us" for t in times])
        for i, row in enumerate(traces):
            writer.writerow([i] + [fmt(v) for v in row])


def read_trace_csv(path):
    with open(path, newline="") as fh:
        comment = fh.readline().strip()
        meta = dict(item.split("=") for item in comment.split()[1:] if "=" in item)
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row[1:]] for row in reader]
    dt_us = float(meta["dt_us"])
    t0_us = float(meta.get("t0_us", 0.0))
    return np.asarray(rows), dt_us, t0_us


def write_quadratures(path, dataset):
    with open(path, "w", newline="") as fh:
        units = "quadrature_units" if dataset.calibrated else "volt_sqrt_us"
        fh.write(
            f"# quadratures set_id={dataset.set_id} calibrated={int(dataset.calibrated)} units={units}\n"
        )
        fh.write("value\n")
        for v in dataset.values:
            fh.write(fmt(v) + "\n")


def read_quadratures(path):
    from .tomography import QuadratureDataset

    with open(path) as fh:
        comment = fh.readline().strip()
        meta = dict(item.split("=", 1) for item in comment.split()[1:] if "=" in item)
        next(fh)  # header row
        values = [float(line) for line in fh if line.strip()]
    return QuadratureDataset(
        np.asarray(values),
        calibrated=bool(int(meta.get("calibrated", "0"))),
        set_id=meta.get("set_id", ""),
    )


def write_record(path, record: dict, comment: str | None = None):
    """Flat key-value record as a two-column CSV."""
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["key", "value"])
        for key, value in record.items():
            writer.writerow([key, fmt(value) if isinstance(value, (int, float)) else value])


def read_record(path) -> dict:
    record = {}
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and not row[0].startswith("#")]
    for key, value in rows[1:]:
        try:
            record[key] = float(value)
        except ValueError:
            record[key] = value
    return record


def write_table(path, header, rows, comment: str | None = None):
    """Generic delimited table; header cells should carry units."""
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) if isinstance(v, (int, float, np.floating)) else v for v in row])


def read_table(path):
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and not row[0].startswith("#")]
    header = rows[0]
    data = np.asarray([[float(v) for v in row] for row in rows[1:]])
    return header, data


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config_dict) -> str:
    return hashlib.sha256(canonical_json(config_dict).encode()).hexdigest()


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)
