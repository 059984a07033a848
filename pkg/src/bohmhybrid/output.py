"""CSV / JSON artifacts. Floats are written with 17 significant digits so they
round-trip exactly."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .ensemble import Ensemble


def fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % float(value)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else str(f)
    return obj


def write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=False) + "\n")


def write_csv(path: Path, header: list[str], columns: list) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = zip(*columns)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path: Path) -> dict[str, np.ndarray]:
    """Columns as float arrays; a column that does not parse as numbers stays text."""
    with path.open() as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = list(r)
    out = {}
    for i, h in enumerate(header):
        raw = [row[i] for row in rows]
        try:
            out[h] = np.array([float(v) for v in raw])
        except ValueError:
            out[h] = np.array(raw)
    return out


REPLICA_COLUMNS = ["index", "t", "X", "K", "y", "node_proximity", "boundary", "component", "psi_row"]


def write_snapshot(e: Ensemble, directory: Path, wavefunctions: bool = True) -> None:
    """Per-replica table plus one two-column (real, imag) file per stored wavefunction."""
    directory = Path(directory)
    n = e.size
    write_csv(directory / "replicas.csv", REPLICA_COLUMNS,
              [np.arange(n), np.full(n, e.time), e.X, e.K, e.y, e.node_flag, e.boundary_flag,
               e.component, e.psi_row])
    if wavefunctions:
        for row in range(e.psi_bank.shape[0]):
            amp = e.psi_bank[row]
            write_csv(directory / "wavefunctions" / f"psi_{row:05d}.csv", ["real", "imag"], [amp.real, amp.imag])


def read_snapshot(directory: Path) -> dict:
    directory = Path(directory)
    table = read_csv(directory / "replicas.csv")
    rows = table["psi_row"].astype(int)
    bank = []
    for row in range(rows.max() + 1):
        cols = read_csv(directory / "wavefunctions" / f"psi_{row:05d}.csv")
        bank.append(cols["real"] + 1j * cols["imag"])
    table["psi_bank"] = np.array(bank)
    return table
