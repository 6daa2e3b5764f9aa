"""Binary field snapshots, CSV series and logs, YAML result files, all written atomically."""

from __future__ import annotations

import csv
import io
import os
import struct
import tempfile
from pathlib import Path

import numpy as np
import yaml

from .phase_space import PhaseGrid

SNAPSHOT_MAGIC = b"VPF1"
_HEADER = struct.Struct("<4sII5d")


class SnapshotFormatError(ValueError):
    pass


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> Path:
    """Write ``data`` to a sibling temp file and rename it over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


# --------------------------------------------------------------------------- snapshots


def encode_snapshot(f: np.ndarray, grid: PhaseGrid, time: float) -> bytes:
    grid.check_field(f, "f")
    header = _HEADER.pack(SNAPSHOT_MAGIC, grid.n_x, grid.n_v, grid.x_min, grid.x_max,
                          grid.v_min, grid.v_max, float(time))
    return header + np.ascontiguousarray(f, dtype="<f8").tobytes()


def decode_snapshot(data: bytes) -> tuple[np.ndarray, PhaseGrid, float]:
    if len(data) < _HEADER.size:
        raise SnapshotFormatError(f"snapshot truncated: {len(data)} bytes")
    magic, n_x, n_v, x_min, x_max, v_min, v_max, time = _HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC:
        raise SnapshotFormatError(f"bad magic {magic!r}")
    expected = _HEADER.size + 8 * n_x * n_v
    if len(data) != expected:
        raise SnapshotFormatError(f"expected {expected} bytes for a {n_x}x{n_v} field, got {len(data)}")
    grid = PhaseGrid(n_x, n_v, x_min, x_max, v_min, v_max)
    f = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(n_x, n_v).astype(float)
    return f, grid, time


def write_snapshot(path, f: np.ndarray, grid: PhaseGrid, time: float) -> Path:
    return atomic_write_bytes(path, encode_snapshot(f, grid, time))


def read_snapshot(path) -> tuple[np.ndarray, PhaseGrid, float]:
    return decode_snapshot(Path(path).read_bytes())


# --------------------------------------------------------------------------- CSV


def fmt(x) -> str:
    """Round-trip decimal text (17 significant digits); ``None`` becomes an empty cell."""
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def encode_csv(header: list[str], rows) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} cells, header has {len(header)}")
        writer.writerow([fmt(c) if not isinstance(c, str) else c for c in row])
    return buf.getvalue().encode()


def series_header(k_max: int) -> list[str]:
    return ["time", "electric_energy", *(f"mode_{k}" for k in range(k_max + 1))]


def optimization_log_header(modes) -> list[str]:
    return ["iteration", "J", "grad_norm", "cost_units", *(f"a_{k}" for k in modes)]


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Header and a float array (empty cells as NaN) from a CSV written by this module."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(c) if c else np.nan for c in r] for r in body]).reshape(len(body), len(header))
    return header, data


# --------------------------------------------------------------------------- result files


def encode_result(result: dict) -> bytes:
    return yaml.safe_dump(result, sort_keys=False, default_flow_style=None).encode()


def read_result(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict) or "coefficients" not in data:
        raise ValueError(f"{path}: not a result file (missing 'coefficients')")
    return data


class OutputSession:
    """Tracks files written by a command so a failure can remove all of them.

    Use as a context manager: on an exception every file written through the
    session is deleted before the exception propagates.
    """

    def __init__(self, directory) -> None:
        self.directory = Path(directory)
        self.written: list[Path] = []

    def __enter__(self) -> "OutputSession":
        self.directory.mkdir(parents=True, exist_ok=True)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc_type is not None:
            self.rollback()

    def rollback(self) -> None:
        for p in self.written:
            if p.exists():
                p.unlink()
        self.written.clear()

    def write_bytes(self, name: str, data: bytes) -> Path:
        path = atomic_write_bytes(self.directory / name, data)
        if path not in self.written:
            self.written.append(path)
        return path

    def write_csv(self, name: str, header: list[str], rows) -> Path:
        return self.write_bytes(name, encode_csv(header, rows))

    def write_snapshot(self, name: str, f: np.ndarray, grid: PhaseGrid, time: float) -> Path:
        return self.write_bytes(name, encode_snapshot(f, grid, time))

    def write_result(self, name: str, result: dict) -> Path:
        return self.write_bytes(name, encode_result(result))
